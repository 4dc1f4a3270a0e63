"""Tabular binary-classification distillation toolkit.

Trains teacher/student chains by encoding teacher scores as per-row label
weights, filters rows whose teacher score contradicts the label, blends
generations into weight-optimized ensembles, and compresses the best
ensemble back into a single deployable model.
"""

__version__ = "0.1.0"

from tabdistill.errors import (
    DataError,
    SchemaMismatchError,
    SerializationError,
    TrainingError,
    VerificationError,
)

__all__ = [
    "DataError",
    "SchemaMismatchError",
    "SerializationError",
    "TrainingError",
    "VerificationError",
    "__version__",
]
