"""Exception types shared across the package."""


class TabDistillError(Exception):
    """Base class for all package errors."""


class DataError(TabDistillError):
    """Malformed or unusable input data (bad CSV cell, empty split, ...)."""


class SchemaMismatchError(TabDistillError):
    """Rows do not conform to the schema a model was trained on."""


class TrainingError(TabDistillError):
    """A learner could not be trained on the given inputs."""


class SerializationError(TabDistillError):
    """A persisted document is corrupt or has an unknown version."""


class VerificationError(TabDistillError):
    """A numerical verification suite reported a failure."""
