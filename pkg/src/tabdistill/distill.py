"""The distillation engine: turn teacher scores into training targets,
drop rows the teacher confidently contradicts, and run multi-generation
self-distillation with from-last or from-ensemble teachers.

Per generation the loop scores the full training set with the current
teacher, filters rows whose score-label gap reaches the threshold, blends
teacher scores with the original labels into per-row weight pairs, and
trains the next model on the result. Nothing aborts on a non-improving
generation; the running ensemble is what carries the gains.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from tabdistill.errors import DataError
from tabdistill.learners import LearnerSpec, TrainingTarget, train
from tabdistill.metrics import roc_auc
from tabdistill.tabular import Dataset

DEFAULT_BETA = 0.7
DEFAULT_DENOISE_THRESHOLD = 0.99
DEFAULT_GENERATIONS = 5


@dataclass(frozen=True)
class DistillConfig:
    beta: float = DEFAULT_BETA
    denoise_threshold: float = DEFAULT_DENOISE_THRESHOLD
    generations: int = DEFAULT_GENERATIONS
    teacher_mode: str = "from_last"
    target_mode: str = "row_weighted"
    include_original: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise DataError("beta must lie in [0, 1]")
        if not (0.0 < self.denoise_threshold <= 1.0):
            raise DataError("denoise_threshold must lie in (0, 1]")
        if self.generations < 1:
            raise DataError("need at least one generation")
        if self.teacher_mode not in ("from_last", "from_ensemble"):
            raise DataError(f"unknown teacher_mode {self.teacher_mode!r}")
        if self.target_mode not in ("row_weighted", "label_sampled"):
            raise DataError(f"unknown target_mode {self.target_mode!r}")

    def to_json_dict(self) -> dict:
        return {
            "beta": self.beta,
            "denoise_threshold": self.denoise_threshold,
            "generations": self.generations,
            "teacher_mode": self.teacher_mode,
            "target_mode": self.target_mode,
            "include_original": self.include_original,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "DistillConfig":
        return cls(**doc)


@dataclass
class GenerationRecord:
    index: int
    teacher: str
    rows_kept: int
    rows_dropped: int
    individual_auc: float
    ensemble_auc: float

    def as_dict(self) -> dict:
        return {
            "gen": self.index,
            "teacher": self.teacher,
            "rows_kept": self.rows_kept,
            "rows_dropped": self.rows_dropped,
            "individual_auc": self.individual_auc,
            "ensemble_auc": self.ensemble_auc,
        }


def make_targets(train_ds: Dataset, teacher_scores, beta: float) -> TrainingTarget:
    """Blend teacher belief with ground truth into per-row weight pairs:
    w_pos = beta * f(x) + (1 - beta) * y and w_neg = 1 - w_pos.

    beta = 0 reproduces the original hard labels, beta = 1 trains purely on
    the teacher's scores.
    """
    scores = np.asarray(teacher_scores, dtype=np.float64)
    if scores.shape != (train_ds.n_rows,):
        raise DataError(f"got {scores.shape[0] if scores.ndim else 0} scores "
                        f"for {train_ds.n_rows} rows")
    if (scores < 0).any() or (scores > 1).any():
        raise DataError("teacher scores must lie in [0, 1]")
    if not (0.0 <= beta <= 1.0):
        raise DataError("beta must lie in [0, 1]")
    y = train_ds.labels.astype(np.float64)
    w_pos = beta * scores + (1.0 - beta) * y
    # the pair sums to 1 by construction; computing w_neg as the complement
    # keeps that exact in floating point
    w_neg = 1.0 - w_pos
    return TrainingTarget.weighted(w_pos, w_neg)


def targets_to_sampled(target: TrainingTarget, seed: int) -> TrainingTarget:
    """Replace weight pairs by one Bernoulli(w_pos / (w_pos + w_neg)) draw
    per row; deterministic per seed."""
    if target.mode != "row_weighted":
        raise DataError("only row_weighted targets can be sampled")
    total = target.w_pos + target.w_neg
    if (total <= 0).any():
        raise DataError("every row needs w_pos + w_neg > 0")
    prob = target.w_pos / total
    u = np.random.default_rng(seed).random(len(prob))
    return TrainingTarget.from_sampled((u < prob).astype(np.int64))


def denoise(train_ds: Dataset, teacher_scores, threshold: float) -> tuple[Dataset, np.ndarray]:
    """Keep row i iff |f(x_i) - y_i| < threshold; returns the surviving
    dataset (row ids intact) and the dropped row ids.

    A threshold of 1 keeps every row. Raises when nothing survives so the
    caller can decide whether the threshold was too aggressive.
    """
    if not (0.0 < threshold <= 1.0):
        raise DataError("threshold must lie in (0, 1]")
    scores = np.asarray(teacher_scores, dtype=np.float64)
    if scores.shape != (train_ds.n_rows,):
        raise DataError("scores must align with rows")
    gap = np.abs(scores - train_ds.labels.astype(np.float64))
    keep = gap < threshold
    if not keep.any():
        raise DataError(f"denoise threshold {threshold} dropped every row")
    dropped_ids = train_ds.row_ids[~keep]
    return train_ds.take(np.flatnonzero(keep)), dropped_ids


def _append_original(distilled: Dataset, target: TrainingTarget,
                     original: Dataset) -> tuple[Dataset, TrainingTarget]:
    """Stack the original hard-label rows under the distilled rows. The
    appended block gets fresh row ids to keep the id-uniqueness invariant."""
    offset = int(max(distilled.row_ids.max(), original.row_ids.max())) + 1
    arrays = tuple(np.concatenate([a, b]) for a, b in
                   zip(distilled.feature_arrays, original.feature_arrays))
    combined = Dataset(
        schema=distilled.schema,
        feature_arrays=arrays,
        labels=np.concatenate([distilled.labels, original.labels]),
        row_ids=np.concatenate([distilled.row_ids, original.row_ids + offset]),
    )
    w_pos, w_neg = target.w_pos, target.w_neg
    y = original.labels.astype(np.float64)
    if target.mode == "label_sampled":
        z = target.sampled
        combined_target = TrainingTarget.from_sampled(
            np.concatenate([z, original.labels]))
    else:
        combined_target = TrainingTarget.weighted(
            np.concatenate([w_pos, y]), np.concatenate([w_neg, 1.0 - y]))
    return combined, combined_target


def _ensemble_scores(models: Sequence, rows: Dataset) -> np.ndarray:
    preds = np.stack([m.predict(rows) for m in models])
    return preds.mean(axis=0)


def run_generations(spec: LearnerSpec, train_ds: Dataset, valid: Optional[Dataset],
                    test: Dataset, cfg: DistillConfig,
                    ) -> tuple[list[GenerationRecord], list]:
    """Run the self-distillation chain: generation 0 trains on hard labels,
    each later generation trains on denoised, beta-mixed teacher scores.

    Teacher scores come from the previous model (from_last) or the uniform
    average of all prior models (from_ensemble). Records carry per-
    generation individual and running-ensemble test AUC plus the denoise
    bookkeeping; record count is always generations + 1.
    """
    records: list[GenerationRecord] = []
    models: list = []

    def spec_for(gen: int) -> LearnerSpec:
        return LearnerSpec(spec.kind, dict(spec.params), seed=spec.seed + cfg.seed + gen)

    teacher_model = train(spec_for(0), train_ds, TrainingTarget.hard(), valid)
    models.append(teacher_model)
    test_preds = [teacher_model.predict(test)]
    auc0 = float(roc_auc(test_preds[0], test.labels))
    records.append(GenerationRecord(
        index=0, teacher="hard_labels", rows_kept=train_ds.n_rows, rows_dropped=0,
        individual_auc=auc0, ensemble_auc=auc0))

    for gen in range(1, cfg.generations + 1):
        if cfg.teacher_mode == "from_last":
            teacher_desc = f"model_{gen - 1}"
            scores = models[-1].predict(train_ds)
        else:
            teacher_desc = f"ensemble_0..{gen - 1}"
            scores = _ensemble_scores(models, train_ds)

        kept, dropped_ids = denoise(train_ds, scores, cfg.denoise_threshold)
        kept_mask = np.isin(train_ds.row_ids, kept.row_ids)
        target = make_targets(kept, scores[kept_mask], cfg.beta)
        if cfg.target_mode == "label_sampled":
            target = targets_to_sampled(target, seed=cfg.seed + gen)
        train_input = kept
        if cfg.include_original:
            train_input, target = _append_original(kept, target, train_ds)

        model = train(spec_for(gen), train_input, target, valid)
        models.append(model)
        test_preds.append(model.predict(test))
        individual = float(roc_auc(test_preds[-1], test.labels))
        running = float(roc_auc(np.mean(test_preds, axis=0), test.labels))
        records.append(GenerationRecord(
            index=gen, teacher=teacher_desc, rows_kept=kept.n_rows,
            rows_dropped=len(dropped_ids), individual_auc=individual,
            ensemble_auc=running))

    return records, models


def write_ledger_csv(records: Sequence[GenerationRecord], path: str | Path) -> None:
    """Generation ledger in the usual table layout: one row per generation
    with individual and running-ensemble AUC plus denoise bookkeeping."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gen", "individual_auc", "ensemble_auc",
                         "rows_kept", "rows_dropped"])
        for rec in records:
            writer.writerow([rec.index, repr(rec.individual_auc),
                             repr(rec.ensemble_auc), rec.rows_kept, rec.rows_dropped])
