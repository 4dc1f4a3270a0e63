"""Prediction-averaging ensembles with Differential-Evolution weight
optimization against validation AUC, plus small-weight pruning.

The optimizer is plain DE/rand/1/bin over the weight box. The initial
population is seeded with the uniform vector and every one-hot vector, and
selection never discards an incumbent for a tie, so the final validation
objective can never fall below any single member or the plain average.
Weights whose share of the total falls under ``prune_epsilon`` are rounded
down to zero and the search reruns on the survivors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from tabdistill.errors import DataError
from tabdistill.metrics import roc_auc
from tabdistill.tabular import Dataset


@dataclass(frozen=True)
class DEConfig:
    population_size: int = 0  # 0: use 10 * number of members
    mutation_factor: float = 0.5
    crossover_rate: float = 0.9
    max_iterations: int = 200
    lower_bound: float = 0.0
    upper_bound: float = 1.0
    prune_epsilon: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.population_size and self.population_size < 4:
            raise DataError("population must have at least 4 members")
        if not (0.0 < self.mutation_factor <= 2.0):
            raise DataError("mutation factor must lie in (0, 2]")
        if not (0.0 <= self.crossover_rate <= 1.0):
            raise DataError("crossover rate must lie in [0, 1]")
        if self.prune_epsilon < 0:
            raise DataError("prune_epsilon must be nonnegative")
        if not (self.lower_bound < self.upper_bound):
            raise DataError("bounds must satisfy lower < upper")

    def to_json_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "mutation_factor": self.mutation_factor,
            "crossover_rate": self.crossover_rate,
            "max_iterations": self.max_iterations,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "prune_epsilon": self.prune_epsilon,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "DEConfig":
        return cls(**doc)


class EnsembleModel:
    """Member models blended by a normalized weighted mean of predictions."""

    def __init__(self, members: Sequence, weights: Sequence[float]):
        if len(members) == 0:
            raise DataError("ensemble needs at least one member")
        if len(members) != len(weights):
            raise DataError("one weight per member required")
        w = np.asarray(weights, dtype=np.float64)
        if (w < 0).any():
            raise DataError("weights must be nonnegative")
        if w.sum() <= 0:
            raise DataError("weights must not all be zero")
        self.members = list(members)
        self.weights = w

    def predict(self, rows) -> np.ndarray:
        preds = np.stack([m.predict(rows) for m in self.members])
        return blend(preds, self.weights)

    def to_json_dict(self, member_files: Sequence[str]) -> dict:
        if len(member_files) != len(self.members):
            raise DataError("one file reference per member required")
        return {
            "format": "tabdistill.ensemble/v1",
            "members": list(member_files),
            "weights": self.weights.tolist(),
        }


def blend(member_preds: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Normalized weighted mean over axis 0; invariant to weight scaling."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise DataError("weights must not all be zero")
    return (w[:, None] * member_preds).sum(axis=0) / total


def uniform_ensemble(members: Sequence) -> EnsembleModel:
    """All members weighted 1: the plain prediction average."""
    return EnsembleModel(members, np.ones(len(members)))


def predict_ensemble(ens: EnsembleModel, rows) -> np.ndarray:
    return ens.predict(rows)


def _de_maximize(objective: Callable[[np.ndarray], float], n_dims: int,
                 seeds: list[np.ndarray], cfg: DEConfig,
                 rng: np.random.Generator,
                 trace: Optional[list] = None) -> tuple[np.ndarray, float]:
    """DE/rand/1/bin maximization over the weight box; the supplied seed
    vectors become the first population members. Ties keep the incumbent.
    When given, ``trace`` collects the best fitness after each iteration."""
    pop_size = cfg.population_size or 10 * n_dims
    pop_size = max(pop_size, len(seeds), 4)
    lo, hi = cfg.lower_bound, cfg.upper_bound

    population = rng.uniform(lo, hi, size=(pop_size, n_dims))
    for i, seed_vec in enumerate(seeds):
        population[i] = np.clip(seed_vec, lo, hi)
    fitness = np.array([objective(p) for p in population])

    for _ in range(cfg.max_iterations):
        for i in range(pop_size):
            candidates = [j for j in range(pop_size) if j != i]
            a, b, c = rng.choice(candidates, size=3, replace=False)
            mutant = np.clip(
                population[a] + cfg.mutation_factor * (population[b] - population[c]),
                lo, hi)
            cross = rng.random(n_dims) < cfg.crossover_rate
            cross[rng.integers(n_dims)] = True
            trial = np.where(cross, mutant, population[i])
            trial_fit = objective(trial)
            if trial_fit > fitness[i]:
                population[i] = trial
                fitness[i] = trial_fit
        if trace is not None:
            trace.append(float(fitness.max()))
        if fitness.max() == fitness.min():
            break
    best = int(np.argmax(fitness))
    return population[best].copy(), float(fitness[best])


def _auc_objective(member_preds: np.ndarray, labels: np.ndarray) -> Callable:
    def objective(weights: np.ndarray) -> float:
        if weights.sum() <= 0:
            return -np.inf
        return roc_auc(blend(member_preds, weights), labels)
    return objective


def optimize_weights_detailed(ens: EnsembleModel, valid: Dataset, cfg: DEConfig,
                              ) -> tuple[EnsembleModel, dict]:
    """Like optimize_weights but also returns an audit dict with the
    pre-pruning weights and the objective bookkeeping."""
    labels = valid.labels
    if len(np.unique(labels)) < 2:
        raise DataError("validation set must contain both classes")
    member_preds = np.stack([m.predict(valid) for m in ens.members])
    m = len(ens.members)
    rng = np.random.default_rng(cfg.seed)
    objective = _auc_objective(member_preds, labels)

    if m == 1:
        auc = float(roc_auc(member_preds[0], labels))
        audit = {"pre_prune_weights": [1.0], "final_weights": [1.0],
                 "prune_rounds": 0, "validation_auc": auc,
                 "uniform_auc": auc, "member_aucs": [auc]}
        return EnsembleModel(ens.members, [1.0]), audit

    def incumbent_seeds(active: np.ndarray) -> list[np.ndarray]:
        seeds = [np.where(active, 1.0, 0.0)]  # uniform over active members
        for j in np.flatnonzero(active):
            one_hot = np.zeros(m)
            one_hot[j] = 1.0
            seeds.append(one_hot)
        return seeds

    def run(active: np.ndarray, extra_seeds: list[np.ndarray]) -> tuple[np.ndarray, float]:
        # inactive members are frozen at weight zero by searching only the
        # active coordinates
        idx = np.flatnonzero(active)
        seeds = [s[idx] for s in incumbent_seeds(active) + extra_seeds]
        sub_preds = member_preds[idx]
        sub_objective = _auc_objective(sub_preds, labels)
        best_sub, best_fit = _de_maximize(sub_objective, len(idx), seeds, cfg, rng)
        full = np.zeros(m)
        full[idx] = best_sub
        return full, best_fit

    active = np.ones(m, dtype=bool)
    best_w, best_fit = run(active, [])
    pre_prune = best_w.copy()
    prune_rounds = 0
    while active.sum() > 1:
        share = best_w / best_w.sum()
        tiny = (share < cfg.prune_epsilon) & active
        if not tiny.any():
            break
        active = active & ~tiny
        prune_rounds += 1
        best_w, best_fit = run(active, [np.where(active, best_w, 0.0)])

    # the guarantee incumbents are prune-clean by construction; never return
    # anything below them
    final_candidates = [(best_w, best_fit)]
    uniform = np.ones(m)
    final_candidates.append((uniform, objective(uniform)))
    for j in range(m):
        one_hot = np.zeros(m)
        one_hot[j] = 1.0
        final_candidates.append((one_hot, objective(one_hot)))
    winner_w, winner_fit = final_candidates[0]
    for w, fit in final_candidates[1:]:
        if fit > winner_fit:
            winner_w, winner_fit = w, fit

    audit = {
        "pre_prune_weights": pre_prune.tolist(),
        "final_weights": winner_w.tolist(),
        "prune_rounds": prune_rounds,
        "validation_auc": winner_fit,
        "uniform_auc": float(objective(np.ones(m))),
        "member_aucs": [float(roc_auc(member_preds[j], labels)) for j in range(m)],
    }
    return EnsembleModel(ens.members, winner_w), audit


def optimize_weights(ens: EnsembleModel, valid: Dataset, cfg: DEConfig) -> EnsembleModel:
    """Search nonnegative member weights maximizing validation AUC.

    Returns an ensemble whose validation objective is at least that of
    every single member and of the uniform average; shares below
    prune_epsilon are rounded down to zero with re-optimization over the
    survivors.
    """
    optimized, _ = optimize_weights_detailed(ens, valid, cfg)
    return optimized


def combine_families(family_a: Sequence, family_b: Sequence, valid: Dataset,
                     cfg: DEConfig) -> tuple[EnsembleModel, dict]:
    """Concatenate two model families (either possibly heterogeneous) and
    optimize weights over the union; the audit records which members keep
    nonzero weight."""
    members = list(family_a) + list(family_b)
    if not members:
        raise DataError("no members to combine")
    ens = uniform_ensemble(members)
    optimized, audit = optimize_weights_detailed(ens, valid, cfg)
    audit["family_sizes"] = [len(family_a), len(family_b)]
    audit["surviving_members"] = [int(j) for j in np.flatnonzero(optimized.weights > 0)]
    return optimized, audit


def save_ensemble(ens: EnsembleModel, member_files: Sequence[str], path: str | Path) -> None:
    Path(path).write_text(json.dumps(ens.to_json_dict(member_files), indent=2,
                                     sort_keys=True))
