"""End-to-end orchestration behind a declarative JSON config: ingest,
preprocess, split, per-family self-distillation, cross-family ensembling
with weight optimization, and final distillation of the optimized ensemble
into one deployment model.

The test split is touched only for final reporting; every selection
decision (early stopping, ensemble weights, best-single) uses the
validation split. Reruns with the same config and data produce
bit-identical artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from tabdistill import __version__
from tabdistill.distill import (
    DistillConfig,
    GenerationRecord,
    denoise,
    make_targets,
    run_generations,
    targets_to_sampled,
    write_ledger_csv,
)
from tabdistill.ensemble import (
    DEConfig,
    EnsembleModel,
    combine_families,
    save_ensemble,
    uniform_ensemble,
)
from tabdistill.errors import DataError, TabDistillError
from tabdistill.learners import LearnerSpec, TrainingTarget, save_model, train
from tabdistill.metrics import evaluate, roc_auc
from tabdistill.tabular import (
    Dataset,
    SplitSpec,
    apply_transform,
    ingest_csv,
    remove_constant_columns,
    split_indices,
)

# seed offsets keep the pipeline's component seeds distinct but fully
# derived from the one seed in the config
_SEED_LEARNER_A = 1000
_SEED_DISTILL_A = 2000
_SEED_LEARNER_B = 3000
_SEED_DISTILL_B = 4000
_SEED_DE = 5000
_SEED_FINAL = 6000

FAMILY_A = "a"
FAMILY_B = "b"


class StageError(TabDistillError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class FamilyConfig:
    learner: LearnerSpec
    distill: Optional[DistillConfig]  # None: train the teacher only


@dataclass(frozen=True)
class PipelineConfig:
    data_path: str
    label_column: str
    split: SplitSpec
    remove_constants: bool
    transform: Optional[str]
    family_a: FamilyConfig
    family_b: Optional[FamilyConfig]
    ensemble_opt: Optional[DEConfig]
    final_learner: LearnerSpec
    final_beta: float
    final_threshold: float
    output_dir: str
    seed: int

    @classmethod
    def from_json_dict(cls, doc: dict, base_dir: Optional[Path] = None) -> "PipelineConfig":
        seed = int(doc.get("seed", 0))
        data = doc["data"]
        split_doc = doc.get("split", {})
        split = SplitSpec(
            train_fraction=float(split_doc.get("train_fraction", 0.6)),
            valid_fraction=float(split_doc.get("valid_fraction", 0.2)),
            seed=int(split_doc.get("seed", seed)),
        )
        pre = doc.get("preprocess", {})

        def family(tag: str, learner_seed: int, distill_seed: int) -> Optional[FamilyConfig]:
            fam = doc.get("families", {}).get(tag)
            if fam is None:
                return None
            learner = LearnerSpec(
                kind=fam["learner"]["kind"],
                params=dict(fam["learner"].get("params", {})),
                seed=int(fam["learner"].get("seed", seed + learner_seed)),
            )
            distill_doc = fam.get("distill")
            distill = None
            if distill_doc is not None:
                distill_doc = dict(distill_doc)
                distill_doc.setdefault("seed", seed + distill_seed)
                distill = DistillConfig(**distill_doc)
            return FamilyConfig(learner=learner, distill=distill)

        fam_a = family(FAMILY_A, _SEED_LEARNER_A, _SEED_DISTILL_A)
        if fam_a is None:
            raise DataError('pipeline config needs families["a"]')
        fam_b = family(FAMILY_B, _SEED_LEARNER_B, _SEED_DISTILL_B)

        de_doc = doc.get("ensemble_opt")
        de_cfg = None
        if de_doc is not None:
            de_doc = dict(de_doc)
            de_doc.setdefault("seed", seed + _SEED_DE)
            de_cfg = DEConfig(**de_doc)

        final = doc.get("final_distill", {})
        final_learner_doc = final.get("learner", {"kind": "gbdt", "params": {}})
        final_learner = LearnerSpec(
            kind=final_learner_doc["kind"],
            params=dict(final_learner_doc.get("params", {})),
            seed=int(final_learner_doc.get("seed", seed + _SEED_FINAL)),
        )

        data_path = data["path"]
        if base_dir is not None and not os.path.isabs(data_path):
            data_path = str(base_dir / data_path)

        return cls(
            data_path=data_path,
            label_column=data["label_column"],
            split=split,
            remove_constants=bool(pre.get("remove_constant_columns", True)),
            transform=pre.get("transform"),
            family_a=fam_a,
            family_b=fam_b,
            ensemble_opt=de_cfg,
            final_learner=final_learner,
            final_beta=float(final.get("beta", 0.7)),
            final_threshold=float(final.get("threshold", 0.99)),
            output_dir=doc.get("output_dir", "out"),
            seed=seed,
        )

    def echo(self) -> dict:
        """Canonical config echo embedded in the report; identical configs
        hash to identical run ids."""
        def fam(f: Optional[FamilyConfig]):
            if f is None:
                return None
            return {"learner": f.learner.to_json_dict(),
                    "distill": None if f.distill is None else f.distill.to_json_dict()}
        return {
            "data": {"path": self.data_path, "label_column": self.label_column},
            "split": {"train_fraction": self.split.train_fraction,
                      "valid_fraction": self.split.valid_fraction,
                      "seed": self.split.seed},
            "preprocess": {"remove_constant_columns": self.remove_constants,
                           "transform": self.transform},
            "families": {FAMILY_A: fam(self.family_a), FAMILY_B: fam(self.family_b)},
            "ensemble_opt": None if self.ensemble_opt is None
            else self.ensemble_opt.to_json_dict(),
            "final_distill": {"learner": self.final_learner.to_json_dict(),
                              "beta": self.final_beta,
                              "threshold": self.final_threshold},
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def run_id(self) -> str:
        canon = json.dumps(self.echo(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    return PipelineConfig.from_json_dict(json.loads(path.read_text()),
                                         base_dir=path.parent)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def distill_to_deployment(ens: EnsembleModel, train_ds: Dataset,
                          target_spec: LearnerSpec, beta: float, threshold: float,
                          valid: Optional[Dataset] = None,
                          target_mode: str = "row_weighted", sample_seed: int = 0):
    """Compress an ensemble into a single model: score the training split
    with the ensemble, denoise against the original labels, beta-mix the
    scores into weight pairs, and train the deployment learner on them.

    The returned model stands alone; none of the ensemble members are
    needed to use or persist it.
    """
    scores = ens.predict(train_ds)
    kept, _ = denoise(train_ds, scores, threshold)
    kept_mask = np.isin(train_ds.row_ids, kept.row_ids)
    target = make_targets(kept, scores[kept_mask], beta)
    if target_mode == "label_sampled":
        target = targets_to_sampled(target, seed=sample_seed)
    return train(target_spec, kept, target, valid)


def _teacher_only_records(model, test: Dataset, n_train: int) -> list[GenerationRecord]:
    auc = float(roc_auc(model.predict(test), test.labels))
    return [GenerationRecord(index=0, teacher="hard_labels", rows_kept=n_train,
                             rows_dropped=0, individual_auc=auc, ensemble_auc=auc)]


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute the full workflow and persist all artifacts under
    ``output_dir/<run-id>/``. Returns the run report as a dict."""
    run_dir = Path(cfg.output_dir) / cfg.run_id()
    models_dir = run_dir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)

    stage = "ingest"
    try:
        ds = ingest_csv(cfg.data_path, cfg.label_column)

        stage = "preprocess"
        removed: list[str] = []
        if cfg.remove_constants:
            ds, removed = remove_constant_columns(ds)
        train_idx, valid_idx, test_idx = split_indices(ds.n_rows, cfg.split)
        if cfg.transform is not None:
            fit_ids = ds.row_ids[train_idx]
            ds = apply_transform(ds, cfg.transform, fit_ids)

        stage = "split"
        train_ds = ds.take(train_idx)
        valid_ds = ds.take(valid_idx)
        test_ds = ds.take(test_idx)

        families: dict[str, dict] = {}
        all_members: dict[str, list] = {}
        for tag, fam in ((FAMILY_A, cfg.family_a), (FAMILY_B, cfg.family_b)):
            if fam is None:
                continue
            stage = f"distill/{tag}"
            if fam.distill is None:
                model = train(fam.learner, train_ds, TrainingTarget.hard(), valid_ds)
                records = _teacher_only_records(model, test_ds, train_ds.n_rows)
                models = [model]
            else:
                records, models = run_generations(fam.learner, train_ds, valid_ds,
                                                  test_ds, fam.distill)
            model_files = []
            for gen, model in enumerate(models):
                name = f"{tag}_gen{gen}.json"
                save_model(model, models_dir / name)
                model_files.append(f"models/{name}")
            write_ledger_csv(records, run_dir / f"ledger_{tag}.csv")
            families[tag] = {
                "kind": fam.learner.kind,
                "ledger": [r.as_dict() for r in records],
                "model_files": model_files,
            }
            all_members[tag] = models

        stage = "ensemble"
        member_models = []
        member_refs = []  # (family tag, generation, file)
        for tag in (FAMILY_A, FAMILY_B):
            if tag in all_members:
                for gen, model in enumerate(all_members[tag]):
                    member_models.append(model)
                    member_refs.append((tag, gen, families[tag]["model_files"][gen]))

        if cfg.ensemble_opt is not None and len(member_models) > 1:
            fam_a_models = all_members.get(FAMILY_A, [])
            fam_b_models = all_members.get(FAMILY_B, [])
            optimized, audit = combine_families(fam_a_models, fam_b_models,
                                                valid_ds, cfg.ensemble_opt)
        else:
            optimized = uniform_ensemble(member_models)
            member_aucs = [float(roc_auc(m.predict(valid_ds), valid_ds.labels))
                           for m in member_models]
            uniform_auc = float(roc_auc(optimized.predict(valid_ds), valid_ds.labels))
            audit = {"pre_prune_weights": optimized.weights.tolist(),
                     "final_weights": optimized.weights.tolist(),
                     "prune_rounds": 0, "validation_auc": uniform_auc,
                     "uniform_auc": uniform_auc, "member_aucs": member_aucs}
        save_ensemble(optimized, [ref[2] for ref in member_refs],
                      run_dir / "ensemble.json")
        _write_weights_audit(run_dir / "weights_audit.csv", member_refs, audit)

        stage = "final_distill"
        final_model = distill_to_deployment(
            optimized, train_ds, cfg.final_learner, cfg.final_beta,
            cfg.final_threshold, valid_ds)
        save_model(final_model, models_dir / "final.json")

        stage = "report"
        report = _build_report(cfg, families, member_refs, audit, optimized,
                               all_members, final_model, valid_ds, test_ds)
        _atomic_write_text(run_dir / "report.json",
                           json.dumps(report, indent=2, sort_keys=True))
        return report
    except TabDistillError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(stage, exc) from exc


def _write_weights_audit(path: Path, member_refs, audit: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "generation", "model_file",
                         "pre_prune_weight", "final_weight"])
        for (tag, gen, file), pre, post in zip(
                member_refs, audit["pre_prune_weights"], audit["final_weights"]):
            writer.writerow([tag, gen, file, repr(pre), repr(post)])


def _build_report(cfg: PipelineConfig, families: dict, member_refs, audit: dict,
                  optimized: EnsembleModel, all_members: dict, final_model,
                  valid_ds: Dataset, test_ds: Dataset) -> dict:
    # baseline teacher: generation 0 of the deployment-target family when it
    # exists, otherwise family a's teacher
    baseline_tag = FAMILY_A
    for tag, fam in ((FAMILY_A, cfg.family_a), (FAMILY_B, cfg.family_b)):
        if fam is not None and fam.learner.kind == cfg.final_learner.kind:
            baseline_tag = tag
            break
    teacher_model = all_members[baseline_tag][0]

    # best single model is selected on validation, reported on test
    best_ref, best_model, best_val = None, None, -np.inf
    for (tag, gen, file), model in zip(member_refs,
                                       [m for tag in (FAMILY_A, FAMILY_B)
                                        for m in all_members.get(tag, [])]):
        val_auc = float(roc_auc(model.predict(valid_ds), valid_ds.labels))
        if val_auc > best_val:
            best_ref, best_model, best_val = (tag, gen, file), model, val_auc

    uniform = uniform_ensemble(optimized.members)

    def report_on_test(model) -> dict:
        return evaluate(model.predict(test_ds), test_ds.labels).as_dict()

    metrics = {
        "teacher": {"family": baseline_tag, **report_on_test(teacher_model)},
        "best_single": {"family": best_ref[0], "generation": best_ref[1],
                        "validation_auc": best_val, **report_on_test(best_model)},
        "uniform_ensemble": report_on_test(uniform),
        "optimized_ensemble": report_on_test(optimized),
        "final_model": report_on_test(final_model),
    }
    metrics["gain_over_teacher"] = (
        metrics["final_model"]["auc"] - metrics["teacher"]["auc"])

    return {
        "version": __version__,
        "run_id": cfg.run_id(),
        "config": cfg.echo(),
        "families": families,
        "ensemble": {
            "member_files": [ref[2] for ref in member_refs],
            "weights": optimized.weights.tolist(),
            "audit": audit,
        },
        "final_model_file": "models/final.json",
        "metrics": metrics,
    }
