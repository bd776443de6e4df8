"""Training loops (vanilla, scalarized, FairGrad) and cross-validation."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from fairgrad.data import Dataset, Standardizer, standardize, stratified_batches, stratified_kfold
from fairgrad.errors import ConfigError, ContractError, TrainingError, UndefinedRateError
from fairgrad.losses import bce_grad, eod_grad
from fairgrad.metrics import MetricsReport, evaluate
from fairgrad.model import ModelParams, predict_proba
from fairgrad.reconcile import PRIMARY, TaskGradient, aggregate, fairness_task_id, reconcile_gradients

log = logging.getLogger(__name__)

_INIT_STREAM = 0x1A17
_BATCH_STREAM = 0xBA7C


@dataclass
class TrainConfig:
    eta: float = 0.1
    epochs: int = 2000
    batch_size: int | None = None  # None = full batch
    tau: float = 0.5
    master_seed: int = 0
    # None means every sensitive attribute of the dataset; [] means no fairness tasks
    fairness_attributes: list[str] | None = None
    scalarization_weights: list[float] | None = None
    init: str = "zeros"  # "zeros" | "gaussian"
    init_sigma: float = 0.01

    def validate(self) -> None:
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not 0 <= self.tau <= 1:
            raise ConfigError("tau must lie in [0, 1]")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")
        if self.init not in ("zeros", "gaussian"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.scalarization_weights is not None:
            w = self.scalarization_weights
            if any(x < 0 for x in w) or not any(x > 0 for x in w):
                raise ConfigError("scalarization weights must be nonnegative and not all zero")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    """Optional side channel filled in by the training functions."""

    keep_trajectory: bool = False
    steps: int = 0
    skipped: dict[str, int] = field(default_factory=dict)
    trajectory: list[np.ndarray] = field(default_factory=list)


def _attributes(dataset: Dataset, config: TrainConfig) -> list[str]:
    attrs = list(dataset.sensitive) if config.fairness_attributes is None else list(config.fairness_attributes)
    missing = [a for a in attrs if a not in dataset.sensitive]
    if missing:
        raise ConfigError(f"fairness attributes not in dataset: {missing}")
    return attrs


def _init_params(d: int, config: TrainConfig) -> ModelParams:
    if config.init == "zeros":
        return ModelParams.zeros(d)
    rng = np.random.default_rng([config.master_seed, _INIT_STREAM])
    return ModelParams.from_vector(config.init_sigma * rng.standard_normal(d + 1))


def _fit(
    dataset: Dataset,
    config: TrainConfig,
    direction: Callable[[ModelParams, Dataset, tuple[int, int, int], TrainLog], np.ndarray],
    record: TrainLog | None,
) -> ModelParams:
    config.validate()
    record = TrainLog() if record is None else record
    params = _init_params(dataset.d, config)
    if record.keep_trajectory:
        record.trajectory.append(params.to_vector())
    step = 0
    for epoch in range(config.epochs):
        if config.batch_size is None:
            batches = [None]
        else:
            batches = stratified_batches(dataset, config.batch_size, seed=[config.master_seed, _BATCH_STREAM, epoch])
        for idx in batches:
            batch = dataset if idx is None else dataset.subset(idx)
            try:
                delta = direction(params, batch, (config.master_seed, epoch, step), record)
            except ContractError as exc:
                raise TrainingError(f"non-finite gradient at epoch {epoch}, step {step}: {exc}") from exc
            with np.errstate(over="ignore", invalid="ignore"):
                vec = params.to_vector() - config.eta * delta
            if not np.all(np.isfinite(vec)):
                raise TrainingError(f"parameters diverged at epoch {epoch}, step {step}")
            params = ModelParams.from_vector(vec)
            step += 1
            if record.keep_trajectory:
                record.trajectory.append(vec)
    record.steps = step
    return params


def _task_gradients(params, batch, attrs, record) -> list[TaskGradient]:
    grads = [TaskGradient(PRIMARY, bce_grad(params, batch.features, batch.labels))]
    for a in attrs:
        try:
            g = eod_grad(params, batch.features, batch.labels, batch.sensitive[a])
        except UndefinedRateError:
            tid = fairness_task_id(a)
            record.skipped[tid] = record.skipped.get(tid, 0) + 1
            continue
        grads.append(TaskGradient(fairness_task_id(a), g))
    return grads


def train_vanilla(dataset: Dataset, config: TrainConfig, record: TrainLog | None = None) -> ModelParams:
    def direction(params, batch, _key, _rec):
        return aggregate([TaskGradient(PRIMARY, bce_grad(params, batch.features, batch.labels))])

    return _fit(dataset, config, direction, record)


def train_fairgrad(dataset: Dataset, config: TrainConfig, record: TrainLog | None = None) -> ModelParams:
    """Descend along the sum of reconciled BCE and per-attribute EOD gradients.

    The permutation stream of each step is seeded with (master_seed, epoch, step, task).
    """
    attrs = _attributes(dataset, config)

    def direction(params, batch, key, rec):
        return aggregate(reconcile_gradients(_task_gradients(params, batch, attrs, rec), key))

    return _fit(dataset, config, direction, record)


def train_scalarized(dataset: Dataset, config: TrainConfig, record: TrainLog | None = None) -> ModelParams:
    """Descend along sum_m lambda_m * grad Q_m (primary first, then attributes in order)."""
    attrs = _attributes(dataset, config)
    weights = config.scalarization_weights
    if weights is None:
        raise ConfigError("train_scalarized needs scalarization_weights")
    if len(weights) != 1 + len(attrs):
        raise ConfigError(f"expected {1 + len(attrs)} scalarization weights, got {len(weights)}")
    lam = dict(zip([PRIMARY] + [fairness_task_id(a) for a in attrs], weights))
    active = [a for a in attrs if lam[fairness_task_id(a)] > 0]

    def direction(params, batch, _key, rec):
        grads = _task_gradients(params, batch, active, rec)
        if lam[PRIMARY] == 0:
            grads = grads[1:] or [TaskGradient(PRIMARY, np.zeros(batch.d + 1))]
        return aggregate([TaskGradient(g.task_id, lam.get(g.task_id, 0.0) * g.values) for g in grads])

    return _fit(dataset, config, direction, record)


METHODS: dict[str, Callable[..., ModelParams]] = {
    "vanilla": train_vanilla,
    "fairgrad": train_fairgrad,
    "scalarized": train_scalarized,
}


# --- cross-validation --------------------------------------------------------


def fold_seed(master_seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([master_seed, fold]).generate_state(1, np.uint32)[0])


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    seed: int
    standardizer: Standardizer
    reports: dict[str, MetricsReport]
    skipped: dict[str, dict[str, int]]

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "seed": self.seed,
            "standardizer": self.standardizer.to_dict(),
            "metrics": {m: r.to_dict() for m, r in self.reports.items()},
            "skipped_fairness_steps": self.skipped,
        }


@dataclass
class MethodSummary:
    mean: dict[str, float | None]
    std: dict[str, float | None]
    n_defined: dict[str, int]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CVResult:
    methods: list[str]
    attributes: list[str]
    k: int
    folds: list[FoldResult]
    summary: dict[str, MethodSummary]

    def fold_reports(self, method: str) -> list[MetricsReport]:
        return [f.reports[method] for f in self.folds]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "attributes": self.attributes,
            "methods": {
                m: {
                    "summary": self.summary[m].to_dict(),
                    "folds": [f.reports[m].to_dict() for f in self.folds],
                }
                for m in self.methods
            },
            "folds": [f.to_dict() for f in self.folds],
        }


def _flat_metrics(r: MetricsReport) -> dict[str, float | None]:
    out = {"auc": r.auc, "sensitivity": r.sensitivity, "specificity": r.specificity}
    out.update({f"eod:{a}": v for a, v in r.eod_by_attribute.items()})
    out["pf_score"] = r.pf_score
    return out


def summarize(reports: Sequence[MetricsReport]) -> MethodSummary:
    """Mean and sample std over folds where each metric is defined."""
    flat = [_flat_metrics(r) for r in reports]
    mean, std, count = {}, {}, {}
    for key in flat[0]:
        vals = np.array([f[key] for f in flat if f[key] is not None], dtype=float)
        count[key] = int(vals.size)
        mean[key] = float(vals.mean()) if vals.size else None
        std[key] = float(vals.std(ddof=1)) if vals.size > 1 else None
    return MethodSummary(mean, std, count)


def cross_validate(
    dataset: Dataset,
    config: TrainConfig,
    k: int = 5,
    methods: Sequence[str] = ("vanilla", "fairgrad"),
    n_jobs: int = 1,
) -> CVResult:
    config.validate()
    methods = list(methods)
    if not methods:
        raise ConfigError("at least one method is required")
    if len(set(methods)) != len(methods):
        raise ConfigError(f"duplicate method names in {methods}")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown method(s) {unknown}; valid methods: {sorted(METHODS)}")
    _attributes(dataset, config)
    eval_attrs = list(dataset.sensitive)

    folds = stratified_kfold(dataset, k, config.master_seed)

    def run_fold(f: int) -> FoldResult:
        train_idx = np.flatnonzero(folds != f)
        test_idx = np.flatnonzero(folds == f)
        train, st = standardize(dataset.subset(train_idx))
        test = dataset.subset(test_idx)
        test = test.with_features(st.apply(test.features))
        seed = fold_seed(config.master_seed, f)
        fold_cfg = replace(config, master_seed=seed)
        reports, skipped = {}, {}
        for m in methods:
            rec = TrainLog()
            params = METHODS[m](train, fold_cfg, rec)
            probs = predict_proba(params, test.features)
            reports[m] = evaluate(probs, test.labels, test.sensitive, config.tau, eval_attrs)
            skipped[m] = dict(rec.skipped)
        return FoldResult(f, train.n, test.n, seed, st, reports, skipped)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run_fold, range(k)))
    else:
        results = [run_fold(f) for f in range(k)]

    summary = {m: summarize([r.reports[m] for r in results]) for m in methods}
    return CVResult(methods, eval_attrs, k, results, summary)
