"""Datasets: CSV ingestion, standardization, stratified folds and batches, synthetic data."""

from __future__ import annotations

import csv
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from fairgrad.errors import ContractError, DataLoadError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    sensitive: dict[str, np.ndarray]
    feature_names: list[str]

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise ContractError("features must be a 2-d matrix")
        n, d = x.shape
        if y.shape != (n,) or not np.isin(y, (0, 1)).all():
            raise ContractError("labels must be a 0/1 vector with one entry per row")
        if len(self.feature_names) != d:
            raise ContractError("feature_names must have one entry per column")
        if not np.all(np.isfinite(x)):
            raise ContractError("features must be finite")
        sens = {}
        for name, col in self.sensitive.items():
            col = np.asarray(col)
            if col.shape != (n,) or not np.isin(col, (0, 1)).all():
                raise ContractError(f"sensitive attribute {name!r} must be a 0/1 vector of length {n}")
            sens[name] = col.astype(int)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(int))
        object.__setattr__(self, "sensitive", sens)
        object.__setattr__(self, "feature_names", list(self.feature_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def check_groups(self) -> None:
        """Raise unless every sensitive attribute has both groups present."""
        for name, col in self.sensitive.items():
            if np.unique(col).size < 2:
                raise ContractError(f"sensitive attribute {name!r} has a single group")

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            {k: v[idx] for k, v in self.sensitive.items()},
            self.feature_names,
        )

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.labels, self.sensitive, self.feature_names)

    def strata(self) -> np.ndarray:
        """Integer stratum id from label x every sensitive attribute."""
        key = self.labels.copy()
        for col in self.sensitive.values():
            key = key * 2 + col
        return key


# --- CSV ---------------------------------------------------------------------


@dataclass
class SensitiveColumn:
    column: str
    # raw value mapped to group a (0); anything else is group b. None means 0/1 coded.
    group_a_value: str | None = None


@dataclass
class CsvSchema:
    label: str
    sensitive: dict[str, SensitiveColumn]
    features: list[str] | str = "rest"

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "CsvSchema":
        if "label" not in cfg:
            raise DataLoadError("schema is missing the 'label' key")
        sens = {}
        for name, entry in (cfg.get("sensitive") or {}).items():
            if not isinstance(entry, Mapping) or "column" not in entry:
                raise DataLoadError(f"schema entry sensitive.{name} needs a 'column' key")
            a_val = entry.get("group_a_value")
            sens[name] = SensitiveColumn(str(entry["column"]), None if a_val is None else str(a_val))
        feats = cfg.get("features", "rest")
        if feats != "rest" and not (isinstance(feats, list) and all(isinstance(f, str) for f in feats)):
            raise DataLoadError("schema 'features' must be \"rest\" or a list of column names")
        return cls(str(cfg["label"]), sens, feats)

    def to_mapping(self) -> dict:
        sens = {}
        for name, s in self.sensitive.items():
            sens[name] = {"column": s.column}
            if s.group_a_value is not None:
                sens[name]["group_a_value"] = s.group_a_value
        return {"label": self.label, "sensitive": sens, "features": self.features}


def load_schema(path) -> CsvSchema:
    """Read a TOML schema, e.g.::

        label = "outcome"
        features = "rest"
        sensitive.race.column = "race"
        sensitive.race.group_a_value = "White"
    """
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise DataLoadError(f"{path}: invalid schema file: {exc}") from exc
    return CsvSchema.from_mapping(cfg)


def default_schema(attributes: Sequence[str]) -> CsvSchema:
    """Schema matching files produced by :func:`write_csv`."""
    return CsvSchema("label", {a: SensitiveColumn(a) for a in attributes}, "rest")


def load_csv(path, schema: CsvSchema) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataLoadError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    col_index = {name: i for i, name in enumerate(header)}
    used = [schema.label] + [s.column for s in schema.sensitive.values()]
    if schema.features == "rest":
        feature_cols = [c for c in header if c not in used]
    else:
        feature_cols = list(schema.features)
    for c in used + feature_cols:
        if c not in col_index:
            raise DataLoadError(f"{path}: missing column {c!r}")

    n = len(rows)
    x = np.empty((n, len(feature_cols)))
    y = np.empty(n, dtype=int)
    sens = {name: np.empty(n, dtype=int) for name in schema.sensitive}
    for r, row in enumerate(rows):
        line = r + 2  # 1-based, after the header
        if len(row) != len(header):
            raise DataLoadError(f"{path}: row {line} has {len(row)} fields, expected {len(header)}")
        y[r] = _parse_binary(row[col_index[schema.label]], path, line, schema.label)
        for name, s in schema.sensitive.items():
            raw = row[col_index[s.column]]
            if s.group_a_value is None:
                sens[name][r] = _parse_binary(raw, path, line, s.column)
            else:
                sens[name][r] = 0 if raw.strip() == s.group_a_value else 1
        for j, c in enumerate(feature_cols):
            raw = row[col_index[c]]
            try:
                x[r, j] = float(raw)
            except ValueError:
                raise DataLoadError(f"{path}: row {line}, column {c!r}: non-numeric value {raw!r}") from None
            if not math.isfinite(x[r, j]):
                raise DataLoadError(f"{path}: row {line}, column {c!r}: non-finite value {raw!r}")

    for name, col in sens.items():
        if n and np.unique(col).size < 2:
            raise DataLoadError(f"{path}: sensitive attribute {name!r} has a single group")
    return Dataset(x, y, sens, feature_cols)


def _parse_binary(raw: str, path, line: int, column: str) -> int:
    s = raw.strip()
    try:
        v = float(s)
    except ValueError:
        v = None
    if v not in (0.0, 1.0):
        raise DataLoadError(f"{path}: row {line}, column {column!r}: expected 0 or 1, got {raw!r}")
    return int(v)


def write_csv(dataset: Dataset, path) -> None:
    """Write ``label, <sensitive...>, <features...>`` with lossless float formatting."""
    header = ["label", *dataset.sensitive, *dataset.feature_names]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        cols = list(dataset.sensitive.values())
        for i in range(dataset.n):
            w.writerow(
                [int(dataset.labels[i])]
                + [int(c[i]) for c in cols]
                + [repr(float(v)) for v in dataset.features[i]]
            )


# --- standardization ---------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # population std; 0 for constant columns

    def apply(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float) - self.mean
        scale = np.where(self.std > 0, self.std, 1.0)
        return x / scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def fit_standardizer(features) -> Standardizer:
    x = np.asarray(features, dtype=float)
    if x.shape[0] < 2:
        raise ContractError("standardization needs at least 2 rows")
    return Standardizer(x.mean(axis=0), x.std(axis=0))


def standardize(train: Dataset) -> tuple[Dataset, Standardizer]:
    st = fit_standardizer(train.features)
    return train.with_features(st.apply(train.features)), st


# --- folds and batches -------------------------------------------------------


def stratified_kfold(dataset: Dataset, k: int, seed: int) -> np.ndarray:
    """Fold id in ``[0, k)`` for every sample.

    Strata are label x all sensitive attributes. Each stratum is shuffled and
    dealt round-robin; the dealing position carries over between strata so
    fold sizes stay within one of each other overall.
    """
    if k < 2:
        raise ContractError("k must be at least 2")
    if dataset.n < k:
        raise ContractError(f"cannot split {dataset.n} samples into {k} nonempty folds")
    strata = dataset.strata()
    keys, counts = np.unique(strata, return_counts=True)
    if counts.min() < k:
        warnings.warn(
            f"smallest stratum has {counts.min()} samples < k={k}; some folds will lack that stratum",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    folds = np.empty(dataset.n, dtype=int)
    offset = 0
    for key in keys:
        idx = rng.permutation(np.flatnonzero(strata == key))
        folds[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return folds


def stratified_batches(dataset: Dataset, batch_size: int | None, seed: int) -> list[np.ndarray]:
    """One epoch of index batches; ``batch_size=None`` means a single full batch.

    Batches are built so that each contains every (label, group) cell of every
    sensitive attribute. When that cannot be achieved the whole epoch falls
    back to a single full batch, with a warning.
    """
    all_idx = np.arange(dataset.n)
    if batch_size is None or batch_size >= dataset.n:
        return [all_idx]
    if batch_size < 1:
        raise ContractError("batch_size must be positive")
    n_batches = math.ceil(dataset.n / batch_size)

    cells = [
        (dataset.labels == cls) & (col == g)
        for col in dataset.sensitive.values()
        for cls in (0, 1)
        for g in (0, 1)
    ]
    smallest = min((int(c.sum()) for c in cells if c.any()), default=dataset.n)
    if smallest < n_batches:
        warnings.warn(
            f"a (label, group) cell has {smallest} samples < {n_batches} batches; using full batch",
            stacklevel=2,
        )
        return [all_idx]

    rng = np.random.default_rng(seed)
    strata = dataset.strata()
    batch_of = np.empty(dataset.n, dtype=int)
    offset = 0
    for key in np.unique(strata):
        idx = rng.permutation(np.flatnonzero(strata == key))
        batch_of[idx] = (offset + np.arange(idx.size)) % n_batches
        offset = (offset + idx.size) % n_batches
    order = rng.permutation(dataset.n)
    batches = [order[batch_of[order] == b] for b in range(n_batches)]

    for b in batches:
        for cell in cells:
            if cell.any() and not cell[b].any():
                warnings.warn("could not cover every (label, group) cell in each batch; using full batch",
                              stacklevel=2)
                return [all_idx]
    return batches


# --- synthetic data ----------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Parameters of the biased synthetic generator.

    Latent features are standard normal and labels come from a logistic
    ground-truth model on them. For each sensitive attribute, members of
    group b have every observed feature shifted by ``shift[attr]`` and their
    labels flipped with probability ``label_noise[attr][1]`` (group a uses
    ``label_noise[attr][0]``). By default only positive labels are flipped,
    modelling under-recorded outcomes; ``noise_mode="symmetric"`` flips either
    class. The intercept is tuned so that the expected observed positive rate
    equals ``prevalence``.
    """

    n: int = 4000
    d: int = 10
    group_prob: dict[str, float] = field(default_factory=lambda: {"race": 0.17, "sex": 0.4})
    label_noise: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"race": (0.0, 0.0), "sex": (0.0, 0.0)}
    )
    shift: dict[str, float] = field(default_factory=lambda: {"race": 0.0, "sex": 0.0})
    prevalence: float = 0.3
    signal: float = 2.5  # norm of the ground-truth weight vector
    base_weights_seed: int | None = None
    # "under": only positives are flipped (recorded as negatives); "symmetric": either class
    noise_mode: str = "under"

    def validate(self) -> None:
        if self.n < 1 or self.d < 1:
            raise ContractError("n and d must be positive")
        if not 0 < self.prevalence < 1:
            raise ContractError("prevalence must lie in (0, 1)")
        if self.noise_mode not in ("under", "symmetric"):
            raise ContractError(f"unknown noise_mode {self.noise_mode!r}")
        if not self.group_prob:
            raise ContractError("at least one sensitive attribute is required")
        for name, p in self.group_prob.items():
            if not 0 < p < 1:
                raise ContractError(f"group_prob[{name!r}] must lie in (0, 1)")
        for name, rates in self.label_noise.items():
            if name not in self.group_prob:
                raise ContractError(f"label_noise names unknown attribute {name!r}")
            if len(rates) != 2 or not all(0 <= r < 0.5 for r in rates):
                raise ContractError(f"label_noise[{name!r}] must be two rates in [0, 0.5)")
        for name in self.shift:
            if name not in self.group_prob:
                raise ContractError(f"shift names unknown attribute {name!r}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "group_prob": dict(self.group_prob),
            "label_noise": {k: list(v) for k, v in self.label_noise.items()},
            "shift": dict(self.shift),
            "prevalence": self.prevalence,
            "signal": self.signal,
            "base_weights_seed": self.base_weights_seed,
            "noise_mode": self.noise_mode,
        }


def _observed_positive_prob(q: np.ndarray, flips: list[np.ndarray], mode: str) -> np.ndarray:
    for r in flips:
        q = q * (1 - r) + (1 - q) * r if mode == "symmetric" else q * (1 - r)
    return q


def gen_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(seed)
    w_seed = seed if spec.base_weights_seed is None else spec.base_weights_seed
    w = np.random.default_rng([w_seed, 1]).standard_normal(spec.d)
    w *= spec.signal / np.linalg.norm(w)
    # orient the ground truth so a positive feature shift raises apparent risk
    if w.sum() < 0:
        w = -w

    attrs = list(spec.group_prob)
    sens = {a: (rng.random(spec.n) < spec.group_prob[a]).astype(int) for a in attrs}
    z = rng.standard_normal((spec.n, spec.d))
    score = z @ w
    flips = []
    for a in attrs:
        rate_a, rate_b = spec.label_noise.get(a, (0.0, 0.0))
        flips.append(np.where(sens[a] == 1, rate_b, rate_a))

    def excess(c):
        return _observed_positive_prob(expit(score + c), flips, spec.noise_mode).mean() - spec.prevalence

    lo, hi = -50.0, 50.0
    if excess(lo) > 0 or excess(hi) < 0:
        raise ContractError(f"prevalence {spec.prevalence} is unreachable under the given label noise")
    intercept = brentq(excess, lo, hi, xtol=1e-12)

    y = (rng.random(spec.n) < expit(score + intercept)).astype(int)
    for r in flips:
        flip = rng.random(spec.n) < r
        if spec.noise_mode == "under":
            flip &= y == 1
        y = np.where(flip, 1 - y, y)

    x = z.copy()
    for a in attrs:
        x += spec.shift.get(a, 0.0) * sens[a][:, None]
    names = [f"x{j}" for j in range(spec.d)]
    return Dataset(x, y, sens, names)
