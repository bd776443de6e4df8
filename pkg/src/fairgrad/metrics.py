"""Hard-decision evaluation metrics.

AUC is the Mann-Whitney statistic with half credit for ties. EOD is
``0.5 * (|TPR_a - TPR_b| + |FPR_a - FPR_b|)``. The performance-fairness
score is the harmonic mean of AUC and each ``1 - EOD``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from fairgrad.errors import ContractError, UndefinedMetricError
from fairgrad.model import predict_label


def auc(scores, labels) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise ContractError("scores and labels must have the same length")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: labels contain a single class")
    ranks = rankdata(s, method="average")
    u_stat = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def sensitivity(self) -> float | None:
        """None when there are no positives."""
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def specificity(self) -> float | None:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else None


def confusion(preds, labels) -> Confusion:
    p = np.asarray(preds).astype(int)
    y = np.asarray(labels).astype(int)
    if p.size == 0 or p.shape != y.shape:
        raise ContractError("preds and labels must be nonempty and of equal length")
    return Confusion(
        tp=int(((p == 1) & (y == 1)).sum()),
        fp=int(((p == 1) & (y == 0)).sum()),
        tn=int(((p == 0) & (y == 0)).sum()),
        fn=int(((p == 0) & (y == 1)).sum()),
    )


def confusion_and_rates(preds, labels):
    """Return ``(tp, fp, tn, fn, sensitivity, specificity)``; undefined rates are None."""
    c = confusion(preds, labels)
    return c.tp, c.fp, c.tn, c.fn, c.sensitivity, c.specificity


def group_rates(preds, labels, groups) -> tuple[float, float, float, float]:
    """Hard (TPR_a, TPR_b, FPR_a, FPR_b); groups are encoded a=0, b=1."""
    p = np.asarray(preds).astype(int)
    y = np.asarray(labels).astype(int)
    s = np.asarray(groups).astype(int)
    out = []
    for cls in (1, 0):
        for g in (0, 1):
            mask = (y == cls) & (s == g)
            if not mask.any():
                raise UndefinedMetricError(f"EOD undefined: no samples with label={cls} in group {'ab'[g]}")
            out.append(float(p[mask].mean()))
    return tuple(out)


def eod_metric(preds, labels, groups) -> float:
    tpr_a, tpr_b, fpr_a, fpr_b = group_rates(preds, labels, groups)
    return 0.5 * (abs(tpr_a - tpr_b) + abs(fpr_a - fpr_b))


def pf_score(auc_value: float, eods: Sequence[float]) -> float:
    terms = [float(auc_value)] + [1.0 - float(e) for e in eods]
    if auc_value <= 0 or any(e >= 1 for e in eods):
        raise UndefinedMetricError("P-F score undefined when AUC = 0 or any EOD = 1")
    return len(terms) / sum(1.0 / t for t in terms)


@dataclass
class MetricsReport:
    auc: float | None
    sensitivity: float | None
    specificity: float | None
    eod_by_attribute: dict[str, float | None]
    pf_score: float | None
    confusion_by_group: dict[str, dict[str, dict[str, int]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(
    probs,
    labels,
    sensitive: Mapping[str, np.ndarray],
    tau: float = 0.5,
    attributes: Sequence[str] | None = None,
) -> MetricsReport:
    """Compute every reported metric; undefined quantities become None."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels).astype(int)
    preds = predict_label(probs, tau)
    attributes = list(sensitive) if attributes is None else list(attributes)

    try:
        auc_value = auc(probs, labels)
    except UndefinedMetricError:
        auc_value = None
    c = confusion(preds, labels)

    eods: dict[str, float | None] = {}
    by_group: dict[str, dict[str, dict[str, int]]] = {}
    for name in attributes:
        groups = np.asarray(sensitive[name]).astype(int)
        try:
            eods[name] = eod_metric(preds, labels, groups)
        except UndefinedMetricError:
            eods[name] = None
        by_group[name] = {}
        for g, tag in ((0, "a"), (1, "b")):
            mask = groups == g
            if mask.any():
                by_group[name][tag] = asdict(confusion(preds[mask], labels[mask]))
            else:
                by_group[name][tag] = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}

    pf = None
    if auc_value is not None and all(e is not None for e in eods.values()):
        try:
            pf = pf_score(auc_value, list(eods.values()))
        except UndefinedMetricError:
            pf = None
    return MetricsReport(auc_value, c.sensitivity, c.specificity, eods, pf, by_group)
