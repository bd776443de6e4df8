"""Task losses and their analytic gradients.

The primary task is binary cross-entropy. Each fairness task is a soft
equalized-odds loss for one binary sensitive attribute::

    L_eod = 0.5 * (TPR_a - TPR_b)**2 + 0.5 * (FPR_a - FPR_b)**2

where hard rates are replaced by mean predicted probabilities over each
(label, group) cell. Group ``a`` is encoded 0 and group ``b`` 1.

With p_i = sigmoid(w.x_i + b) and dp_i = p_i (1 - p_i) [x_i, 1], the
gradient is

    dT * (mean_{y=1,a} dp - mean_{y=1,b} dp) + dF * (mean_{y=0,a} dp - mean_{y=0,b} dp)

with dT = TPR_a - TPR_b and dF = FPR_a - FPR_b. It is computed as a
per-sample weighted sum, the weight of sample i being +-dT/|cell| or
+-dF/|cell| according to its cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fairgrad.errors import ContractError, UndefinedRateError
from fairgrad.model import PROB_EPS, ModelParams, logits, predict_proba


@dataclass(frozen=True)
class GroupRates:
    tpr_a: float
    tpr_b: float
    fpr_a: float
    fpr_b: float

    @property
    def tpr_gap(self) -> float:
        return self.tpr_a - self.tpr_b

    @property
    def fpr_gap(self) -> float:
        return self.fpr_a - self.fpr_b


def _as_binary(v, name: str) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be a 1-d vector")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ContractError(f"{name} must contain only 0/1 values")
    return arr.astype(int)


def _cell_masks(labels, groups):
    """Masks for the four (label, group) cells in the order (pos a, pos b, neg a, neg b)."""
    y = _as_binary(labels, "labels")
    s = _as_binary(groups, "groups")
    if y.shape != s.shape:
        raise ContractError("labels and groups must have the same length")
    cells = {
        "tpr_a": (y == 1) & (s == 0),
        "tpr_b": (y == 1) & (s == 1),
        "fpr_a": (y == 0) & (s == 0),
        "fpr_b": (y == 0) & (s == 1),
    }
    empty = [name for name, mask in cells.items() if not mask.any()]
    if empty:
        raise UndefinedRateError(f"empty (class, group) cell for rate(s): {', '.join(empty)}")
    return cells


def soft_group_rates(probs, labels, groups) -> GroupRates:
    p = np.asarray(probs, dtype=float)
    cells = _cell_masks(labels, groups)
    if p.shape != cells["tpr_a"].shape:
        raise ContractError("probs, labels and groups must have the same length")
    return GroupRates(**{name: float(p[mask].mean()) for name, mask in cells.items()})


def _check_batch(features, labels):
    y = _as_binary(labels, "labels")
    if y.size == 0:
        raise ContractError("empty batch")
    if np.asarray(features).shape[0] != y.size:
        raise ContractError("features and labels disagree on the number of samples")
    return y


def bce_loss(params: ModelParams, features, labels) -> float:
    """Mean BCE with probabilities clamped to [PROB_EPS, 1 - PROB_EPS].

    Evaluated in log space (log p = -softplus(-z)) so that 1 - p does not
    lose precision for confident predictions; the clamp becomes a floor of
    log(PROB_EPS) on both log-probabilities.
    """
    y = _check_batch(features, labels)
    z = logits(params, features)
    floor = np.log(PROB_EPS)
    log_p = np.maximum(-np.logaddexp(0.0, -z), floor)
    log_1mp = np.maximum(-np.logaddexp(0.0, z), floor)
    return float(-np.mean(y * log_p + (1 - y) * log_1mp))


def bce_grad(params: ModelParams, features, labels) -> np.ndarray:
    """Gradient of the mean BCE with respect to (weights, bias)."""
    y = _check_batch(features, labels)
    x = np.asarray(features, dtype=float)
    resid = predict_proba(params, x) - y
    n = y.size
    return np.append(x.T @ resid / n, resid.sum() / n)


def eod_loss(params: ModelParams, features, labels, groups) -> float:
    _check_batch(features, labels)
    rates = soft_group_rates(predict_proba(params, features), labels, groups)
    return 0.5 * rates.tpr_gap**2 + 0.5 * rates.fpr_gap**2


def eod_grad(params: ModelParams, features, labels, groups) -> np.ndarray:
    _check_batch(features, labels)
    x = np.asarray(features, dtype=float)
    p = predict_proba(params, x)
    cells = _cell_masks(labels, groups)
    rates = GroupRates(**{name: float(p[mask].mean()) for name, mask in cells.items()})

    coef = np.zeros_like(p)
    for name, gap, sign in (
        ("tpr_a", rates.tpr_gap, 1.0),
        ("tpr_b", rates.tpr_gap, -1.0),
        ("fpr_a", rates.fpr_gap, 1.0),
        ("fpr_b", rates.fpr_gap, -1.0),
    ):
        mask = cells[name]
        coef[mask] = sign * gap / mask.sum()
    c = coef * p * (1.0 - p)
    return np.append(x.T @ c, c.sum())
