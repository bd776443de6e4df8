"""Logistic classifier: logits, probabilities and thresholded labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from fairgrad.errors import ContractError

# probabilities are kept this far from 0 and 1 before any logarithm
PROB_EPS = 1e-12


@dataclass(frozen=True)
class ModelParams:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ContractError("model parameters must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, d: int) -> "ModelParams":
        return cls(np.zeros(d), 0.0)

    @classmethod
    def from_vector(cls, vec) -> "ModelParams":
        """Inverse of :meth:`to_vector` (weights followed by bias)."""
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-1], vec[-1])

    def to_vector(self) -> np.ndarray:
        return np.append(self.weights, self.bias)


def _check_features(params: ModelParams, features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise ContractError(
            f"feature matrix shape {x.shape} does not match parameter dimension {params.dim}"
        )
    return x


def logits(params: ModelParams, features) -> np.ndarray:
    x = _check_features(params, features)
    return x @ params.weights + params.bias


def predict_proba(params: ModelParams, features) -> np.ndarray:
    return expit(logits(params, features))


def clamp_proba(probs) -> np.ndarray:
    return np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)


def predict_label(probs, tau: float = 0.5) -> np.ndarray:
    """Hard labels; a probability equal to ``tau`` is classified positive."""
    if not 0.0 <= tau <= 1.0:
        raise ContractError(f"threshold tau must lie in [0, 1], got {tau}")
    return (np.asarray(probs, dtype=float) >= tau).astype(int)
