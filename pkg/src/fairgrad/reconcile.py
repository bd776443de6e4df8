"""Gradient reconciliation: conflict detection, projection and the update step.

Each task gradient v_m starts as its raw gradient u_m. The other tasks are
visited in a random order and whenever v_m . u_n < 0 the component along
u_n is removed. Projections are always taken against the *original*
gradients u_n. The adjusted gradients are summed and used in a plain
gradient-descent update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fairgrad.errors import ContractError
from fairgrad.model import ModelParams

log = logging.getLogger(__name__)

PRIMARY = "primary"


def fairness_task_id(attribute: str) -> str:
    return f"fairness:{attribute}"


@dataclass(frozen=True)
class TaskGradient:
    task_id: str
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ContractError(f"gradient for task {self.task_id!r} has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Projection:
    """One projection event, recorded when a trace list is passed in.

    ``dot_after`` is v . u_n after the projection; ``norm_v`` is |v| before it.
    """

    task: int
    against: int
    dot_after: float
    norm_v: float
    norm_u: float


def _vec(g) -> np.ndarray:
    return g.values if isinstance(g, TaskGradient) else np.asarray(g, dtype=float)


def detect_conflict(v, u) -> bool:
    v, u = _vec(v), _vec(u)
    if v.shape != u.shape:
        raise ContractError(f"gradient length mismatch: {v.shape} vs {u.shape}")
    return bool(v @ u < 0)


def project_out(v, u):
    """Remove from ``v`` its component along ``u``.

    Accepts raw vectors or TaskGradients; a TaskGradient ``v`` keeps its task id.
    """
    vv, uu = _vec(v), _vec(u)
    if vv.shape != uu.shape:
        raise ContractError(f"gradient length mismatch: {vv.shape} vs {uu.shape}")
    sq = uu @ uu
    if not sq > 0:
        raise ContractError("cannot project against a zero-norm gradient")
    out = vv - (vv @ uu) / sq * uu
    if isinstance(v, TaskGradient):
        return TaskGradient(v.task_id, out)
    return out


def _task_generators(rng, m_tasks: int):
    # an int or tuple of ints seeds one independent stream per task index
    if isinstance(rng, np.random.Generator):
        return [rng] * m_tasks
    key = [int(k) for k in (rng if isinstance(rng, (tuple, list)) else (rng,))]
    return [np.random.default_rng(key + [m]) for m in range(m_tasks)]


def reconcile_gradients(
    grads: Sequence[TaskGradient],
    rng,
    trace: list | None = None,
) -> list[TaskGradient]:
    """Resolve pairwise conflicts between task gradients.

    ``rng`` is either a ``numpy.random.Generator`` (permutations drawn from it
    in task order) or integer seed material such as ``(seed, epoch, step)``,
    from which task ``m`` gets its own stream seeded with ``(*rng, m)``.
    """
    if not grads:
        raise ContractError("need at least one task gradient")
    u = [_vec(g) for g in grads]
    length = u[0].shape
    if any(g.shape != length for g in u):
        raise ContractError("all task gradients must have the same length")

    m_tasks = len(u)
    sq_norms = [float(g @ g) for g in u]
    gens = _task_generators(rng, m_tasks)
    out = []
    for m in range(m_tasks):
        v = u[m].copy()
        others = np.array([n for n in range(m_tasks) if n != m], dtype=int)
        for n in gens[m].permutation(others):
            dot = v @ u[n]
            if not dot < 0:
                continue
            if not sq_norms[n] > 0:
                log.warning("skipping projection against zero-norm gradient of task %d", n)
                continue
            norm_before = float(np.linalg.norm(v))
            v = v - dot / sq_norms[n] * u[n]
            if trace is not None:
                trace.append(Projection(m, int(n), float(v @ u[n]), norm_before, float(np.sqrt(sq_norms[n]))))
        task_id = grads[m].task_id if isinstance(grads[m], TaskGradient) else str(m)
        out.append(TaskGradient(task_id, v))
    return out


def aggregate(adjusted: Sequence[TaskGradient]) -> np.ndarray:
    if not adjusted:
        raise ContractError("cannot aggregate an empty gradient list")
    vecs = [_vec(g) for g in adjusted]
    if any(v.shape != vecs[0].shape for v in vecs):
        raise ContractError("all gradients must have the same length")
    return np.sum(vecs, axis=0)


def fairgrad_step(params: ModelParams, grads: Sequence[TaskGradient], eta: float, rng) -> ModelParams:
    if not eta > 0:
        raise ContractError(f"learning rate must be positive, got {eta}")
    delta = aggregate(reconcile_gradients(grads, rng))
    return ModelParams.from_vector(params.to_vector() - eta * delta)
