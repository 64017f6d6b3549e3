"""Error and information metrics for comparing fitted and reference models.

Every metric accepts dense arrays where cheap and TTNS objects where the
state space is intractable; the method actually used is recorded in the
report rows the experiment harness emits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DiscreteSamples
from .ttns import TTNS

PROB_FLOOR = 1e-300


@dataclass
class MetricReport:
    name: str
    value: float
    method: str  # dense | ttns-contraction | sample-based
    model_id: str = ""
    reference_id: str = ""
    n_samples: int | None = None
    seed: int | None = None

    def csv_row(self) -> str:
        n = "" if self.n_samples is None else str(self.n_samples)
        s = "" if self.seed is None else str(self.seed)
        return (
            f"{self.name},{self.value!r},{self.method},"
            f"{self.model_id},{self.reference_id},{n},{s}"
        )

    @staticmethod
    def csv_header() -> str:
        return "name,value,method,model_id,reference_id,N,seed"


def _both_dense(p, q) -> bool:
    return isinstance(p, np.ndarray) and isinstance(q, np.ndarray)


def rel_l2_error(p, p_star) -> float:
    """|| p - p_star || / || p ||.

    Dense arrays are compared entrywise; two TTNS on the same tree are
    compared through inner products so the state space is never built.
    """
    if _both_dense(p, p_star):
        denom = np.linalg.norm(p)
        if denom == 0:
            raise ValueError("first argument has zero norm")
        return float(np.linalg.norm(p - p_star) / denom)
    if isinstance(p, TTNS) and isinstance(p_star, TTNS):
        pp = p.inner(p)
        if pp <= 0:
            raise ValueError("first argument has zero norm")
        qq = p_star.inner(p_star)
        pq = p.inner(p_star)
        return float(math.sqrt(max(pp - 2 * pq + qq, 0.0)) / math.sqrt(pp))
    dense_p = p if isinstance(p, np.ndarray) else p.contract_full()
    dense_q = p_star if isinstance(p_star, np.ndarray) else p_star.contract_full()
    return rel_l2_error(dense_p, dense_q)


def nll(model: TTNS, samples: DiscreteSamples) -> tuple[float, int]:
    """Mean negative log-likelihood in nats, plus the count of floored rows.

    Model values are clipped at a tiny positive floor before the log so a
    fit that is slightly negative or off-support stays finite.
    """
    vals = model.evaluate_rows(samples)
    floored = int(np.sum(vals < PROB_FLOOR))
    vals = np.maximum(vals, PROB_FLOOR)
    return float(-np.log(vals).mean()), floored


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum p log(p/q) in nats; +inf where q vanishes on the support of p."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("shape mismatch")
    support = p > 0
    if np.any(q[support] <= 0):
        return float("inf")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def mi_of_joint(table: np.ndarray) -> float:
    """Mutual information of a normalized 2-d joint table, in nats."""
    pi = table.sum(axis=1, keepdims=True)
    pj = table.sum(axis=0, keepdims=True)
    mask = table > 0
    return float(np.sum(table[mask] * np.log(table[mask] / (pi @ pj)[mask])))


def pairwise_mi(p, i: int, j: int) -> float:
    """MI between nodes i and j under the model's exact 2-marginal.

    Non-normalized inputs are renormalized at the 2-marginal level.
    """
    if i == j:
        raise ValueError("need two distinct nodes")
    if isinstance(p, np.ndarray):
        axes = tuple(a for a in range(p.ndim) if a + 1 not in (i, j))
        table = p.sum(axis=axes)
        if i > j:
            table = table.T
    else:
        table = p.marginalize([i, j])
        if i > j:
            table = table.T
    total = table.sum()
    if not np.isclose(total, 1.0, atol=1e-8):
        table = table / total
    table = np.maximum(table, 0.0)
    table = table / table.sum()
    return mi_of_joint(table)
