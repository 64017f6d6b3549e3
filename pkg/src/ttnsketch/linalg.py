"""Dense tensor/matrix kernels: unfoldings, SVD-based solvers, 3-tensor algebra.

Merged indices are always mixed-radix in the listed axis order with the
last-listed axis fastest (C order), matching the edge/joint-index convention
used by the tree modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

#: Relative singular-value cutoff shared by least_squares and pseudo_inverse.
SV_CUTOFF = 1e-12


def unfold(t: np.ndarray, row_axes: Sequence[int], col_axes: Sequence[int]) -> np.ndarray:
    """Reshape tensor ``t`` into a matrix with the given axis split.

    Rows (columns) enumerate the listed axes mixed-radix, last axis fastest.
    """
    row_axes = list(row_axes)
    col_axes = list(col_axes)
    axes = row_axes + col_axes
    if sorted(axes) != list(range(t.ndim)):
        raise ValueError(f"axes {row_axes} + {col_axes} must partition 0..{t.ndim - 1}")
    nrow = math.prod(t.shape[a] for a in row_axes) if row_axes else 1
    return np.transpose(t, axes).reshape(nrow, -1)


@dataclass
class SvdResult:
    """Rank-r factorization M ~= U @ diag(sigma) @ V.T with fixed signs."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def compose(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def _fix_signs(U: np.ndarray, V: np.ndarray) -> None:
    # Largest-magnitude entry of each U column made positive, in place.
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] *= -1.0
            V[:, j] *= -1.0


def truncated_svd(M: np.ndarray, r: int) -> SvdResult:
    """Best rank-r approximation of M, deterministic up to FP noise."""
    if r > min(M.shape):
        raise ValueError(f"rank {r} exceeds matrix dimensions {M.shape}")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    U, s, V = U[:, :r].copy(), s[:r].copy(), Vt[:r].T.copy()
    _fix_signs(U, V)
    return SvdResult(U=U, sigma=s, V=V)


@dataclass
class LstsqResult:
    solution: np.ndarray
    effective_rank: int
    cond: float
    residual: float


def least_squares(A: np.ndarray, B: np.ndarray) -> LstsqResult:
    """Minimum-norm least-squares solution of A X = B.

    Singular values below ``SV_CUTOFF * sigma_max`` are dropped; the reported
    condition number covers the kept spectrum only.
    """
    B2 = B if B.ndim == 2 else B.reshape(B.shape[0], -1)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        X = np.zeros((A.shape[1],) + B2.shape[1:])
        return LstsqResult(X, 0, np.inf, float(np.linalg.norm(B2)))
    keep = s > SV_CUTOFF * s[0]
    rank = int(np.count_nonzero(keep))
    Uk, sk, Vk = U[:, keep], s[keep], Vt[keep].T
    X = Vk @ ((Uk.T @ B2) / sk[:, None])
    resid = float(np.linalg.norm(A @ X - B2))
    return LstsqResult(X, rank, float(sk[0] / sk[-1]), resid)


def pseudo_inverse(M: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse with the shared relative cutoff."""
    return np.linalg.pinv(M, rcond=SV_CUTOFF)


# -- 3-tensor algebra ----------------------------------------------------
#
# A "3-tensor" here is any ndarray of shape (r1, n, r2); the middle axis is
# the physical one and G[:, x, :] is its x-th slice.


def three_circ(G: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Slice-wise matrix product; output slices are G(.,x,.) @ H(.,y,.)."""
    if G.shape[2] != H.shape[0]:
        raise ValueError(f"inner dimensions {G.shape[2]} != {H.shape[0]}")
    out = np.einsum("axb,byc->axyc", G, H)
    return out.reshape(G.shape[0], G.shape[1] * H.shape[1], H.shape[2])


def three_otimes(G: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Slice-wise Kronecker product; output slices are kron(G(.,x,.), H(.,y,.))."""
    out = np.einsum("axb,cyd->acxybd", G, H)
    return out.reshape(
        G.shape[0] * H.shape[0], G.shape[1] * H.shape[1], G.shape[2] * H.shape[2]
    )


def three_norm(G: np.ndarray) -> float:
    """Max over the middle index of the slice spectral norm."""
    if G.size == 0:
        return 0.0
    s = np.linalg.svd(np.moveaxis(G, 1, 0), compute_uv=False)
    return float(s.max(initial=0.0))


def as_three(core: np.ndarray, n_children: int) -> np.ndarray:
    """View a TTNS core (child ranks..., n, parent rank?) as (r1, n, r2)."""
    if core.ndim == n_children + 1:  # root: no parent axis
        core = core[..., None]
    lead = math.prod(core.shape[:n_children]) if n_children else 1
    return core.reshape(lead, core.shape[n_children], core.shape[-1])
