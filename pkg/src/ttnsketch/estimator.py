"""Sketched core-determining systems: accumulate sketches, form per-node
linear systems through truncated SVDs, and solve every core by least squares.

The same machinery accepts exact sketches (computed from a density) and
sampled sketches (accumulated from rows with the 1/N convention); exactness
only changes the noise level, never the shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import DiscreteSamples, joint_code
from .linalg import least_squares, pseudo_inverse, truncated_svd, unfold
from .sketches import (
    SketchFunction,
    batch_left_messages,
    batch_right_messages,
)
from .tree import RootedTree
from .ttns import TTNS, _einsum


class RankOverestimateError(RuntimeError):
    """A retained singular value is numerically zero."""


@dataclass
class SketchSet:
    """Per-node and per-edge sketched tensors.

    ``Z[k]`` has shape (l_k, n_k, m_k) with l_k = 1 at leaves and m_k = 1 at
    the root; ``Z_edge[(w, k)]`` has shape (l_(w,k), m_w).
    """

    Z: dict[int, np.ndarray]
    Z_edge: dict[tuple[int, int], np.ndarray]
    n_samples: int | None
    exact: bool

    def scaled(self, c: float) -> "SketchSet":
        return SketchSet(
            {k: c * v for k, v in self.Z.items()},
            {e: c * v for e, v in self.Z_edge.items()},
            self.n_samples,
            self.exact,
        )

    def merged(self, other: "SketchSet") -> "SketchSet":
        """N-weighted average of two sampled sketch sets."""
        if self.exact or other.exact:
            raise ValueError("merging applies to sampled sketches")
        n1, n2 = self.n_samples, other.n_samples
        w1, w2 = n1 / (n1 + n2), n2 / (n1 + n2)
        return SketchSet(
            {k: w1 * self.Z[k] + w2 * other.Z[k] for k in self.Z},
            {e: w1 * self.Z_edge[e] + w2 * other.Z_edge[e] for e in self.Z_edge},
            n1 + n2,
            False,
        )


@dataclass
class CdeSystem:
    """Per-node coefficient/right-hand-side pairs plus the SVD leftovers."""

    A: dict[int, np.ndarray | None]  # None at leaves (coefficient is 1)
    B: dict[int, np.ndarray]  # (l_k, n_k, r_k); root: (l_k, n_k)
    Q: dict[int, np.ndarray | None]  # (m_k, r_k); None at the root
    sigma: dict[int, np.ndarray]  # retained singular values per non-root node
    ranks: dict[tuple[int, int], int]


@dataclass
class FitDiagnostics:
    ranks: dict[tuple[int, int], int]
    spectra: dict[int, np.ndarray]
    cond: dict[int, float]
    residual: dict[int, float]
    truncated_nodes: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    n_samples: int | None = None


@dataclass
class FitResult:
    model: TTNS
    diagnostics: FitDiagnostics


# -- sketch accumulation -----------------------------------------------------


def _block_ranges(n: int, blocks: int) -> list[range]:
    blocks = max(1, min(blocks, n))
    bounds = np.linspace(0, n, blocks + 1, dtype=int)
    return [range(bounds[i], bounds[i + 1]) for i in range(blocks)]


def sketch_from_samples(
    samples: DiscreteSamples, sk: SketchFunction, shards: int = 1
) -> SketchSet:
    """Accumulate all sketched tensors over the sample rows (1/N scaling).

    ``shards`` splits the rows into contiguous blocks reduced in order; the
    result does not depend on the split beyond float addition order.
    """
    tree = sk.tree
    if samples.d != tree.d or not np.array_equal(
        samples.state_counts, sk.state_counts
    ):
        raise ValueError("samples do not match the sketch's tree/state counts")
    N = samples.n_rows
    if N == 0:
        raise ValueError("cannot sketch an empty sample set")

    Z = {k: np.zeros(sk.z_shape(k)) for k in tree.nodes}
    Z_edge = {
        (w, k): np.zeros((sk.left_dims[(w, k)], sk.right_dims[w]))
        for (w, k) in tree.edges
    }

    if sk.is_indicator:
        for rows in _block_ranges(N, shards):
            block = samples.restrict(np.arange(rows.start, rows.stop))
            for k in tree.nodes:
                left, right = sk.z_node_list(k)
                code, size = joint_code(block, left + [k] + right)
                Z[k] += np.bincount(code, minlength=size).reshape(sk.z_shape(k))
            for (w, k) in tree.edges:
                nodes = sk.left_nodes[(w, k)] + sk.right_nodes[w]
                code, size = joint_code(block, nodes)
                Z_edge[(w, k)] += np.bincount(code, minlength=size).reshape(
                    Z_edge[(w, k)].shape
                )
    else:
        max_l = max(sk.joint_left_dim(k) for k in tree.nodes)
        auto_blocks = max(shards, math.ceil(N * max_l / 2**22))
        for rows in _block_ranges(N, auto_blocks):
            data = samples.data[rows.start : rows.stop]
            up = batch_left_messages(sk, data)
            down = batch_right_messages(sk, data, up)
            for k in tree.nodes:
                joint = np.ones((data.shape[0], 1))
                for c in tree.children(k):
                    joint = np.einsum("na,nb->nab", joint, up[(c, k)]).reshape(
                        data.shape[0], -1
                    )
                xk = data[:, k - 1]
                for v in range(int(sk.state_counts[k - 1])):
                    mask = xk == v
                    if mask.any():
                        Z[k][:, v, :] += joint[mask].T @ down[k][mask]
            for (w, k) in tree.edges:
                Z_edge[(w, k)] += up[(w, k)].T @ down[w]

    for k in tree.nodes:
        Z[k] /= N
    for e in tree.edges:
        Z_edge[e] /= N
    return SketchSet(Z=Z, Z_edge=Z_edge, n_samples=N, exact=False)


def _marginal_axes(p: np.ndarray, keep: list[int]) -> np.ndarray:
    """Marginal of a dense density over ``keep`` (1-based), axes ascending."""
    drop = tuple(a for a in range(p.ndim) if a + 1 not in keep)
    return p.sum(axis=drop)


def _reorder_marginal(marg: np.ndarray, listed: list[int]) -> np.ndarray:
    order = sorted(listed)
    perm = [order.index(v) for v in listed]
    return np.transpose(marg, perm)


def sketch_exact(p, sk: SketchFunction) -> SketchSet:
    """Noiseless sketches of a density given as a dense array or a TTNS."""
    tree = sk.tree
    dense = isinstance(p, np.ndarray)
    Z: dict[int, np.ndarray] = {}
    Z_edge: dict[tuple[int, int], np.ndarray] = {}

    if sk.is_indicator:
        for k in tree.nodes:
            left, right = sk.z_node_list(k)
            listed = left + [k] + right
            marg = (
                _marginal_axes(p, listed) if dense else p.marginalize(listed)
            )
            Z[k] = _reorder_marginal(marg, listed).reshape(sk.z_shape(k))
        for (w, k) in tree.edges:
            listed = sk.left_nodes[(w, k)] + sk.right_nodes[w]
            marg = (
                _marginal_axes(p, listed) if dense else p.marginalize(listed)
            )
            Z_edge[(w, k)] = _reorder_marginal(marg, listed).reshape(
                sk.left_dims[(w, k)], sk.right_dims[w]
            )
        return SketchSet(Z=Z, Z_edge=Z_edge, n_samples=None, exact=True)

    if dense:
        d = tree.d

        def core_labels(i, override=None):
            labs = [d + c for c in tree.children(i)] + [i]
            if not tree.is_root(i):
                labs.append(d + i)
            if override:
                labs = [override.get(lab, lab) for lab in labs]
            return labs

        for k in tree.nodes:
            ops = [p, list(range(1, d + 1))]
            for i in tree.nodes:
                if i != k:
                    ops += [sk.cores[i], core_labels(i)]
            out = [d + c for c in tree.children(k)] + [k]
            if not tree.is_root(k):
                out.append(d + k)
            Z[k] = _einsum(ops, out).reshape(sk.z_shape(k))
        beta, gamma = 3 * d + 1, 3 * d + 2
        for (w, k) in tree.edges:
            ops = [p, list(range(1, d + 1))]
            for i in tree.nodes:
                override = {}
                if i == w:
                    override = {d + w: beta}
                elif i == k:
                    override = {d + w: gamma}
                ops += [sk.cores[i], core_labels(i, override)]
            Z_edge[(w, k)] = _einsum(ops, [beta, gamma])
        return SketchSet(Z=Z, Z_edge=Z_edge, n_samples=None, exact=True)

    # TTNS input, recursive sketch: doubled message passing
    model: TTNS = p
    d = tree.d
    mb = lambda c: d + c  # model bond labels
    sb = lambda c: 2 * d + c  # sketch bond labels
    up: dict[tuple[int, int], np.ndarray] = {}
    for w in reversed(tree.topo_order):
        if tree.is_root(w):
            continue
        ops = []
        gl = [mb(c) for c in tree.children(w)] + [w, mb(w)]
        sl = [sb(c) for c in tree.children(w)] + [w, sb(w)]
        ops += [model.cores[w], gl, sk.cores[w], sl]
        for c in tree.children(w):
            ops += [up[(c, w)], [mb(c), sb(c)]]
        up[(w, tree.parent(w))] = _einsum(ops, [mb(w), sb(w)])
    down: dict[int, np.ndarray] = {tree.root: np.ones((1, 1))}
    for q in tree.topo_order:
        kids = tree.children(q)
        for c in kids:
            ops = []
            gl = [mb(cc) for cc in kids] + [q]
            sl = [sb(cc) for cc in kids] + [q]
            if not tree.is_root(q):
                gl.append(mb(q))
                sl.append(sb(q))
                parent_pair = [model.cores[q], gl, sk.cores[q], sl, down[q], [mb(q), sb(q)]]
            else:
                parent_pair = [model.cores[q], gl, sk.cores[q], sl]
            ops += parent_pair
            for cc in kids:
                if cc != c:
                    ops += [up[(cc, q)], [mb(cc), sb(cc)]]
            down[c] = _einsum(ops, [mb(c), sb(c)])
    for k in tree.nodes:
        ops = []
        gl = [mb(c) for c in tree.children(k)] + [k]
        if not tree.is_root(k):
            gl.append(mb(k))
            ops += [model.cores[k], gl, down[k], [mb(k), sb(k)]]
        else:
            ops += [model.cores[k], gl]
        for c in tree.children(k):
            ops += [up[(c, k)], [mb(c), sb(c)]]
        out = [sb(c) for c in tree.children(k)] + [k]
        if not tree.is_root(k):
            out.append(sb(k))
        Z[k] = _einsum(ops, out).reshape(sk.z_shape(k))
    for (w, k) in tree.edges:
        Z_edge[(w, k)] = _einsum(
            [up[(w, k)], [0, 1], down[w], [0, 2]], [1, 2]
        )
    return SketchSet(Z=Z, Z_edge=Z_edge, n_samples=None, exact=True)


# -- system forming and solving ----------------------------------------------


def sketch_spectra(zs: SketchSet, tree: RootedTree) -> dict[int, np.ndarray]:
    """Full singular spectrum of every non-root sketched tensor."""
    out = {}
    for k in tree.nodes:
        if k == tree.root:
            continue
        Zk = zs.Z[k]
        out[k] = np.linalg.svd(Zk.reshape(-1, Zk.shape[2]), compute_uv=False)
    return out


def estimate_ranks(
    spectra: Mapping[int, np.ndarray],
    tree: RootedTree,
    delta: float,
    relative: bool = True,
) -> dict[tuple[int, int], int]:
    """Threshold singular values at delta (relative to sigma_1 by default)."""
    if delta <= 0:
        raise ValueError("threshold must be positive")
    ranks = {}
    for k in tree.nodes:
        if k == tree.root:
            continue
        s = spectra[k]
        level = delta * s[0] if relative else delta
        ranks[(k, tree.parent(k))] = max(int(np.sum(s > level)), 1)
    return ranks


def system_forming(
    zs: SketchSet, tree: RootedTree, ranks: Mapping[tuple[int, int], int]
) -> CdeSystem:
    """Truncated SVD of every sketched node tensor plus coefficient assembly."""
    A: dict[int, np.ndarray | None] = {}
    B: dict[int, np.ndarray] = {}
    Q: dict[int, np.ndarray | None] = {}
    sigma: dict[int, np.ndarray] = {}
    for k in tree.nodes:
        Zk = zs.Z[k]
        l_k, n_k, m_k = Zk.shape
        if tree.is_root(k):
            B[k] = Zk[:, :, 0]
            Q[k] = None
            continue
        r = int(ranks[(k, tree.parent(k))])
        if r > min(l_k * n_k, m_k):
            raise ValueError(
                f"rank {r} exceeds sketch dimensions {(l_k * n_k, m_k)} at node {k}"
            )
        res = truncated_svd(Zk.reshape(l_k * n_k, m_k), r)
        if res.sigma[0] == 0.0 or res.sigma[-1] <= 1e-14 * res.sigma[0]:
            raise RankOverestimateError(
                f"node {k}: retained singular value is numerically zero "
                f"(sigma={res.sigma}); lower the rank or increase N"
            )
        B[k] = res.U.reshape(l_k, n_k, r)
        Q[k] = res.V / res.sigma[None, :]
        sigma[k] = res.sigma
    for k in tree.nodes:
        kids = tree.children(k)
        if not kids:
            A[k] = None
            continue
        Ak = np.ones((1, 1))
        for w in kids:
            Ak = np.kron(Ak, zs.Z_edge[(w, k)] @ Q[w])
        A[k] = Ak
    return CdeSystem(A=A, B=B, Q=Q, sigma=sigma, ranks=dict(ranks))


def recursive_coefficient(
    sk: SketchFunction, sys: CdeSystem, k: int
) -> np.ndarray:
    """Coefficient of node k assembled from sketch cores and B factors.

    Valid for recursive sketches; algebraically equal to the generic
    assembly in :func:`system_forming`.
    """
    tree = sk.tree
    kids = tree.children(k)
    if not kids:
        raise ValueError("leaves have scalar coefficients")
    Ak = np.ones((1, 1))
    for w in kids:
        core = sk.cores[w]
        nc = len(tree.children(w))
        # view the core as (parent bond; children bonds + physical)
        mat = np.moveaxis(core, nc + 1, 0).reshape(core.shape[nc + 1], -1)
        Bw = sys.B[w].reshape(-1, sys.B[w].shape[2])
        Ak = np.kron(Ak, mat @ Bw)
    return Ak


def solve_cores(
    sys: CdeSystem, tree: RootedTree
) -> tuple[TTNS, dict[int, float], dict[int, float]]:
    """Least-squares solve of every per-node equation; cores in canonical
    axis order (child ranks ascending, physical, parent rank)."""
    cores: dict[int, np.ndarray] = {}
    cond: dict[int, float] = {}
    residual: dict[int, float] = {}
    for k in tree.nodes:
        kids = tree.children(k)
        if not kids:
            cores[k] = sys.B[k][0]  # (n_k, r_k)
            cond[k] = 1.0
            residual[k] = 0.0
            continue
        child_ranks = [sys.ranks[(w, k)] for w in kids]
        Bk = sys.B[k]
        rhs = Bk.reshape(Bk.shape[0], -1)
        res = least_squares(sys.A[k], rhs)
        cond[k] = res.cond
        residual[k] = res.residual
        shape = tuple(child_ranks) + Bk.shape[1:]
        cores[k] = res.solution.reshape(shape)
    model = TTNS(tree, sys.ranks, cores)
    return model, cond, residual


# -- end-to-end pipeline -------------------------------------------------------


def fit_from_sketches(
    zs: SketchSet,
    tree: RootedTree,
    sk: SketchFunction,
    ranks: Mapping[tuple[int, int], int] | None = None,
    delta: float | None = None,
    relative_delta: bool = True,
    renormalize: bool = True,
) -> FitResult:
    if (ranks is None) == (delta is None):
        raise ValueError("give exactly one of ranks or delta")
    spectra = sketch_spectra(zs, tree)
    if ranks is None:
        ranks = estimate_ranks(spectra, tree, delta, relative=relative_delta)
    warnings_log: list[str] = []
    if not sk.recursive_ok:
        warnings_log.append(
            "sketch node sets violate the recursive containment constraint; "
            "generic coefficient assembly used"
        )
    sys = system_forming(zs, tree, ranks)
    truncated = []
    for k, s in spectra.items():
        r = ranks[(k, tree.parent(k))]
        if r < s.size and s[r] > 1e-8 * s[0]:
            truncated.append(k)
            warnings_log.append(
                f"node {k}: rank {r} truncates a spectrum of numerical rank "
                f"{int(np.sum(s > 1e-8 * s[0]))}"
            )
    model, cond, resid = solve_cores(sys, tree)
    if renormalize:
        model.renormalize()
    diag = FitDiagnostics(
        ranks=dict(ranks),
        spectra=spectra,
        cond=cond,
        residual=resid,
        truncated_nodes=truncated,
        warnings=warnings_log,
        n_samples=zs.n_samples,
    )
    return FitResult(model=model, diagnostics=diag)


def fit_ttns(
    samples: DiscreteSamples,
    tree: RootedTree,
    sk: SketchFunction,
    ranks: Mapping[tuple[int, int], int] | int | None = None,
    delta: float | None = None,
    relative_delta: bool = True,
    renormalize: bool = True,
    shards: int = 1,
) -> FitResult:
    """Sample -> sketch -> system -> cores. ``ranks`` may be a single int."""
    if isinstance(ranks, int):
        ranks = {e: ranks for e in tree.edges}
    zs = sketch_from_samples(samples, sk, shards=shards)
    return fit_from_sketches(
        zs, tree, sk, ranks=ranks, delta=delta,
        relative_delta=relative_delta, renormalize=renormalize,
    )


# -- dense-density oracle -------------------------------------------------------


def edge_factorizations(
    p: np.ndarray, tree: RootedTree, ranks: Mapping[tuple[int, int], int]
) -> tuple[dict, dict]:
    """Per-edge rank-r factorizations of the unfoldings of a dense density.

    Returns factor pairs {edge: (Phi, Psi)} with Phi rows indexed by the
    child-side subtree variables (ascending node order) and the per-edge
    reconstruction residuals.
    """
    factors = {}
    residuals = {}
    for (w, k) in tree.edges:
        rows = [v - 1 for v in tree.subtree(w)]
        cols = [a for a in range(tree.d) if a not in rows]
        M = unfold(p, rows, cols)
        res = truncated_svd(M, int(ranks[(w, k)]))
        Phi = res.U * res.sigma
        Psi = res.V.T
        factors[(w, k)] = (Phi, Psi)
        residuals[(w, k)] = float(np.linalg.norm(M - Phi @ Psi))
    return factors, residuals


def cores_from_factors(
    p: np.ndarray,
    tree: RootedTree,
    factors: Mapping[tuple[int, int], tuple[np.ndarray, np.ndarray]],
) -> TTNS:
    """Solve the unsketched core equations given per-edge factorizations."""
    d = tree.d
    shape = p.shape
    ranks = {e: factors[e][0].shape[1] for e in tree.edges}
    cores: dict[int, np.ndarray] = {}
    for k in tree.nodes:
        kids = tree.children(k)
        if not kids:
            cores[k] = factors[(k, tree.parent(k))][0]  # rows are x_k already
            continue
        # assemble the joint child factor on the sorted descendant variables
        ops = []
        for w in kids:
            sub = tree.subtree(w)
            phi = factors[(w, k)][0].reshape(
                tuple(shape[v - 1] for v in sub) + (ranks[(w, k)],)
            )
            ops += [phi, [v for v in sub] + [d + w]]
        left = sorted(tree.descendants(k))
        out = [v for v in left] + [d + w for w in kids]
        joint = _einsum(ops, out).reshape(
            math.prod(shape[v - 1] for v in left), -1
        )
        if tree.is_root(k):
            rows = [v - 1 for v in left]
            rhs = unfold(p, rows, [k - 1])
        else:
            sub = tree.subtree(k)
            phi = factors[(k, tree.parent(k))][0].reshape(
                tuple(shape[v - 1] for v in sub) + (ranks[(k, tree.parent(k))],)
            )
            pos = sub.index(k)
            phi = np.moveaxis(phi, pos, len(sub) - 1)  # x_k next to the bond
            rhs = phi.reshape(joint.shape[0], -1)
        sol = pseudo_inverse(joint) @ rhs
        core_shape = tuple(ranks[(w, k)] for w in kids) + (shape[k - 1],)
        if not tree.is_root(k):
            core_shape += (ranks[(k, tree.parent(k))],)
        cores[k] = sol.reshape(core_shape)
    return TTNS(tree, ranks, cores)


def cde_oracle(
    p: np.ndarray, tree: RootedTree, ranks: Mapping[tuple[int, int], int] | int
) -> tuple[TTNS, dict]:
    """Reference construction from full unfoldings (small d only).

    Returns the assembled TTNS and the per-edge factorization residuals;
    a nonzero residual flags a declared rank below the true unfolding rank.
    """
    if isinstance(ranks, int):
        ranks = {e: ranks for e in tree.edges}
    factors, residuals = edge_factorizations(p, tree, ranks)
    return cores_from_factors(p, tree, factors), residuals
