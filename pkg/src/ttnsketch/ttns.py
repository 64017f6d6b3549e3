"""Tree tensor network states: evaluation, contraction, marginals, sampling.

A TTNS stores one core per node. Core axes follow one canonical order
everywhere: child-edge ranks in ascending child id, then the physical axis,
then the parent rank (leaves have no child axes, the root no parent axis).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .data import DiscreteSamples
from .tree import RootedTree

FULL_TENSOR_GUARD = 2**24


class ContractionSizeError(ValueError):
    """Requested dense output exceeds the desk-scale guard."""


class SamplingError(RuntimeError):
    pass


def _phys(k: int) -> int:
    return k


def _bond(d: int, child: int) -> int:
    return d + child


def _einsum(ops: list, out: list[int]) -> np.ndarray:
    """np.einsum with arbitrary integer labels, remapped into numpy's range.

    ``ops`` alternates arrays and label lists; labels only need to be
    consistent within one call.
    """
    remap: dict[int, int] = {}
    for i in range(1, len(ops), 2):
        for lab in ops[i]:
            remap.setdefault(lab, len(remap))
    for lab in out:
        remap.setdefault(lab, len(remap))
    if len(remap) > 52:
        raise ContractionSizeError("contraction needs more than 52 distinct indices")
    mapped = [
        [remap[lab] for lab in item] if i % 2 else item for i, item in enumerate(ops)
    ]
    return np.einsum(*mapped, [remap[lab] for lab in out], optimize=True)


class TTNS:
    """Tree tensor network over a rooted tree with per-edge ranks."""

    def __init__(
        self,
        tree: RootedTree,
        ranks: Mapping[tuple[int, int], int],
        cores: Mapping[int, np.ndarray],
    ):
        self.tree = tree
        self.ranks = dict(ranks)
        self.cores = {k: np.asarray(cores[k], dtype=np.float64) for k in tree.nodes}
        self.state_counts = np.array(
            [self.cores[k].shape[len(tree.children(k))] for k in tree.nodes],
            dtype=np.int64,
        )
        self._validate()

    def _validate(self) -> None:
        t = self.tree
        for e in t.edges:
            if e not in self.ranks:
                raise ValueError(f"missing rank for edge {e}")
        for k in t.nodes:
            expect = tuple(self.ranks[(c, k)] for c in t.children(k))
            expect += (int(self.state_counts[k - 1]),)
            if not t.is_root(k):
                expect += (self.ranks[(k, t.parent(k))],)
            if self.cores[k].shape != expect:
                raise ValueError(
                    f"core {k} has shape {self.cores[k].shape}, expected {expect}"
                )

    def n_states(self, k: int) -> int:
        return int(self.state_counts[k - 1])

    # -- pointwise and dense contraction --------------------------------

    def evaluate(self, x: Iterable[int]) -> float:
        """Value at one configuration (0-based states, position k-1 = node k)."""
        x = np.asarray(list(x) if not isinstance(x, np.ndarray) else x, dtype=np.int64)
        t = self.tree
        if x.shape != (t.d,):
            raise ValueError(f"expected {t.d} states, got {x.shape}")
        if (x < 0).any() or (x >= self.state_counts).any():
            raise ValueError("state out of range")
        msg: dict[int, np.ndarray] = {}
        for k in reversed(t.topo_order):
            nc = len(t.children(k))
            arr = np.take(self.cores[k], int(x[k - 1]), axis=nc)
            for c in t.children(k):  # ascending; contracted axis is always 0
                arr = np.tensordot(msg[c], arr, axes=([0], [0]))
            msg[k] = arr
        return float(msg[t.root])

    def _dense(self, keep: list[int]) -> np.ndarray:
        """Contract the network, keeping the physical axes of ``keep`` (sorted)."""
        t = self.tree
        d = t.d
        out_size = math.prod(self.n_states(v) for v in keep)
        if out_size > FULL_TENSOR_GUARD:
            raise ContractionSizeError(f"dense output of {out_size} entries refused")
        keep_set = set(keep)
        msg: dict[int, np.ndarray] = {}
        msg_labels: dict[int, list[int]] = {}
        for k in reversed(t.topo_order):
            ops: list = []
            core_labels = [_bond(d, c) for c in t.children(k)] + [_phys(k)]
            if not t.is_root(k):
                core_labels.append(_bond(d, k))
            ops += [self.cores[k], core_labels]
            for c in t.children(k):
                ops += [msg[c], msg_labels[c]]
            out = [_phys(v) for v in sorted(keep_set & set(t.subtree(k)))]
            if not t.is_root(k):
                out.append(_bond(d, k))
            msg[k] = _einsum(ops, out)
            msg_labels[k] = out
        return msg[t.root].reshape([self.n_states(v) for v in keep])

    def contract_full(self) -> np.ndarray:
        """The full dense tensor (guarded; small d only)."""
        return self._dense(list(self.tree.nodes))

    def marginalize(self, nodes: Iterable[int]) -> np.ndarray:
        """Sum out everything except ``nodes``; axes in ascending node order.

        An empty set yields the total mass as a 0-d array.
        """
        keep = sorted(set(nodes))
        for v in keep:
            if not 1 <= v <= self.tree.d:
                raise ValueError(f"node {v} out of range")
        return self._dense(keep)

    def total_mass(self) -> float:
        return float(self.marginalize([]))

    def renormalize(self) -> "TTNS":
        """Divide the root core by the total mass, in place; returns self."""
        mass = self.total_mass()
        if mass == 0:
            raise ValueError("cannot renormalize a zero-mass model")
        self.cores[self.tree.root] = self.cores[self.tree.root] / mass
        return self

    # -- batched evaluation ---------------------------------------------

    def evaluate_rows(self, samples: DiscreteSamples) -> np.ndarray:
        """Values at every sample row, via one grouped upward pass."""
        t = self.tree
        X = samples.data
        if not np.array_equal(samples.state_counts, self.state_counts):
            raise ValueError("sample state counts do not match the model")
        N = X.shape[0]
        msg: dict[int, np.ndarray] = {}
        for k in reversed(t.topo_order):
            kids = t.children(k)
            core = self.cores[k]
            xk = X[:, k - 1]
            if not kids:
                msg[k] = core[xk, :] if not t.is_root(k) else core[xk]
                continue
            pdim = core.shape[-1] if not t.is_root(k) else 1
            core3 = core.reshape(core.shape[: len(kids)] + (self.n_states(k), pdim))
            out = np.empty((N, pdim))
            for v in range(self.n_states(k)):
                rows = np.flatnonzero(xk == v)
                if rows.size == 0:
                    continue
                arr = core3[..., v, :]  # (r_c1, ..., r_cm, p)
                # contract children one at a time; child axis is always 1
                first = kids[0]
                acc = np.einsum(msg[first][rows], [0, 1], arr, list(range(1, arr.ndim + 1)))
                for c in kids[1:]:
                    acc = np.einsum(acc, list(range(acc.ndim)), msg[c][rows], [0, 1],
                                    [0] + list(range(2, acc.ndim)))
                out[rows] = acc
            msg[k] = out if not t.is_root(k) else out[:, 0]
        return msg[t.root]

    # -- inner products ---------------------------------------------------

    def inner(self, other: "TTNS") -> float:
        """Sum_x self(x) * other(x) by doubled-bond message passing."""
        t = self.tree
        if t.to_dict() != other.tree.to_dict():
            raise ValueError("trees differ")
        if not np.array_equal(self.state_counts, other.state_counts):
            raise ValueError("state counts differ")
        d = t.d
        ra = max(self.ranks.values(), default=1)
        rb = max(other.ranks.values(), default=1)
        if (ra * rb) ** 2 * 8 > 2**31:
            raise MemoryError("doubled-bond contraction too large")
        msg: dict[int, np.ndarray] = {}
        for k in reversed(t.topo_order):
            ops: list = []
            la = [_bond(d, c) for c in t.children(k)] + [_phys(k)]
            lb = [2 * d + c for c in t.children(k)] + [_phys(k)]
            if not t.is_root(k):
                la.append(_bond(d, k))
                lb.append(2 * d + k)
            ops += [self.cores[k], la, other.cores[k], lb]
            for c in t.children(k):
                ops += [msg[c], [_bond(d, c), 2 * d + c]]
            out = [] if t.is_root(k) else [_bond(d, k), 2 * d + k]
            msg[k] = _einsum(ops, out)
        return float(msg[t.root])

    # -- sampling ---------------------------------------------------------

    def _summed_up_messages(self) -> dict[int, np.ndarray]:
        """Upward messages with physical axes summed out (vector per edge)."""
        t = self.tree
        up: dict[int, np.ndarray] = {}
        for k in reversed(t.topo_order):
            arr = self.cores[k]
            for c in t.children(k):
                arr = np.tensordot(up[c], arr, axes=([0], [0]))
            arr = arr.sum(axis=0)  # physical axis
            up[k] = arr if not t.is_root(k) else np.atleast_1d(arr)
        return up

    def draw_samples(
        self, n_samples: int, seed: int, return_clip_info: bool = False
    ):
        """Exact i.i.d. rows by root-to-leaf conditional sampling.

        Negative conditionals (possible on fitted models) are clamped to zero
        and renormalized; the cumulative clamped mass fraction is reported.
        """
        t = self.tree
        rng = np.random.default_rng(seed)
        up = self._summed_up_messages()
        X = np.zeros((n_samples, t.d), dtype=np.int64)
        down: dict[int, np.ndarray] = {t.root: np.ones((n_samples, 1))}
        clipped = 0.0
        total = 0.0
        for k in t.topo_order:
            kids = t.children(k)
            nc = len(kids)
            core = self.cores[k]
            if t.is_root(k):
                core = core[..., None]
            # contract all children against their summed messages -> (n_k, p)
            K = core
            for c in kids:
                K = np.tensordot(up[c], K, axes=([0], [0]))
            probs = down[k] @ K.T  # (N, n_k)
            neg = probs < 0
            clipped += float(-probs[neg].sum())
            total += float(np.abs(probs).sum())
            probs = np.where(neg, 0.0, probs)
            rowsum = probs.sum(axis=1)
            if (rowsum <= 0).any():
                raise SamplingError(f"nonpositive conditional mass at node {k}")
            probs /= rowsum[:, None]
            u = rng.random(n_samples)
            xk = np.minimum(
                (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1),
                self.n_states(k) - 1,
            )
            X[:, k - 1] = xk
            for j, c in enumerate(kids):
                # keep child c's bond open, contract the other children;
                # contracting in decreasing axis order keeps indices valid
                Kc = core
                for jj in range(nc - 1, -1, -1):
                    if jj == j:
                        continue
                    Kc = np.tensordot(up[kids[jj]], Kc, axes=([0], [jj]))
                # remaining axes: (r_c, n_k, p)
                dc = np.empty((n_samples, self.ranks[(c, k)]))
                for v in range(self.n_states(k)):
                    rows = np.flatnonzero(xk == v)
                    if rows.size:
                        dc[rows] = down[k][rows] @ Kc[:, v, :].T
                down[c] = dc
        frac = clipped / total if total > 0 else 0.0
        if frac > 1e-3:
            warnings.warn(
                f"clamped {frac:.2e} of conditional mass while sampling",
                RuntimeWarning,
            )
        samples = DiscreteSamples(X, self.state_counts.copy())
        if return_clip_info:
            return samples, frac
        return samples


def inner_product(a: TTNS, b: TTNS) -> float:
    return a.inner(b)


def draw_samples(model: TTNS, n_samples: int, seed: int) -> DiscreteSamples:
    return model.draw_samples(n_samples, seed)


def subgraph_function(
    cores: Mapping[int, np.ndarray], tree: RootedTree, nodes: Iterable[int]
) -> np.ndarray:
    """Contract the cores of a connected node set over its internal edges.

    Output axes: physical axes of the set in ascending node order, then one
    axis per boundary edge, ordered by canonical (child, parent) key.
    """
    S = sorted(set(nodes))
    if not S:
        raise ValueError("empty node set")
    sset = set(S)
    # connectivity check within the induced subgraph
    frontier = [S[0]]
    seen = {S[0]}
    while frontier:
        u = frontier.pop()
        for v in tree.neighbors(u):
            if v in sset and v not in seen:
                seen.add(v)
                frontier.append(v)
    if seen != sset:
        raise ValueError(f"node set {S} does not induce a connected subtree")

    d = tree.d
    boundary = sorted(
        e for e in tree.edges if (e[0] in sset) != (e[1] in sset)
    )
    ops: list = []
    for k in S:
        labels = [_bond(d, c) for c in tree.children(k)] + [_phys(k)]
        if not tree.is_root(k):
            labels.append(_bond(d, k))
        ops += [cores[k], labels]
    out = [_phys(k) for k in S] + [_bond(d, c) for c, _ in boundary]
    return _einsum(ops, out)
