"""Sketch families for the core-determining equations.

Three kinds are provided:

* ``markov`` — per-edge indicator sketches; the sketched tensor of a node is
  the joint marginal over the node and its neighbors.
* ``l-markov`` / ``custom-sets`` — indicator sketches over distance-L balls
  or caller-supplied node sets.
* ``perturbative`` — recursive sketches whose cores are all-ones plus a
  scaled random perturbation, evaluated by message passing.

Left messages flow up the tree (one per edge), right messages flow down
(one per node, the root's being the scalar 1).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .tree import RootedTree


class SketchConfigError(ValueError):
    pass


@dataclass
class SketchMessages:
    """Per-sample evaluation record of all sketch functions."""

    s_joint: dict[int, np.ndarray]  # node -> vector over the joint left index
    t: dict[int, np.ndarray]  # node -> vector over the right index
    s_edge: dict[tuple[int, int], np.ndarray]  # edge -> left message


@dataclass
class SketchFunction:
    kind: str
    tree: RootedTree
    state_counts: np.ndarray
    left_dims: dict[tuple[int, int], int]
    right_dims: dict[int, int]
    recursive_ok: bool = True
    # indicator kinds
    node_sets: dict[int, tuple[int, ...]] | None = None
    left_nodes: dict[tuple[int, int], list[int]] | None = None
    right_nodes: dict[int, list[int]] | None = None
    # perturbative kind
    cores: dict[int, np.ndarray] | None = None
    deltas: dict[int, np.ndarray] | None = None
    eps: float | None = None
    seed: int | None = None

    @property
    def is_indicator(self) -> bool:
        return self.kind in ("markov", "l-markov", "custom-sets")

    def joint_left_dim(self, k: int) -> int:
        return math.prod(
            self.left_dims[(w, k)] for w in self.tree.children(k)
        ) if self.tree.children(k) else 1

    def z_shape(self, k: int) -> tuple[int, int, int]:
        return (
            self.joint_left_dim(k),
            int(self.state_counts[k - 1]),
            self.right_dims[k],
        )

    def z_node_list(self, k: int) -> tuple[list[int], list[int]]:
        """Node lists behind the left/right axes of an indicator sketch."""
        if not self.is_indicator:
            raise SketchConfigError("node lists only exist for indicator sketches")
        left: list[int] = []
        for w in self.tree.children(k):
            left.extend(self.left_nodes[(w, k)])
        return left, list(self.right_nodes[k])


def _dims_over(nodes: Sequence[int], state_counts: np.ndarray) -> int:
    return math.prod(int(state_counts[v - 1]) for v in nodes) if nodes else 1


def _indicator_sketch(
    kind: str,
    tree: RootedTree,
    state_counts: Sequence[int],
    sets: Mapping[int, Sequence[int]],
) -> SketchFunction:
    state_counts = np.asarray(state_counts, dtype=np.int64)
    node_sets = {}
    for k in tree.nodes:
        S = sorted(set(sets[k]))
        if k not in S:
            raise SketchConfigError(f"node set of {k} must contain {k}")
        if any(not 1 <= v <= tree.d for v in S):
            raise SketchConfigError(f"node set of {k} mentions unknown nodes")
        node_sets[k] = tuple(S)
    left_nodes: dict[tuple[int, int], list[int]] = {}
    right_nodes: dict[int, list[int]] = {}
    left_dims: dict[tuple[int, int], int] = {}
    right_dims: dict[int, int] = {}
    for k in tree.nodes:
        Sk = set(node_sets[k])
        for w in tree.children(k):
            nodes = sorted(Sk & set(tree.subtree(w)))
            left_nodes[(w, k)] = nodes
            left_dims[(w, k)] = _dims_over(nodes, state_counts)
        right = sorted(Sk & set(tree.non_descendants(k)))
        right_nodes[k] = right
        right_dims[k] = _dims_over(right, state_counts)
    # The left message of edge (w, k) can be built from w's own messages only
    # if every node it reads below w is also read by w's sketch.
    recursive_ok = True
    for k in tree.nodes:
        for w in tree.children(k):
            below = set(node_sets[k]) & set(tree.descendants(w))
            if not below <= set(node_sets[w]):
                recursive_ok = False
    if not recursive_ok:
        warnings.warn(
            "node sets violate the recursive-sketch containment constraint; "
            "the estimator will use the generic coefficient formula",
            RuntimeWarning,
        )
    return SketchFunction(
        kind=kind,
        tree=tree,
        state_counts=state_counts,
        left_dims=left_dims,
        right_dims=right_dims,
        recursive_ok=recursive_ok,
        node_sets=node_sets,
        left_nodes=left_nodes,
        right_nodes=right_nodes,
    )


def markov_sketch(tree: RootedTree, state_counts: Sequence[int]) -> SketchFunction:
    """Indicator sketches over immediate neighbors."""
    sets = {k: (k,) + tree.neighbors(k) for k in tree.nodes}
    return _indicator_sketch("markov", tree, state_counts, sets)


def l_markov_sketch(
    tree: RootedTree,
    state_counts: Sequence[int],
    L: int | None = None,
    sets: Mapping[int, Sequence[int]] | None = None,
) -> SketchFunction:
    """Indicator sketches over distance-L balls, or over explicit node sets."""
    if (L is None) == (sets is None):
        raise SketchConfigError("give exactly one of L or explicit sets")
    if L is not None:
        if L < 1:
            raise SketchConfigError("cutoff must be >= 1")
        sets = {
            k: [v for v, dist in tree.distances_from(k).items() if dist <= L]
            for k in tree.nodes
        }
        return _indicator_sketch("l-markov", tree, state_counts, sets)
    return _indicator_sketch("custom-sets", tree, state_counts, sets)


def perturbative_sketch(
    tree: RootedTree,
    state_counts: Sequence[int],
    eps: float,
    bond_dims: int | Mapping[tuple[int, int], int],
    seed: int,
    distribution: str = "uniform",
) -> SketchFunction:
    """Recursive sketch with cores = all-ones + eps * random perturbation."""
    if eps < 0:
        raise SketchConfigError("perturbative scale must be nonnegative")
    state_counts = np.asarray(state_counts, dtype=np.int64)
    if isinstance(bond_dims, int):
        dims = {e: bond_dims for e in tree.edges}
    else:
        dims = {e: int(bond_dims[e]) for e in tree.edges}
    if any(v < 1 for v in dims.values()):
        raise SketchConfigError("sketch bond dims must be >= 1")
    rng = np.random.default_rng(seed)
    cores: dict[int, np.ndarray] = {}
    deltas: dict[int, np.ndarray] = {}
    for k in tree.nodes:  # fixed node order keeps the draw reproducible
        shape = tuple(dims[(c, k)] for c in tree.children(k))
        shape += (int(state_counts[k - 1]),)
        if not tree.is_root(k):
            shape += (dims[(k, tree.parent(k))],)
        if distribution == "uniform":
            delta = rng.random(shape)
        elif distribution == "normal":
            delta = rng.standard_normal(shape)
        else:
            raise SketchConfigError(f"unknown perturbation distribution {distribution!r}")
        deltas[k] = delta
        cores[k] = np.ones(shape) + eps * delta
    right_dims = {k: dims[(k, tree.parent(k))] for k in tree.nodes if not tree.is_root(k)}
    right_dims[tree.root] = 1
    return SketchFunction(
        kind="perturbative",
        tree=tree,
        state_counts=state_counts,
        left_dims=dict(dims),
        right_dims=right_dims,
        recursive_ok=True,
        cores=cores,
        deltas=deltas,
        eps=float(eps),
        seed=seed,
    )


# -- per-sample evaluation -------------------------------------------------


def _one_hot_code(row: np.ndarray, nodes: list[int], state_counts: np.ndarray) -> int:
    code = 0
    for v in nodes:
        code = code * int(state_counts[v - 1]) + int(row[v - 1])
    return code


def eval_sketch_on_sample(sk: SketchFunction, row: Sequence[int]) -> SketchMessages:
    """All sketch values at one sample row (0-based states).

    One upward pass produces the per-edge left messages, one downward pass the
    per-node right messages; the joint left message of a node is the Kronecker
    product of its children's edge messages in ascending child order.
    """
    tree = sk.tree
    row = np.asarray(row, dtype=np.int64)
    if row.shape != (tree.d,):
        raise ValueError(f"expected {tree.d} states")
    if (row < 0).any() or (row >= sk.state_counts).any():
        raise ValueError("state out of range")

    s_edge: dict[tuple[int, int], np.ndarray] = {}
    t: dict[int, np.ndarray] = {}

    if sk.is_indicator:
        for e, nodes in sk.left_nodes.items():
            vec = np.zeros(sk.left_dims[e])
            vec[_one_hot_code(row, nodes, sk.state_counts)] = 1.0
            s_edge[e] = vec
        for k in tree.nodes:
            vec = np.zeros(sk.right_dims[k])
            vec[_one_hot_code(row, sk.right_nodes[k], sk.state_counts)] = 1.0
            t[k] = vec
    else:
        # upward: contract each subtree's cores at the observed states
        for w in reversed(tree.topo_order):
            if tree.is_root(w):
                continue
            nc = len(tree.children(w))
            arr = np.take(sk.cores[w], int(row[w - 1]), axis=nc)
            for c in tree.children(w):
                arr = np.tensordot(s_edge[(c, w)], arr, axes=([0], [0]))
            s_edge[(w, tree.parent(w))] = arr
        # downward
        t[tree.root] = np.ones(1)
        for q in tree.topo_order:
            kids = tree.children(q)
            if not kids:
                continue
            nc = len(kids)
            core = np.take(sk.cores[q], int(row[q - 1]), axis=nc)
            if tree.is_root(q):
                core = core[..., None]
            for j, c in enumerate(kids):
                arr = np.tensordot(core, t[q], axes=([nc], [0]))
                for jj in range(nc - 1, -1, -1):
                    if jj == j:
                        continue
                    arr = np.tensordot(s_edge[(kids[jj], q)], arr, axes=([0], [jj]))
                t[c] = arr

    s_joint: dict[int, np.ndarray] = {}
    for k in tree.nodes:
        vec = np.ones(1)
        for w in tree.children(k):
            vec = np.kron(vec, s_edge[(w, k)])
        s_joint[k] = vec
    return SketchMessages(s_joint=s_joint, t=t, s_edge=s_edge)


# -- batched evaluation (used by the sample-sketch accumulator) -------------


def batch_left_messages(sk: SketchFunction, data: np.ndarray) -> dict:
    """Per-edge left messages for every row; perturbative kind only."""
    tree = sk.tree
    N = data.shape[0]
    up: dict[tuple[int, int], np.ndarray] = {}
    for w in reversed(tree.topo_order):
        if tree.is_root(w):
            continue
        kids = tree.children(w)
        core = sk.cores[w]
        xw = data[:, w - 1]
        if not kids:
            up[(w, tree.parent(w))] = core[xw, :]
            continue
        pdim = core.shape[-1]
        out = np.empty((N, pdim))
        for v in range(int(sk.state_counts[w - 1])):
            rows = np.flatnonzero(xw == v)
            if rows.size == 0:
                continue
            arr = core[..., v, :]
            acc = np.einsum(
                up[(kids[0], w)][rows], [0, 1], arr, list(range(1, arr.ndim + 1))
            )
            for c in kids[1:]:
                acc = np.einsum(
                    acc,
                    list(range(acc.ndim)),
                    up[(c, w)][rows],
                    [0, 1],
                    [0] + list(range(2, acc.ndim)),
                )
            out[rows] = acc
        up[(w, tree.parent(w))] = out
    return up


def perturbative_series_oracle(
    p_full: np.ndarray, sk: SketchFunction, k: int
) -> np.ndarray:
    """Rebuild the exact sketch of node k from its subset power series.

    Enumerates every subset S of the other nodes; the S-term contracts the
    marginal over S+{k} against the perturbation cores of S, scaled by
    eps^|S|. Kept axes are the sketch bonds at k whose far endpoint lies in
    S; bonds whose far endpoint is outside S are constant and broadcast.
    Edges with both endpoints outside S+{k} contribute their bond dimension
    as a scalar factor. Output layout matches the direct sketch:
    (joint children bond, physical, parent bond).
    """
    from itertools import combinations

    from .ttns import _einsum

    tree = sk.tree
    d = tree.d
    if d > 8:
        raise ValueError("subset enumeration limited to d <= 8")
    if sk.kind != "perturbative":
        raise SketchConfigError("series oracle applies to perturbative sketches")
    kids = tree.children(k)
    parent = tree.parent(k)
    bond_axes = [(c, k) for c in kids] + ([(k, parent)] if parent else [])
    bond_dims = [sk.left_dims[e] for e in bond_axes]
    nk = int(sk.state_counts[k - 1])
    l_k = math.prod(sk.left_dims[(c, k)] for c in kids) if kids else 1
    m_k = sk.right_dims[k]
    eps = sk.eps

    def bond_label(edge):
        return d + edge[0]  # child id identifies the edge

    others = [v for v in tree.nodes if v != k]
    total = np.zeros(tuple(bond_dims) + (nk,))  # bonds first, physical last
    for size in range(d):
        for S in combinations(others, size):
            Sset = set(S)
            keep = sorted(Sset | {k})
            marg = p_full.sum(axis=tuple(a for a in range(d) if a + 1 not in keep))
            ops: list = [marg, [v for v in keep]]
            for i in S:
                labels = [bond_label((c, i)) for c in tree.children(i)] + [i]
                if not tree.is_root(i):
                    labels.append(bond_label((i, tree.parent(i))))
                ops += [sk.deltas[i], labels]
            out = [bond_label(e) for e in bond_axes if (set(e) - {k}).pop() in Sset]
            out.append(k)
            term = _einsum(ops, out)
            # scalar factor from bonds that touch neither S nor k
            factor = 1.0
            for (w, q) in tree.edges:
                if {w, q} & (Sset | {k}):
                    continue
                factor *= sk.left_dims[(w, q)]
            # broadcast the missing bond axes back in
            shape = [
                sk.left_dims[e] if (set(e) - {k}).pop() in Sset else 1
                for e in bond_axes
            ] + [nk]
            term = term.reshape(shape)
            total = total + (eps**size * factor) * term
    # (bonds..., x) -> (joint children bond, x, parent bond)
    perm = list(range(len(kids))) + [len(bond_axes)] + (
        [len(kids)] if parent else []
    )
    out = np.transpose(total, perm) if parent else total
    return out.reshape(l_k, nk, m_k)


def batch_right_messages(sk: SketchFunction, data: np.ndarray, up: dict) -> dict:
    """Per-node right messages for every row; perturbative kind only."""
    tree = sk.tree
    N = data.shape[0]
    down: dict[int, np.ndarray] = {tree.root: np.ones((N, 1))}
    for q in tree.topo_order:
        kids = tree.children(q)
        if not kids:
            continue
        nc = len(kids)
        core = sk.cores[q]
        if tree.is_root(q):
            core = core[..., None]
        xq = data[:, q - 1]
        for j, c in enumerate(kids):
            out = np.empty((N, sk.left_dims[(c, q)]))
            for v in range(int(sk.state_counts[q - 1])):
                rows = np.flatnonzero(xq == v)
                if rows.size == 0:
                    continue
                arr = core[..., v, :]  # (l_c1, ..., l_cm, l_parent)
                acc = np.tensordot(down[q][rows], arr, axes=([1], [nc]))
                # acc: (rows, l_c1, ..., l_cm); contract siblings, keep child j
                for jj in range(nc - 1, -1, -1):
                    if jj == j:
                        continue
                    acc = np.einsum(
                        acc,
                        list(range(acc.ndim)),
                        up[(kids[jj], q)][rows],
                        [0, jj + 1],
                        [a for a in range(acc.ndim) if a != jj + 1],
                    )
                out[rows] = acc
            down[c] = out
    return down
