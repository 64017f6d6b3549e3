"""Pairwise Markov random field benchmarks: construction, exact sampling,
and conversion of tree-structured models to exact TTNS form.

All densities are explicitly normalized; states are stored as 0-based
indices with optional value labels (spin values or clock angles).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import DiscreteSamples
from .tree import RootedTree, build_rooted_tree, path_tree
from .ttns import FULL_TENSOR_GUARD, TTNS


@dataclass
class PairwiseMRF:
    """p(x) proportional to exp(-beta * sum of pairwise potentials).

    The interaction graph is arbitrary (loops allowed); each interaction
    carries a dense potential table of shape (n_i, n_j) for i < j.
    """

    d: int
    state_counts: np.ndarray
    beta: float
    interactions: dict[tuple[int, int], np.ndarray]
    state_values: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.state_counts = np.asarray(self.state_counts, dtype=np.int64)
        norm = {}
        for (i, j), table in self.interactions.items():
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if j < i:
                i, j, table = j, i, np.asarray(table).T
            table = np.asarray(table, dtype=np.float64)
            expected = (self.state_counts[i - 1], self.state_counts[j - 1])
            if table.shape != tuple(expected):
                raise ValueError(f"potential table for ({i},{j}) has shape {table.shape}")
            norm[(i, j)] = table
        self.interactions = norm

    @property
    def interaction_edges(self) -> list[tuple[int, int]]:
        return sorted(self.interactions)

    def is_tree_structured(self) -> bool:
        edges = self.interaction_edges
        if len(edges) != self.d - 1:
            return False
        try:
            build_rooted_tree(edges, 1, d=self.d)
        except ValueError:
            return False
        return True


@dataclass
class ModelPreset:
    name: str
    mrf: PairwiseMRF
    tree: RootedTree  # designated fitting tree
    path: RootedTree  # numeric-order path baseline tree


def _ising_table() -> np.ndarray:
    # states 0,1 carry spin values -1,+1; table[s_i, s_j] = -x_i * x_j
    x = np.array([-1.0, 1.0])
    return -np.outer(x, x)


def _clock_table() -> np.ndarray:
    # 4 states at angles 0, pi/2, pi, 3pi/2; table = cos(theta_i - theta_j)
    theta = np.arange(4) * (np.pi / 2)
    return np.cos(theta[:, None] - theta[None, :])


TRIDENT10_EDGES = [
    (1, 2), (2, 4), (3, 5), (5, 4), (4, 6), (6, 7), (7, 8), (8, 9), (9, 10),
]
DENDRIMER10_EDGES = [
    (1, 2), (1, 3), (1, 4), (2, 5), (2, 6), (3, 7), (3, 8), (4, 9), (4, 10),
]
BIPARTITE10_EDGES = [
    (1, 6), (6, 2), (2, 7), (7, 3), (3, 8), (8, 4), (4, 9), (9, 5), (5, 10),
]


def dendrimer_edges(generations: int) -> list[tuple[int, int]]:
    """Dendrimer: hub with 3 branches, every later node splitting in two.

    ``generations=5`` gives the 94-node graph (1+3+6+12+24+48).
    """
    edges = []
    nxt = 2
    frontier = [1]
    for g in range(generations):
        fanout = 3 if g == 0 else 2
        new = []
        for u in frontier:
            for _ in range(fanout):
                edges.append((u, nxt))
                new.append(nxt)
                nxt += 1
        frontier = new
    return edges


def _ising_mrf(edges: Sequence[tuple[int, int]], d: int, beta: float) -> PairwiseMRF:
    table = _ising_table()
    spin = np.array([-1.0, 1.0])
    return PairwiseMRF(
        d=d,
        state_counts=np.full(d, 2),
        beta=beta,
        interactions={(i, j): table.copy() for i, j in edges},
        state_values={k: spin.copy() for k in range(1, d + 1)},
    )


def preset_model(name: str, **params) -> ModelPreset:
    """Named benchmark models; scalable ones accept a ``-d<k>`` suffix or d=."""
    m = re.fullmatch(r"(.+?)-d(\d+)", name)
    if m:
        name, params = m.group(1), {"d": int(m.group(2)), **params}

    if name == "trident10":
        tree = build_rooted_tree(TRIDENT10_EDGES, root=7)
        return ModelPreset(name, _ising_mrf(tree.edges, 10, 0.5), tree, path_tree(10))
    if name == "dendrimer10":
        tree = build_rooted_tree(DENDRIMER10_EDGES, root=1)
        return ModelPreset(name, _ising_mrf(tree.edges, 10, 0.5), tree, path_tree(10))
    if name == "bipartite10":
        tree = build_rooted_tree(BIPARTITE10_EDGES, root=1)
        return ModelPreset(name, _ising_mrf(tree.edges, 10, 0.5), tree, path_tree(10))
    if name == "dendrimer94":
        edges = dendrimer_edges(5)
        tree = build_rooted_tree(edges, root=1)
        return ModelPreset(name, _ising_mrf(tree.edges, 94, 0.5), tree, path_tree(94))
    if name == "path-ising":
        d = int(params.get("d", 100))
        tree = path_tree(d)
        return ModelPreset(name, _ising_mrf(tree.edges, d, 0.5), tree, tree)
    if name == "nonlocal-clock":
        d = int(params.get("d", 32))
        table = _clock_table()
        pairs = [(i, j) for i in range(1, d + 1) for j in (i + 1, i + 2) if j <= d]
        theta = np.arange(4) * (np.pi / 2)
        mrf = PairwiseMRF(
            d=d,
            state_counts=np.full(d, 4),
            beta=0.25,
            interactions={(i, j): table.copy() for i, j in pairs},
            state_values={k: theta.copy() for k in range(1, d + 1)},
        )
        return ModelPreset(name, mrf, path_tree(d), path_tree(d))
    if name == "ring":
        d = int(params.get("d", 16))
        pairs = [(i, i + 1) for i in range(1, d)] + [(1, d)]
        mrf = _ising_mrf(pairs, d, beta=float(params.get("beta", 0.5)))
        return ModelPreset(name, mrf, path_tree(d), path_tree(d))
    raise ValueError(f"unknown preset name: {name!r}")


def mrf_full_tensor(mrf: PairwiseMRF) -> np.ndarray:
    """Normalized dense density; refuses state spaces above the guard."""
    size = int(np.prod(mrf.state_counts))
    if size > FULL_TENSOR_GUARD:
        raise ValueError(f"state space of {size} entries too large to enumerate")
    d = mrf.d
    energy = np.zeros(tuple(int(n) for n in mrf.state_counts), dtype=np.float64)
    for (i, j), table in mrf.interactions.items():
        # tables are keyed i < j, so a plain reshape broadcasts correctly
        shape = tuple(
            int(mrf.state_counts[a]) if a in (i - 1, j - 1) else 1 for a in range(d)
        )
        energy += table.reshape(shape)
    weights = np.exp(-mrf.beta * energy)
    return weights / weights.sum()


def _tree_messages(
    mrf: PairwiseMRF, tree: RootedTree
) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Root marginal and child-given-parent conditionals of a tree MRF.

    One upward belief-propagation pass; messages are normalized as computed
    so deep trees stay in range.
    """
    if sorted(mrf.interaction_edges) != sorted(
        tuple(sorted(e)) for e in tree.edges
    ):
        raise ValueError("interaction graph does not equal the given tree")
    psi: dict[tuple[int, int], np.ndarray] = {}
    for (i, j), table in mrf.interactions.items():
        psi[(i, j)] = np.exp(-mrf.beta * table)
    up: dict[int, np.ndarray] = {}
    # phi[w] collects the product of children messages at w (before the edge
    # potential towards the parent is applied)
    phi: dict[int, np.ndarray] = {}
    for w in reversed(tree.topo_order):
        belief = np.ones(int(mrf.state_counts[w - 1]))
        for c in tree.children(w):
            belief = belief * up[c]
        phi[w] = belief
        p = tree.parent(w)
        if p is not None:
            i, j = min(w, p), max(w, p)
            table = psi[(i, j)]
            msg = table.T @ belief if i == w else table @ belief
            up[w] = msg / msg.sum()
    root_marginal = phi[tree.root] / phi[tree.root].sum()
    conditionals: dict[int, np.ndarray] = {}
    for w in tree.nodes:
        p = tree.parent(w)
        if p is None:
            continue
        i, j = min(w, p), max(w, p)
        table = psi[(i, j)]
        pair = table if i == w else table.T  # (n_w, n_p)
        joint = pair * phi[w][:, None]
        conditionals[w] = joint / joint.sum(axis=0, keepdims=True)  # P(x_w | x_p)
    return root_marginal, conditionals


def mrf_sample(mrf: PairwiseMRF, n_samples: int, seed: int) -> DiscreteSamples:
    """Exact i.i.d. samples.

    Tree-structured models use ancestral sampling over any rooted version of
    the interaction graph; anything else falls back to enumeration and
    inverse-CDF draws (guarded).
    """
    rng = np.random.default_rng(seed)
    if n_samples == 0:
        return DiscreteSamples(
            np.zeros((0, mrf.d), dtype=np.int64), mrf.state_counts.copy()
        )
    if mrf.is_tree_structured():
        tree = build_rooted_tree(mrf.interaction_edges, root=1, d=mrf.d)
        pi, cond = _tree_messages(mrf, tree)
        return _ancestral_sample(tree, pi, cond, mrf.state_counts, n_samples, rng)
    size = int(np.prod(mrf.state_counts))
    if size > FULL_TENSOR_GUARD:
        raise ValueError("loopy interaction graph with intractable state space")
    p = mrf_full_tensor(mrf)
    flat = np.searchsorted(np.cumsum(p.ravel()), rng.random(n_samples), side="right")
    flat = np.minimum(flat, p.size - 1)
    cols = np.unravel_index(flat, p.shape)
    return DiscreteSamples(np.stack(cols, axis=1), mrf.state_counts.copy())


def _ancestral_sample(
    tree: RootedTree,
    root_marginal: np.ndarray,
    conditionals: dict[int, np.ndarray],
    state_counts: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
) -> DiscreteSamples:
    X = np.zeros((n_samples, tree.d), dtype=np.int64)
    u = rng.random(n_samples)
    X[:, tree.root - 1] = np.minimum(
        np.searchsorted(np.cumsum(root_marginal), u, side="right"),
        root_marginal.size - 1,
    )
    for k in tree.topo_order:
        p = tree.parent(k)
        if p is None:
            continue
        table = conditionals[k]  # (n_k, n_p), columns sum to one
        cum = np.cumsum(table.T, axis=1)  # row per parent state
        rows = cum[X[:, p - 1]]
        u = rng.random(n_samples)
        X[:, k - 1] = np.minimum(
            (rows < u[:, None]).sum(axis=1), table.shape[0] - 1
        )
    return DiscreteSamples(X, state_counts.copy())


def tree_gm_cores(
    tree: RootedTree,
    root_marginal: np.ndarray,
    conditionals: dict[int, np.ndarray],
) -> TTNS:
    """Assemble the exact TTNS of a rooted tree graphical model.

    The bond of edge (w, k) carries the parent state, so every rank equals
    the parent's state count.
    """
    n = {tree.root: root_marginal.size}
    for w in tree.nodes:
        if w != tree.root:
            n[w] = conditionals[w].shape[0]
    ranks = {(w, k): n[k] for (w, k) in tree.edges}
    cores: dict[int, np.ndarray] = {}
    for k in tree.topo_order:
        kids = tree.children(k)
        if tree.is_root(k):
            base = root_marginal.copy()  # (n_k,)
        else:
            base = conditionals[k].copy()  # (n_k, n_parent)
        m = len(kids)
        if m == 0:
            cores[k] = base
            continue
        # each child bond is a copy of x_k: nonzero only on the joint diagonal
        core = np.zeros((n[k],) * m + base.shape)
        idx = np.arange(n[k])
        core[(idx,) * (m + 1)] = base
        cores[k] = core
    return TTNS(tree, ranks, cores)


def tree_gm_to_ttns(mrf: PairwiseMRF, tree: RootedTree) -> TTNS:
    """Exact TTNS of a tree-structured MRF over the given rooted tree."""
    pi, cond = _tree_messages(mrf, tree)
    return tree_gm_cores(tree, pi, cond)
