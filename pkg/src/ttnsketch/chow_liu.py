"""Topology discovery: empirical mutual information, maximum-weight spanning
tree (Kruskal with a fixed tie-break), and the fitted tree graphical model."""

from __future__ import annotations

import numpy as np

from .data import DiscreteSamples
from .models import tree_gm_cores
from .tree import RootedTree, build_rooted_tree
from .ttns import TTNS

#: Additive smoothing applied to empirical conditionals so log-likelihoods
#: stay finite on states never observed.
SMOOTHING = 1e-9


def _pair_table(samples: DiscreteSamples, i: int, j: int) -> np.ndarray:
    ni = int(samples.state_counts[i - 1])
    nj = int(samples.state_counts[j - 1])
    code = samples.column(i) * nj + samples.column(j)
    return np.bincount(code, minlength=ni * nj).reshape(ni, nj).astype(np.float64)


def empirical_mi(samples: DiscreteSamples, i: int, j: int) -> float:
    """Plug-in mutual information of the empirical pair table, in nats."""
    if i == j:
        raise ValueError("mutual information needs two distinct nodes")
    if samples.n_rows == 0:
        raise ValueError("no samples")
    joint = _pair_table(samples, i, j) / samples.n_rows
    pi = joint.sum(axis=1, keepdims=True)
    pj = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    mi = float(np.sum(joint[mask] * np.log(joint[mask] / (pi @ pj)[mask])))
    return max(mi, 0.0)


def mi_matrix(samples: DiscreteSamples) -> np.ndarray:
    """Symmetric d x d matrix of pairwise empirical MI, zero diagonal."""
    d = samples.d
    M = np.zeros((d, d))
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            M[i - 1, j - 1] = M[j - 1, i - 1] = empirical_mi(samples, i, j)
    return M


def chow_liu_tree(samples: DiscreteSamples, root: int = 1) -> RootedTree:
    """Maximum-MI spanning tree (Kruskal); ties broken by (min id, max id)."""
    d = samples.d
    M = mi_matrix(samples)
    order = sorted(
        ((i, j) for i in range(1, d + 1) for j in range(i + 1, d + 1)),
        key=lambda e: (-M[e[0] - 1, e[1] - 1], e[0], e[1]),
    )
    parent = list(range(d + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    for i, j in order:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            chosen.append((i, j))
            if len(chosen) == d - 1:
                break
    return build_rooted_tree(chosen, root, d=d)


def chow_liu_model(samples: DiscreteSamples, tree: RootedTree) -> TTNS:
    """Maximum-likelihood tree graphical model fitted on the given tree.

    Returned in TTNS form (same core construction as exact tree models) so it
    is directly comparable to sketched fits.
    """
    N = samples.n_rows
    nroot = int(samples.state_counts[tree.root - 1])
    counts = np.bincount(samples.column(tree.root), minlength=nroot).astype(np.float64)
    counts += SMOOTHING
    root_marginal = counts / counts.sum()
    conditionals: dict[int, np.ndarray] = {}
    for w in tree.nodes:
        p = tree.parent(w)
        if p is None:
            continue
        joint = _pair_table(samples, w, p) + SMOOTHING
        conditionals[w] = joint / joint.sum(axis=0, keepdims=True)
    return tree_gm_cores(tree, root_marginal, conditionals)
