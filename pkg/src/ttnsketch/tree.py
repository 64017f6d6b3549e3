"""Rooted trees and the graph queries used throughout the package.

Nodes are labelled 1..d. After rooting, every edge is keyed canonically as
(child, parent); unordered input edges are normalized on construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class TreeStructureError(ValueError):
    """Input edges do not describe a rooted tree."""


class CycleError(TreeStructureError):
    pass


class DisconnectedError(TreeStructureError):
    pass


class NodeRangeError(TreeStructureError):
    pass


@dataclass(frozen=True)
class Relations:
    """All tree-relative sets of one node (sorted tuples)."""

    children: tuple[int, ...]
    parent: int | None
    neighbors: tuple[int, ...]
    descendants: tuple[int, ...]
    non_descendants: tuple[int, ...]
    incident_edges: tuple[tuple[int, int], ...]


class RootedTree:
    """Immutable rooted tree on nodes 1..d.

    Build through :func:`build_rooted_tree`; the constructor assumes a
    validated parent map.
    """

    def __init__(self, d: int, root: int, parent: dict[int, int]):
        self.d = d
        self.root = root
        self._parent = dict(parent)
        children: dict[int, list[int]] = {k: [] for k in range(1, d + 1)}
        for c, p in parent.items():
            children[p].append(c)
        self._children = {k: tuple(sorted(v)) for k, v in children.items()}
        # Topological order, root first; children visited in ascending id.
        order: list[int] = []
        stack = [root]
        while stack:
            k = stack.pop()
            order.append(k)
            stack.extend(reversed(self._children[k]))
        self._topo = tuple(order)
        desc: dict[int, set[int]] = {k: set() for k in range(1, d + 1)}
        for k in reversed(self._topo):
            for c in self._children[k]:
                desc[k].add(c)
                desc[k] |= desc[c]
        self._desc = {k: tuple(sorted(v)) for k, v in desc.items()}

    # -- basic queries -------------------------------------------------

    @property
    def nodes(self) -> range:
        return range(1, self.d + 1)

    def parent(self, k: int) -> int | None:
        self._check_node(k)
        return self._parent.get(k)

    def children(self, k: int) -> tuple[int, ...]:
        self._check_node(k)
        return self._children[k]

    def neighbors(self, k: int) -> tuple[int, ...]:
        p = self.parent(k)
        return tuple(sorted(self._children[k] + ((p,) if p is not None else ())))

    def descendants(self, k: int) -> tuple[int, ...]:
        """Strict descendants of k (the nodes 'below' k)."""
        self._check_node(k)
        return self._desc[k]

    def non_descendants(self, k: int) -> tuple[int, ...]:
        """Everything that is neither k nor below it."""
        below = set(self.descendants(k))
        return tuple(v for v in self.nodes if v != k and v not in below)

    def subtree(self, k: int) -> tuple[int, ...]:
        return tuple(sorted(self.descendants(k) + (k,)))

    def is_leaf(self, k: int) -> bool:
        return not self.children(k)

    def is_root(self, k: int) -> bool:
        return k == self.root

    @property
    def leaves(self) -> tuple[int, ...]:
        return tuple(k for k in self.nodes if self.is_leaf(k))

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """All edges as (child, parent), sorted by child id."""
        return tuple((k, self._parent[k]) for k in self.nodes if k != self.root)

    def edge_key(self, u: int, v: int) -> tuple[int, int]:
        """Canonical (child, parent) key of the undirected edge {u, v}."""
        if self._parent.get(u) == v:
            return (u, v)
        if self._parent.get(v) == u:
            return (v, u)
        raise TreeStructureError(f"({u}, {v}) is not an edge of the tree")

    @property
    def topo_order(self) -> tuple[int, ...]:
        """Root-first order; reversed(topo_order) visits leaves first."""
        return self._topo

    def distances_from(self, k: int) -> dict[int, int]:
        """Hop distance from k to every node (BFS on the tree)."""
        self._check_node(k)
        dist = {k: 0}
        frontier = [k]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.neighbors(u):
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist

    def _check_node(self, k: int) -> None:
        if not (isinstance(k, (int,)) and 1 <= k <= self.d):
            raise NodeRangeError(f"node id {k} outside 1..{self.d}")

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {"d": self.d, "root": self.root, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, obj: dict) -> "RootedTree":
        return build_rooted_tree([tuple(e) for e in obj["edges"]], obj["root"], d=obj["d"])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RootedTree)
            and self.d == other.d
            and self.root == other.root
            and self._parent == other._parent
        )

    def __repr__(self) -> str:
        return f"RootedTree(d={self.d}, root={self.root})"


def build_rooted_tree(
    edges: Iterable[Sequence[int]], root: int, d: int | None = None
) -> RootedTree:
    """Orient an unordered spanning-tree edge list away from ``root``.

    ``d`` defaults to the largest node id mentioned. Rejects cycles,
    disconnected inputs and out-of-range ids with distinct errors.
    """
    edge_list = [tuple(e) for e in edges]
    seen = {root}
    for e in edge_list:
        if len(e) != 2:
            raise TreeStructureError(f"edge {e} is not a pair")
        seen.update(e)
    n = d if d is not None else max(seen)
    for v in sorted(seen):
        if not (isinstance(v, int) and 1 <= v <= n):
            raise NodeRangeError(f"node id {v} outside 1..{n}")
    if len(edge_list) > n - 1:
        raise CycleError(f"{len(edge_list)} edges on {n} nodes cannot be acyclic")
    if len(edge_list) < n - 1:
        raise DisconnectedError(f"{len(edge_list)} edges cannot connect {n} nodes")

    adj: dict[int, list[int]] = {k: [] for k in range(1, n + 1)}
    for u, v in edge_list:
        adj[u].append(v)
        adj[v].append(u)
    parent: dict[int, int] = {}
    visited = {root}
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v in visited:
                    if parent.get(u) != v:
                        raise CycleError(f"cycle detected through edge ({u}, {v})")
                    continue
                visited.add(v)
                parent[v] = u
                nxt.append(v)
        frontier = nxt
    if len(visited) != n:
        missing = sorted(set(range(1, n + 1)) - visited)
        raise DisconnectedError(f"nodes {missing} unreachable from root {root}")
    return RootedTree(n, root, parent)


def tree_relations(tree: RootedTree, k: int) -> Relations:
    """Children/parent/neighbors/descendants/non-descendants/edges of k."""
    return Relations(
        children=tree.children(k),
        parent=tree.parent(k),
        neighbors=tree.neighbors(k),
        descendants=tree.descendants(k),
        non_descendants=tree.non_descendants(k),
        incident_edges=tuple(sorted(tree.edge_key(k, v) for v in tree.neighbors(k))),
    )


def path_tree(d: int, root: int = 1) -> RootedTree:
    """The path 1-2-...-d, rooted at ``root``."""
    return build_rooted_tree([(i, i + 1) for i in range(1, d)], root)
