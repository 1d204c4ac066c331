"""Finite filtered probability spaces as rooted scenario trees.

A tree with horizon T represents (Omega, (F_t)_{t=0..T}, P): the atoms of
F_t are the depth-t nodes, the leaves are the elementary outcomes, and the
node masses carry P. Node ids are dense integers in breadth-first order so
every adapted quantity can live in a flat array indexed by node id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tolerances import DEFAULT, Tolerances


class TreeError(ValueError):
    pass


class NonPositiveProbability(TreeError):
    pass


class MassMismatch(TreeError):
    pass


class DepthMismatch(TreeError):
    pass


class TimeOutOfRange(TreeError):
    pass


@dataclass(frozen=True)
class ScenarioTree:
    """Rooted tree with per-node probability mass.

    Attributes
    ----------
    horizon : int
        Terminal time T; every leaf sits at depth T.
    parent : (n,) int array, -1 at the root.
    depth : (n,) int array, equal to time t of the node.
    mass : (n,) float array, positive; children sum to their parent.
    children : per-node tuple of child ids, in input order.
    levels : tuple of id arrays, one per depth 0..T.
    leaves : alias for levels[T].
    leaf_slice : (n, 2) int array; leaves[lo:hi] are the leaves under a node.
    leaf_paths : (N, T+1) int array; node ids on the root-to-leaf path.
    """

    horizon: int
    parent: np.ndarray
    depth: np.ndarray
    mass: np.ndarray
    children: tuple[tuple[int, ...], ...]
    levels: tuple[np.ndarray, ...] = field(repr=False)
    leaves: np.ndarray = field(repr=False)
    leaf_slice: np.ndarray = field(repr=False)
    leaf_paths: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.parent.shape[0]

    @property
    def n_leaves(self) -> int:
        return self.leaves.shape[0]

    @property
    def leaf_mass(self) -> np.ndarray:
        return self.mass[self.leaves]

    def subtree_leaves(self, node: int) -> np.ndarray:
        """Leaf indices (positions in `leaves` order) under `node`."""
        lo, hi = self.leaf_slice[node]
        return np.arange(lo, hi)


def build_tree(
    branching: list[int] | None = None,
    nodes: list[dict] | None = None,
    tol: Tolerances = DEFAULT,
) -> ScenarioTree:
    """Build and validate a ScenarioTree.

    Exactly one of the two inputs must be given. `branching` is a list of
    per-level child counts; children get a uniform share of the parent mass.
    `nodes` is an explicit list of `{"parent": id or None, "mass": float}`
    dicts in breadth-first order (parents before children).
    """
    if (branching is None) == (nodes is None):
        raise TreeError("give exactly one of branching= or nodes=")

    if branching is not None:
        node_list: list[tuple[int, float]] = [(-1, 1.0)]
        level = [0]
        for k in branching:
            if k < 1:
                raise TreeError(f"branching factor must be >= 1, got {k}")
            nxt = []
            for v in level:
                share = node_list[v][1] / k
                for _ in range(k):
                    nxt.append(len(node_list))
                    node_list.append((v, share))
            level = nxt
        parent = np.array([p for p, _ in node_list], dtype=np.int64)
        mass = np.array([m for _, m in node_list], dtype=np.float64)
    else:
        parent = np.empty(len(nodes), dtype=np.int64)
        mass = np.empty(len(nodes), dtype=np.float64)
        for i, spec in enumerate(nodes):
            p = spec.get("parent")
            parent[i] = -1 if p is None else int(p)
            mass[i] = float(spec["mass"])
            if parent[i] >= i:
                raise TreeError(f"node {i}: parent {p} must precede its child")

    return _validate(parent, mass, tol)


def _validate(parent: np.ndarray, mass: np.ndarray, tol: Tolerances) -> ScenarioTree:
    n = parent.shape[0]
    if n == 0 or (parent == -1).sum() != 1 or parent[0] != -1:
        raise TreeError("need exactly one root, at index 0")
    if np.any(mass <= 0.0):
        bad = int(np.argmax(mass <= 0.0))
        raise NonPositiveProbability(f"node {bad} has mass {mass[bad]!r}")
    if abs(mass[0] - 1.0) > tol.mass_check:
        raise MassMismatch(f"root mass {mass[0]!r} != 1")

    depth = np.zeros(n, dtype=np.int64)
    children: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        depth[v] = depth[parent[v]] + 1
        children[parent[v]].append(v)

    for v in range(n):
        if children[v]:
            s = mass[children[v]].sum()
            if abs(s - mass[v]) > tol.mass_check * max(1.0, mass[v]):
                raise MassMismatch(
                    f"children of node {v} sum to {s!r}, parent mass {mass[v]!r}"
                )

    horizon = int(depth.max())
    leaf_ids = [v for v in range(n) if not children[v]]
    for v in leaf_ids:
        if depth[v] != horizon:
            raise DepthMismatch(f"leaf {v} at depth {depth[v]}, horizon is {horizon}")

    levels = tuple(
        np.array([v for v in range(n) if depth[v] == t], dtype=np.int64)
        for t in range(horizon + 1)
    )
    leaves = levels[horizon]

    # breadth-first ids make each node's descendant leaves contiguous
    leaf_pos = {int(v): i for i, v in enumerate(leaves)}
    leaf_slice = np.zeros((n, 2), dtype=np.int64)
    for v in range(n - 1, -1, -1):
        if not children[v]:
            leaf_slice[v] = (leaf_pos[v], leaf_pos[v] + 1)
        else:
            lo = leaf_slice[children[v][0]][0]
            hi = leaf_slice[children[v][-1]][1]
            if hi - lo != sum(leaf_slice[c][1] - leaf_slice[c][0] for c in children[v]):
                raise TreeError("non-contiguous descendant leaves")
            leaf_slice[v] = (lo, hi)

    leaf_paths = np.zeros((len(leaves), horizon + 1), dtype=np.int64)
    for i, leaf in enumerate(leaves):
        v = int(leaf)
        for t in range(horizon, -1, -1):
            leaf_paths[i, t] = v
            v = int(parent[v])

    return ScenarioTree(
        horizon=horizon,
        parent=parent,
        depth=depth,
        mass=mass,
        children=tuple(tuple(c) for c in children),
        levels=levels,
        leaves=leaves,
        leaf_slice=leaf_slice,
        leaf_paths=leaf_paths,
    )


def conditional_expectation(tree: ScenarioTree, x: np.ndarray, t: int) -> np.ndarray:
    """E[x | F_t] on the depth-t atoms.

    `x` holds one d-vector per leaf, shape (N, d). Returns shape (len(levels[t]), d)
    aligned with tree.levels[t]: at node v the value is
    sum over leaves under v of mass(leaf) * x(leaf) / mass(v).
    """
    if not 0 <= t <= tree.horizon:
        raise TimeOutOfRange(f"t={t} outside 0..{tree.horizon}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != tree.n_leaves:
        raise TreeError(f"x has {x.shape[0]} rows, tree has {tree.n_leaves} leaves")
    weighted = tree.leaf_mass[:, None] * x
    csum = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(weighted, axis=0)])
    out = np.empty((len(tree.levels[t]), x.shape[1]))
    for i, v in enumerate(tree.levels[t]):
        lo, hi = tree.leaf_slice[v]
        out[i] = (csum[hi] - csum[lo]) / tree.mass[v]
    return out


def embed_to_leaves(tree: ScenarioTree, values_t: np.ndarray, t: int) -> np.ndarray:
    """Spread depth-t node values back onto the leaves (F_t-measurable lift)."""
    if not 0 <= t <= tree.horizon:
        raise TimeOutOfRange(f"t={t} outside 0..{tree.horizon}")
    index_of = {int(v): i for i, v in enumerate(tree.levels[t])}
    anc = tree.leaf_paths[:, t]
    return values_t[[index_of[int(v)] for v in anc]]
