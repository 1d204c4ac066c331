"""Bid-ask matrices and polyhedral cone arithmetic in small dimension.

Every cone carries both representations: generators (unit ray directions)
and halfspaces {x : <n, x> >= 0}. Conversion in either direction is the
same primitive, extreme-ray enumeration of an intersection of homogeneous
halfspaces, because the polar swaps the two forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .solver import LinearProgram, lp_solve
from .tolerances import DEFAULT, Tolerances
from .tree import ScenarioTree


class ConeError(ValueError):
    pass


class NonPositiveEntry(ConeError):
    pass


class DiagonalNotOne(ConeError):
    pass


class TriangleViolation(ConeError):
    """Chained exchange beats the direct rate. Indices are 1-based assets."""

    def __init__(self, i: int, k: int, j: int, direct: float, chained: float):
        super().__init__(
            f"pi[{i}][{j}]={direct!r} exceeds pi[{i}][{k}]*pi[{k}][{j}]={chained!r}"
        )
        self.indices = (i, k, j)


class DimensionTooLarge(ConeError):
    pass


MAX_DIM = 8


@dataclass(frozen=True)
class BidAskMatrix:
    """Validated d x d matrix of exchange rates.

    entries[i][j] is the number of units of asset i that buy one unit of
    asset j; unit diagonal; no chained exchange beats a direct one.
    """

    entries: np.ndarray

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def is_frictionless(self, rel: float = 1e-12) -> bool:
        prod = self.entries * self.entries.T
        return bool(np.all(np.abs(prod - 1.0) <= rel * prod))


@dataclass(frozen=True)
class PolyCone:
    """Polyhedral cone with unit generators and halfspace normals."""

    dim: int
    generators: np.ndarray   # (g, d) unit rows; cone = nonneg combinations
    halfspaces: np.ndarray   # (m, d) rows n: cone = {x : <n, x> >= 0 for all n}


@dataclass(frozen=True)
class RandomMarketSpec:
    """Seeded recipe for a per-node bid-ask process on a given tree."""

    d: int
    spread_lo: float
    spread_hi: float
    seed: int

    def __post_init__(self):
        if self.spread_lo < 0 or self.spread_hi < self.spread_lo:
            raise ConeError("need 0 <= spread_lo <= spread_hi")


def validate_bidask(entries, tol: Tolerances = DEFAULT) -> BidAskMatrix:
    """Check the three bid-ask axioms; raise naming the violated one."""
    pi = np.asarray(entries, dtype=np.float64)
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1] or pi.shape[0] < 1:
        raise ConeError(f"expected a square matrix, got shape {pi.shape}")
    d = pi.shape[0]
    if np.any(pi <= 0.0) or not np.all(np.isfinite(pi)):
        i, j = np.unravel_index(int(np.argmin(pi)), pi.shape)
        raise NonPositiveEntry(f"pi[{i + 1}][{j + 1}] = {pi[i, j]!r}")
    diag = np.diagonal(pi)
    if np.any(diag != 1.0):
        i = int(np.argmax(diag != 1.0))
        raise DiagonalNotOne(f"pi[{i + 1}][{i + 1}] = {pi[i, i]!r}")
    for i in range(d):
        for j in range(d):
            chained = pi[i, :] * pi[:, j]
            k = int(np.argmin(chained))
            if pi[i, j] > chained[k] * (1.0 + tol.triangle_rel):
                raise TriangleViolation(i + 1, k + 1, j + 1, pi[i, j], chained[k])
    return BidAskMatrix(entries=pi)


def _unit(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 0
    return rows[keep] / norms[keep][:, None]


def _dedupe(rows: np.ndarray, tol: float) -> np.ndarray:
    out: list[np.ndarray] = []
    for r in rows:
        if all(np.linalg.norm(r - q) > tol for q in out):
            out.append(r)
    return np.array(out) if out else np.zeros((0, rows.shape[1]))


def extreme_rays(normals: np.ndarray, dim: int, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Generators of {x : <n, x> >= 0 for n in normals}, unit rows.

    Handles lineality: the result contains a +/- basis of the largest
    subspace inside the cone plus the extreme rays of the pointed part.
    """
    if dim > MAX_DIM:
        raise DimensionTooLarge(f"d={dim} exceeds supported {MAX_DIM}")
    normals = _unit(np.asarray(normals, dtype=np.float64).reshape(-1, dim))
    if normals.shape[0] == 0:
        eye = np.eye(dim)
        return np.vstack([eye, -eye])

    # lineality space: null space of the normal matrix
    _, s, vt = np.linalg.svd(normals, full_matrices=True)
    rank = int((s > 1e-12).sum())
    lin = vt[rank:]                      # rows span the lineality space
    basis_w = vt[:rank]                  # rows span the pointed working space
    rays: list[np.ndarray] = [v for v in lin] + [-v for v in lin]

    dprime = rank
    M = normals @ basis_w.T              # normals expressed in the working space
    if dprime == 1:
        for cand in (np.array([1.0]), np.array([-1.0])):
            if np.all(M @ cand >= -tol.cone_contains):
                rays.append(basis_w.T @ cand)
    elif dprime > 1:
        for idx in combinations(range(M.shape[0]), dprime - 1):
            sub = M[list(idx)]
            _, s2, vt2 = np.linalg.svd(sub, full_matrices=True)
            nullity = dprime - int((s2 > 1e-10).sum())
            if nullity != 1:
                continue
            v = vt2[-1]
            slack = M @ v
            if np.all(slack >= -tol.cone_contains):
                w = v
            elif np.all(-slack >= -tol.cone_contains):
                w = -v
            else:
                continue
            active = np.abs(M @ w) <= tol.cone_contains
            if int((np.linalg.matrix_rank(M[active], tol=1e-10)
                    if active.any() else 0)) == dprime - 1:
                rays.append(basis_w.T @ w)

    rays_arr = _unit(np.array(rays)) if rays else np.zeros((0, dim))
    rays_arr = _dedupe(rays_arr, tol.ray_dedupe)
    if rays_arr.shape[0] == 0:
        return np.zeros((0, dim))
    order = np.lexsort(np.round(rays_arr, 9).T[::-1])
    return rays_arr[order]


def cone_from_halfspaces(normals, dim: int, tol: Tolerances = DEFAULT) -> PolyCone:
    normals = _unit(np.asarray(normals, dtype=np.float64).reshape(-1, dim))
    return PolyCone(dim=dim, generators=extreme_rays(normals, dim, tol),
                    halfspaces=normals)


def cone_from_generators(gens, dim: int, tol: Tolerances = DEFAULT) -> PolyCone:
    gens = _unit(np.asarray(gens, dtype=np.float64).reshape(-1, dim))
    halfspaces = extreme_rays(gens, dim, tol)  # generators of the polar
    return PolyCone(dim=dim, generators=gens, halfspaces=halfspaces)


def in_generated_cone(gens: np.ndarray, x: np.ndarray, tol: Tolerances = DEFAULT) -> bool:
    """Feasibility LP: does x lie in the cone spanned by `gens` rows?"""
    if gens.shape[0] == 0:
        return bool(np.all(np.abs(x) <= tol.cone_contains))
    prog = LinearProgram(
        c=np.zeros(gens.shape[0]),
        A_eq=gens.T,
        b_eq=np.asarray(x, dtype=np.float64),
    )
    return lp_solve(prog, tol).status == "optimal"


def prune_generators(gens: np.ndarray, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Drop generators lying in the cone of the remaining ones, in order."""
    keep = list(range(gens.shape[0]))
    for i in range(gens.shape[0]):
        if len(keep) == 1:
            break
        others = [j for j in keep if j != i]
        if i in keep and in_generated_cone(gens[others], gens[i], tol):
            keep.remove(i)
    return gens[keep]


def solvency_cone(pi: BidAskMatrix, tol: Tolerances = DEFAULT) -> PolyCone:
    """Cone of solvent positions for the terms of trade in `pi`.

    Generated by the unit vectors and pi[i][j] e_i - e_j; redundant rays
    are pruned, and halfspaces come from the polar round trip.
    """
    d = pi.d
    gens = [np.eye(d)[i] for i in range(d)]
    for i in range(d):
        for j in range(d):
            if i != j:
                v = pi.entries[i, j] * np.eye(d)[i] - np.eye(d)[j]
                gens.append(v)
    raw = _dedupe(_unit(np.array(gens)), tol.ray_dedupe)
    pruned = prune_generators(raw, tol)
    halfspaces = extreme_rays(pruned, d, tol)
    return PolyCone(dim=d, generators=pruned, halfspaces=halfspaces)


def polar_cone(K: PolyCone, tol: Tolerances = DEFAULT) -> PolyCone:
    """Positive polar K+ = {w : <v, w> >= 0 for all v in K}."""
    if K.dim > MAX_DIM:
        raise DimensionTooLarge(f"d={K.dim} exceeds supported {MAX_DIM}")
    halfspaces = K.generators.copy()
    gens = extreme_rays(halfspaces, K.dim, tol)
    return PolyCone(dim=K.dim, generators=gens, halfspaces=halfspaces)


def contains(K: PolyCone, x, tol: float = DEFAULT.cone_contains) -> bool:
    """Tolerance-relaxed halfspace membership test."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (K.dim,):
        raise ConeError(f"point has shape {x.shape}, cone dim {K.dim}")
    if K.halfspaces.shape[0] == 0:
        return True
    slack = K.halfspaces @ x
    return bool(np.all(slack >= -tol * (1.0 + float(np.linalg.norm(x)))))


def random_bidask_process(
    spec: RandomMarketSpec,
    tree: ScenarioTree,
    tol: Tolerances = DEFAULT,
) -> list[BidAskMatrix]:
    """One validated bid-ask matrix per node, deterministic in the seed.

    Per node: sample a positive price vector w, set
    pi[i][j] = (w_j / w_i) * (1 + spread_ij), then enforce the triangle
    axiom by a min-plus transitive closure in the log domain.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.d
    out = []
    for _ in range(tree.n_nodes):
        w = np.exp(rng.uniform(-1.0, 1.0, size=d))
        spread = rng.uniform(spec.spread_lo, spec.spread_hi, size=(d, d))
        pi = (w[None, :] / w[:, None]) * (1.0 + spread)
        np.fill_diagonal(pi, 1.0)
        L = np.log(pi)
        for k in range(d):  # Floyd-Warshall closure: cheapest exchange chain
            L = np.minimum(L, L[:, k:k + 1] + L[k:k + 1, :])
        pi = np.exp(L)
        np.fill_diagonal(pi, 1.0)
        out.append(validate_bidask(pi, tol))
    return out
