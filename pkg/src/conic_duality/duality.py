"""Scalarized primal and dual programs and the set-valued value objects.

Scalarizing against a nonnegative weight turns the set-valued portfolio
problem into a pair of smooth convex programs whose optimal values are the
support data of the upper image: the primal minimizes the weighted expected
disutility over attainable terminal positions; the dual maximizes the
weighted conjugate kernel over densities in the polar of the attainable
cone. Weak duality is asserted on every solve; the gap between the two is
the quantity the acceptance suite pins down.

The dual objective carries the endowment correction term -E<y, x0*1>: the
attainable set from a nonzero endowment is a translated cone, and the
support function of the translation contributes this linear term. Without
it the two sides only agree at zero endowment.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .market import (
    AttainableSet,
    consistent_pricing_process,
    dual_feasibility,
    membership,
    plan_matrix,
    polar_constraint_rows,
)
from .solver import LinearProgram, SmoothProgram, lp_solve, smooth_solve
from .tolerances import DEFAULT, Tolerances
from .utility import EXP_CLAMP, VectorUtility


class DualityError(RuntimeError):
    pass


class WeakDualityViolation(DualityError):
    """Dual value exceeds primal value beyond tolerance; a solver bug."""


class SeparationFailure(DualityError):
    """No separating functional found for a point claimed infeasible."""


@dataclass(frozen=True)
class Weight:
    """Scalarization weight: nonnegative, nonzero, normalized to sum 1."""

    z: np.ndarray
    interior: bool = field(default=False)

    @classmethod
    def make(cls, z, eps: float = DEFAULT.grid_eps) -> "Weight":
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 1 or np.any(z < 0) or z.sum() <= 0:
            raise DualityError(f"weight must be nonnegative and nonzero: {z!r}")
        z = z / z.sum()
        return cls(z=z, interior=bool(z.min() >= eps))


def as_weight_vector(z) -> np.ndarray:
    """Accept a Weight or a raw nonnegative vector (kept unnormalized)."""
    if isinstance(z, Weight):
        return z.z
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or np.any(z < 0) or z.sum() <= 0:
        raise DualityError(f"weight must be nonnegative and nonzero: {z!r}")
    return z


@dataclass(frozen=True)
class HalfSpace:
    """{z in R^d : support <= <normal, z>}; -inf means all of R^d."""

    normal: np.ndarray
    support: float

    def is_trivial(self) -> bool:
        return self.support == -math.inf

    def holds_at(self, point: np.ndarray, slack: float = 0.0) -> bool:
        if self.is_trivial():
            return True
        return float(self.normal @ point) >= self.support - slack


@dataclass
class ScalarSolveReport:
    """Per-weight primal/dual outcome."""

    weight: np.ndarray
    primal_value: float = math.nan
    dual_value: float = math.nan
    primal_argmin: np.ndarray | None = None
    dual_argmax: np.ndarray | None = None
    gap: float = math.nan
    iterations_primal: int = 0
    iterations_dual: int = 0
    status: str = "pending"


@dataclass
class UpperImage:
    """Outer halfspace intersection and inner attained points + R^d_+."""

    outer: list[HalfSpace]
    inner: np.ndarray                 # (k, d) attained objective points
    gap: np.ndarray                   # per-weight inner-minus-outer support
    weights: list[np.ndarray]


def simplex_grid(d: int, n: int, eps: float = DEFAULT.grid_eps) -> list[Weight]:
    """Interior weight grid: n points for d=2, a triangular lattice for d=3.

    Grids with the same eps are nested under n -> 2n - 1 refinement.
    """
    if d == 1:
        return [Weight.make(np.array([1.0]), eps)]
    if d == 2:
        z1 = np.linspace(eps, 1.0 - eps, n)
        return [Weight.make(np.array([a, 1.0 - a]), eps) for a in z1]
    if d == 3:
        m = n - 1
        h = (1.0 - 3 * eps) / m if m else 0.0
        out = []
        for i in range(m + 1):
            for j in range(m + 1 - i):
                k = m - i - j
                out.append(Weight.make(
                    np.array([eps + i * h, eps + j * h, eps + k * h]), eps))
        return out
    raise DualityError(f"weight grids implemented for d <= 3, got d={d}")


# ---------------------------------------------------------------------------
# scalarized objectives


def _primal_objective(A: AttainableSet, U: VectorUtility, z: np.ndarray):
    market = A.market
    tree = market.tree
    a, b = U.params()
    M = plan_matrix(market)
    x0_flat = np.tile(A.x0, tree.n_leaves)
    w = np.repeat(tree.leaf_mass, market.d) * np.tile(z * a, tree.n_leaves)
    inv_b = np.tile(1.0 / b, tree.n_leaves)

    def objective(lam: np.ndarray) -> tuple[float, np.ndarray]:
        x = x0_flat + M @ lam
        e = np.exp(np.clip(-x * inv_b, None, EXP_CLAMP))
        f = float(w @ e)
        grad_x = -w * inv_b * e
        return f, M.T @ grad_x

    return objective, M, x0_flat


def _dual_objective(A: AttainableSet, U: VectorUtility, z: np.ndarray):
    """Negated dual objective (for minimization) over leaf densities y."""
    market = A.market
    tree = market.tree
    a, b = U.params()
    mass = np.repeat(tree.leaf_mass, market.d)
    b_t = np.tile(b, tree.n_leaves)
    za_t = np.tile(z * a, tree.n_leaves)
    x0_t = np.tile(A.x0, tree.n_leaves)
    tiny = 1e-300

    def objective(y: np.ndarray) -> tuple[float, np.ndarray]:
        y_safe = np.maximum(y, 0.0)
        yb = y_safe * b_t
        with np.errstate(divide="ignore", invalid="ignore"):
            log_term = np.log(np.maximum(yb, tiny) / za_t)
            phi = np.where(y_safe > 0.0, yb * (1.0 - log_term), 0.0)
        f = -float(mass @ (phi - y_safe * x0_t))
        grad = mass * (b_t * np.log(np.maximum(yb, tiny) / za_t) + x0_t)
        return f, grad

    return objective


def primal_scalarize(
    A: AttainableSet,
    U: VectorUtility,
    z,
    tol: Tolerances = DEFAULT,
    max_iter: int = 200_000,
) -> ScalarSolveReport:
    """min over x in A_T(x0) of sum_l mass(l) sum_i z_i * (-u_i(x_i(l))).

    Solved in nonnegative trade coefficients; an unattained receding
    minimum is reported with primal_value = -inf per the library's
    unbounded sentinel convention.
    """
    zv = as_weight_vector(z)
    market = A.market
    objective, M, x0_flat = _primal_objective(A, U, zv)
    n_lam = M.shape[1]
    prog = SmoothProgram(objective=objective, n=n_lam,
                         nonneg=np.ones(n_lam, dtype=bool))
    res = smooth_solve(prog, np.zeros(n_lam), tol=tol, max_iter=max_iter)
    report = ScalarSolveReport(weight=zv)
    report.iterations_primal = res.iterations
    if res.status == "unbounded":
        report.primal_value = -math.inf
        report.status = "primal_unbounded"
        return report
    x = (x0_flat + M @ res.x).reshape(market.tree.n_leaves, market.d)
    report.primal_value = res.value
    report.primal_argmin = x
    report.status = "optimal" if res.status == "optimal" else res.status
    return report


def dual_scalarize(
    A: AttainableSet,
    U: VectorUtility,
    z,
    tol: Tolerances = DEFAULT,
    max_iter: int = 200_000,
    y_init: np.ndarray | None = None,
) -> ScalarSolveReport:
    """max over feasible densities y of E[phi(y, z) - <y, x0>].

    Feasibility is the conditional-expectation cone system of the polar of
    -A_T; the default start is the leaf restriction of the no-arbitrage
    certificate, which is always feasible.
    """
    zv = as_weight_vector(z)
    market = A.market
    tree = market.tree
    n_y = tree.n_leaves * market.d
    G = polar_constraint_rows(market)
    objective = _dual_objective(A, U, zv)
    if y_init is None:
        Z = consistent_pricing_process(market, tol)
        y_init = Z.leaf_restriction(tree)
    y0 = np.asarray(y_init, dtype=np.float64).ravel().copy()
    prog = SmoothProgram(objective=objective, n=n_y,
                         nonneg=np.ones(n_y, dtype=bool), G=G,
                         h=np.zeros(G.shape[0]))
    res = smooth_solve(prog, y0, tol=tol, max_iter=max_iter)
    report = ScalarSolveReport(weight=zv)
    report.iterations_dual = res.iterations
    report.dual_value = -res.value
    report.dual_argmax = res.x.reshape(tree.n_leaves, market.d)
    report.status = "optimal" if res.status == "optimal" else res.status
    return report


def lagrangian_halfspace(
    A: AttainableSet,
    U: VectorUtility,
    x: np.ndarray,
    y: np.ndarray,
    z,
    tol: Tolerances = DEFAULT,
) -> HalfSpace:
    """Value of the set-valued Lagrangian at (x, y, z): one halfspace.

    Support is <z, E[-U(x)]> + E<y, x> - E<y, x0*1> when y is feasible for
    the polar system, and -inf (the whole space) otherwise.
    """
    zv = as_weight_vector(z)
    if not dual_feasibility(A, y, tol.cone_contains):
        return HalfSpace(normal=zv, support=-math.inf)
    tree = A.market.tree
    neg_u = expected_disutility(A, U, x)
    pairing = float(np.sum(tree.leaf_mass[:, None] * y * (x - A.x0[None, :])))
    return HalfSpace(normal=zv, support=float(zv @ neg_u) + pairing)


def expected_disutility(A: AttainableSet, U: VectorUtility,
                        x: np.ndarray) -> np.ndarray:
    """E[-U(x)] componentwise: the objective-space point of a position."""
    a, b = U.params()
    tree = A.market.tree
    e = np.exp(np.clip(-np.asarray(x) / b[None, :], None, EXP_CLAMP))
    return (tree.leaf_mass[:, None] * a[None, :] * e).sum(axis=0)


@dataclass
class RecoveredF:
    point: np.ndarray      # E[-U(x)], contained in every sampled halfspace


@dataclass
class CertifiedInfeasible:
    y: np.ndarray          # feasible density with E<y, x - x0*1> > 0
    z: np.ndarray
    growth: float          # support gain per unit of scaling


def primal_recovery_check(
    A: AttainableSet,
    U: VectorUtility,
    x: np.ndarray,
    dual_samples: list[tuple[np.ndarray, np.ndarray]],
    tol: Tolerances = DEFAULT,
) -> RecoveredF | CertifiedInfeasible:
    """Recover feasibility information of x from Lagrangian halfspaces.

    Feasible x: every sampled (y, z) halfspace must contain E[-U(x)], and
    at y = 0 the support equals <z, E[-U(x)]> exactly. Infeasible x: a
    separating density is constructed by LP, so that scaling it drives the
    halfspace support to +inf and the intersection over duals to the empty
    set.
    """
    if not dual_samples:
        raise DualityError("need at least one dual sample")
    member, _ = membership(A, x, tol)
    point = expected_disutility(A, U, x)
    if member:
        for y, z in dual_samples:
            hs = lagrangian_halfspace(A, U, x, y, z, tol)
            if not hs.holds_at(point, slack=1e-7 * (1 + abs(hs.support))):
                raise DualityError(
                    "halfspace from a feasible dual sample excludes F(x)")
            zero_hs = lagrangian_halfspace(A, U, x, np.zeros_like(y), z, tol)
            zv = as_weight_vector(z)
            if abs(zero_hs.support - float(zv @ point)) > 1e-9 * (1 + abs(zero_hs.support)):
                raise DualityError("support at y = 0 does not match <z, E[-U(x)]>")
        return RecoveredF(point=point)

    y = _separating_density(A, x, tol)
    if y is None:
        raise SeparationFailure("membership is false but no separator found")
    tree = A.market.tree
    growth = float(np.sum(tree.leaf_mass[:, None] * y * (x - A.x0[None, :])))
    z = as_weight_vector(dual_samples[0][1])
    return CertifiedInfeasible(y=y, z=z, growth=growth)


def _separating_density(A: AttainableSet, x: np.ndarray, tol: Tolerances):
    """max E<y, x - x0*1> over the polar system, normalized E[sum y] = 1."""
    market = A.market
    tree = market.tree
    d = market.d
    G = polar_constraint_rows(market)
    mass = np.repeat(tree.leaf_mass, d)
    c = -mass * (np.asarray(x) - A.x0[None, :]).ravel()
    prog = LinearProgram(
        c=c,
        A_eq=mass.reshape(1, -1),
        b_eq=np.array([1.0]),
        G=G,
        h=np.zeros(G.shape[0]),
    )
    res = lp_solve(prog, tol)
    if res.status != "optimal" or res.value is None or -res.value <= 1e-9:
        return None
    return res.x.reshape(tree.n_leaves, d)


def upper_image(
    A: AttainableSet,
    U: VectorUtility,
    grid: list[Weight],
    tol: Tolerances = DEFAULT,
    reports: list[ScalarSolveReport] | None = None,
) -> UpperImage:
    """Outer and inner polyhedral approximations of the optimal value set.

    Outer: intersection of the supporting halfspaces found per weight.
    Inner: attained objective points (their convex hull plus R^d_+ is a
    subset of the value set). The per-weight gap is the inner support
    minus the outer support, nonnegative up to solver tolerance.
    """
    if not grid:
        raise DualityError("need a nonempty weight grid")
    if reports is None:
        reports = [primal_scalarize(A, U, w, tol) for w in grid]
    outer: list[HalfSpace] = []
    inner_pts: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    for w, rep in zip(grid, reports):
        if not math.isfinite(rep.primal_value):
            continue
        outer.append(HalfSpace(normal=w.z, support=rep.primal_value))
        weights.append(w.z)
        if rep.primal_argmin is not None:
            inner_pts.append(expected_disutility(A, U, rep.primal_argmin))
    inner = np.array(inner_pts) if inner_pts else np.zeros((0, A.market.d))
    gap = np.array([
        float(min(hs.normal @ p for p in inner) - hs.support) if len(inner) else math.nan
        for hs in outer
    ])
    return UpperImage(outer=outer, inner=inner, gap=gap, weights=weights)


@dataclass
class DualityReport:
    reports: list[ScalarSolveReport]
    max_rel_gap: float
    n_weights: int
    n_solved: int
    slater_ok: bool
    weak_duality_ok: bool


def _solve_weight(A, U, w, tol, y_init):
    rep = primal_scalarize(A, U, w, tol)
    dual = dual_scalarize(A, U, w, tol, y_init=y_init)
    rep.dual_value = dual.dual_value
    rep.dual_argmax = dual.dual_argmax
    rep.iterations_dual = dual.iterations_dual
    if dual.status != "optimal" and rep.status == "optimal":
        rep.status = f"dual_{dual.status}"
    if math.isfinite(rep.primal_value):
        rep.gap = rep.primal_value - rep.dual_value
    return rep


def duality_report(
    A: AttainableSet,
    U: VectorUtility,
    grid: list[Weight],
    tol: Tolerances = DEFAULT,
    threads: int | None = None,
) -> DualityReport:
    """Primal and dual scalarizations over the grid with duality checks.

    Raises WeakDualityViolation if any dual value exceeds its primal value
    beyond tolerance; that is a solver bug, never a property of the model.
    """
    market = A.market
    slater_ok = membership(A, np.tile(A.x0 - 1.0, (market.tree.n_leaves, 1)),
                           tol)[0]
    Z = consistent_pricing_process(market, tol)
    y_init = Z.leaf_restriction(market.tree)

    if threads is None:
        threads = int(os.environ.get("CONIC_DUALITY_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(
                lambda w: _solve_weight(A, U, w, tol, y_init), grid))
    else:
        reports = [_solve_weight(A, U, w, tol, y_init) for w in grid]

    weak_ok = True
    max_rel = 0.0
    n_solved = 0
    for rep in reports:
        p, d = rep.primal_value, rep.dual_value
        if not math.isfinite(p):
            continue
        n_solved += 1
        scale = 1.0 + abs(p)
        if d > p + tol.weak_duality * scale:
            weak_ok = False
            raise WeakDualityViolation(
                f"dual {d!r} exceeds primal {p!r} at weight {rep.weight}")
        max_rel = max(max_rel, abs(p - d) / scale)
    return DualityReport(reports=reports, max_rel_gap=max_rel,
                         n_weights=len(grid), n_solved=n_solved,
                         slater_ok=slater_ok, weak_duality_ok=weak_ok)
