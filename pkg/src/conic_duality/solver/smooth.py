"""Projected-gradient minimization over simple polyhedral feasible sets.

The method is projected gradient with Armijo backtracking along the chord
x + t*(P(x - a*g) - x). Step seeds use the Barzilai-Borwein quotient, kept
monotone by the line search, so runs are deterministic and the objective
never increases between iterates.

Projections: clipping when only a nonnegativity mask is present; otherwise
the KKT system of the projection is solved exactly through a nonnegative
least-squares problem (homogeneous rows) or Dykstra's alternating
projections (affine rows). Equality rows are eliminated up front by an
orthonormal null-space parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import nnls

from ..tolerances import DEFAULT, Tolerances

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class SmoothProgram:
    """min f(x) s.t. A_eq x = b_eq, G x >= h, x_j >= 0 where nonneg[j].

    `objective` returns (value, gradient) and must be convex and smooth on
    the feasible set.
    """

    objective: Objective
    n: int
    nonneg: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    G: np.ndarray | None = None
    h: np.ndarray | None = None


@dataclass
class SmoothResult:
    status: str                    # "optimal" | "unbounded" | "max_iterations"
    x: np.ndarray
    value: float
    iterations: int
    pg_norm: float
    direction: np.ndarray | None = None   # feasible descent ray when unbounded


def _mask_projector(mask: np.ndarray):
    def proj(x: np.ndarray) -> np.ndarray:
        out = x.copy()
        out[mask] = np.maximum(out[mask], 0.0)
        return out
    return proj


def _rows_with_mask(G, h, mask, n):
    rows = [] if G is None else [np.asarray(G, dtype=np.float64).reshape(-1, n)]
    rhs = [] if h is None else [np.asarray(h, dtype=np.float64).ravel()]
    if mask is not None and mask.any():
        eye = np.eye(n)[mask]
        rows.append(eye)
        rhs.append(np.zeros(int(mask.sum())))
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def project_polyhedron(
    x: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    dykstra_tol: float = 1e-12,
    dykstra_max: int = 20000,
) -> np.ndarray:
    """Euclidean projection onto {z : G z >= h}.

    Homogeneous case (h == 0): the projection is x + G.T lam with
    lam = argmin_{lam>=0} ||G.T lam + x||, solved exactly by NNLS.
    Affine case: Dykstra's alternating projections over the halfspaces.
    """
    if G.shape[0] == 0:
        return x.copy()
    if not np.any(h):
        lam, _ = nnls(G.T, -x)
        return x + G.T @ lam
    norms2 = np.einsum("ij,ij->i", G, G)
    z = x.copy()
    corrections = np.zeros_like(G)
    for _ in range(dykstra_max):
        z_prev = z.copy()
        for r in range(G.shape[0]):
            w = z - corrections[r]
            viol = h[r] - float(G[r] @ w)
            if viol > 0.0 and norms2[r] > 0.0:
                z = w + (viol / norms2[r]) * G[r]
            else:
                z = w
            corrections[r] = z - w
        if float(np.abs(z - z_prev).max()) <= dykstra_tol:
            break
    return z


def _build_projector(p: SmoothProgram):
    mask = None if p.nonneg is None else np.asarray(p.nonneg, dtype=bool)
    has_G = p.G is not None and np.asarray(p.G).size > 0
    if not has_G:
        if mask is None or not mask.any():
            return lambda x: x.copy(), None, None
        return _mask_projector(mask), None, None
    G, h = _rows_with_mask(p.G, p.h, mask, p.n)
    return (lambda x: project_polyhedron(x, G, h)), G, h


def _null_space_reduction(p: SmoothProgram, x_init: np.ndarray):
    """Rewrite the program over u where x = x_p + N u (N orthonormal)."""
    A = np.asarray(p.A_eq, dtype=np.float64).reshape(-1, p.n)
    b = np.asarray(p.b_eq, dtype=np.float64).ravel()
    x_p, *_ = np.linalg.lstsq(A, b, rcond=None)
    if float(np.abs(A @ x_p - b).max(initial=0.0)) > 1e-9 * (1 + np.abs(b).max(initial=0.0)):
        raise ValueError("equality rows are inconsistent")
    _, s, vt = np.linalg.svd(A)
    rank = int((s > s.max(initial=0.0) * max(A.shape) * np.finfo(float).eps).sum())
    N = vt[rank:].T
    if N.shape[1] == 0:
        raise ValueError("equality rows pin every variable; nothing to optimize")

    G, h = _rows_with_mask(p.G, p.h, None if p.nonneg is None
                           else np.asarray(p.nonneg, dtype=bool), p.n)
    G_u = G @ N if G.shape[0] else None
    h_u = h - G @ x_p if G.shape[0] else None

    obj = p.objective

    def objective_u(u: np.ndarray) -> tuple[float, np.ndarray]:
        f, g = obj(x_p + N @ u)
        return f, N.T @ g

    inner = SmoothProgram(objective=objective_u, n=N.shape[1],
                          G=G_u, h=h_u)
    u_init = N.T @ (x_init - x_p)
    lift = lambda u: x_p + N @ u
    return inner, u_init, lift, N


def smooth_solve(
    p: SmoothProgram,
    x_init: np.ndarray,
    tol: Tolerances = DEFAULT,
    max_iter: int = 100_000,
) -> SmoothResult:
    """Minimize `p` from the feasible point `x_init`."""
    x_init = np.asarray(x_init, dtype=np.float64).copy()
    if p.A_eq is not None and np.asarray(p.A_eq).size > 0:
        inner, u0, lift, N = _null_space_reduction(p, x_init)
        res = smooth_solve(inner, u0, tol=tol, max_iter=max_iter)
        direction = None if res.direction is None else N @ res.direction
        return SmoothResult(status=res.status, x=lift(res.x), value=res.value,
                            iterations=res.iterations, pg_norm=res.pg_norm,
                            direction=direction)

    proj, G_all, h_all = _build_projector(p)
    x = proj(x_init)
    if float(np.abs(x - x_init).max(initial=0.0)) > 1e-7 * (1 + np.abs(x_init).max(initial=0.0)):
        raise ValueError("x_init is not feasible")

    f, g = p.objective(x)
    alpha = 1.0
    prev_x = None
    prev_g = None
    radius = 1e6 * (1.0 + float(np.linalg.norm(x)))
    check_gate = np.inf

    for k in range(max_iter):
        # Barzilai-Borwein seed, safeguarded
        if prev_x is not None:
            s = x - prev_x
            ydiff = g - prev_g
            sy = float(s @ ydiff)
            if sy > 1e-300:
                alpha = min(max(float(s @ s) / sy, 1e-12), 1e12)
        d = proj(x - alpha * g) - x
        gd = float(g @ d)
        dn = float(np.linalg.norm(d))

        # exact termination test (unit-step projected gradient mapping),
        # gated by a cheap proxy so the extra projection is rare
        proxy = dn / max(alpha, 1.0) if alpha > 1.0 else dn
        if proxy <= check_gate or gd > -1e-300:
            pg = proj(x - g) - x
            pg_norm = float(np.linalg.norm(pg))
            thresh = tol.pg_norm * (1.0 + abs(f))
            if pg_norm <= thresh:
                return SmoothResult("optimal", x, f, k, pg_norm)
            check_gate = pg_norm / 4.0
            if gd > -1e-300:
                # projection made no progress at this step size; shrink
                alpha *= tol.armijo_beta
                prev_x, prev_g = None, None
                continue

        t = 1.0
        accepted = None
        while t >= 1e-14:
            cand = x + t * d
            fc, gc = p.objective(cand)
            if fc <= f + tol.armijo_c * t * gd:
                accepted = (fc, gc, cand)
                break
            t *= tol.armijo_beta
        if accepted is None:
            # chord too aggressive even at tiny steps; retry from a smaller seed
            alpha *= tol.armijo_beta
            prev_x, prev_g = None, None
            continue
        fx_new, g_new, x_new = accepted
        assert fx_new <= f + 1e-12 * (1 + abs(f)), "monotone descent violated"
        prev_x, prev_g = x, g
        x, f, g = x_new, fx_new, g_new

        if float(np.linalg.norm(x)) > radius:
            ray = _recession_direction(p, x_init, x, G_all, h_all)
            if ray is not None:
                return SmoothResult("unbounded", x, f, k + 1,
                                    float("nan"), direction=ray)
            radius *= 8.0

    pg = proj(x - g) - x
    return SmoothResult("max_iterations", x, f, max_iter, float(np.linalg.norm(pg)))


def _recession_direction(p, x_start, x_far, G_all, h_all):
    """Check whether the escape direction is a feasible strict-descent ray."""
    d = x_far - x_start
    nd = float(np.linalg.norm(d))
    if nd <= 0.0:
        return None
    d = d / nd
    if p.nonneg is not None:
        mask = np.asarray(p.nonneg, dtype=bool)
        if np.any(d[mask] < -1e-9):
            return None
    if G_all is not None and G_all.shape[0]:
        if np.any(G_all @ d < -1e-9):
            return None
    vals = []
    base = 1.0 + float(np.linalg.norm(x_start))
    for tau in (0.0, 1e2 * base, 1e4 * base, 1e6 * base, 1e8 * base):
        v, _ = p.objective(x_start + tau * d)
        vals.append(v)
    if all(vals[i + 1] < vals[i] - 1e-15 * (1 + abs(vals[i])) for i in range(len(vals) - 1)):
        return d
    return None
