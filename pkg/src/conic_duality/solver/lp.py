"""Dense two-phase simplex for small linear programs.

Bounded-variable form: every variable has lower bound 0 or is free; free
variables are split internally. Inequalities G x >= h get surplus columns.
Bland's rule is used throughout, so the iteration never cycles and the
iterate sequence is a deterministic function of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tolerances import DEFAULT, Tolerances


class SolverFailure(RuntimeError):
    pass


class MaxIterations(SolverFailure):
    """Iteration cap hit; carries the best iterate seen."""

    def __init__(self, message: str, best_x: np.ndarray | None = None):
        super().__init__(message)
        self.best_x = best_x


@dataclass(frozen=True)
class LinearProgram:
    """min c.x  s.t.  A_eq x = b_eq,  G x >= h,  x_j >= 0 where nonneg[j].

    Rows may be empty (shape (0, n)). `nonneg` marks which variables have a
    zero lower bound; the rest are free.
    """

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    nonneg: np.ndarray | None = None  # default: all nonnegative

    def dims(self) -> tuple[int, int, int]:
        n = self.c.shape[0]
        m_eq = 0 if self.A_eq is None else self.A_eq.shape[0]
        m_in = 0 if self.G is None else self.G.shape[0]
        return n, m_eq, m_in


@dataclass
class LpResult:
    status: str                      # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    value: float | None = None
    # Farkas pair (y_eq, y_in): y_in >= 0, y_eq.A + y_in.G <= 0 on nonneg
    # columns and == 0 on free columns, while y_eq.b + y_in.h > 0.
    certificate: tuple[np.ndarray, np.ndarray] | None = None
    ray: np.ndarray | None = None    # feasible direction with c.ray < 0
    iterations: int = 0
    residuals: dict = field(default_factory=dict)


def lp_solve(
    p: LinearProgram,
    tol: Tolerances = DEFAULT,
    max_iter: int | None = None,
) -> LpResult:
    """Solve `p`. Deterministic: identical input gives identical pivots."""
    c = np.asarray(p.c, dtype=np.float64)
    n = c.shape[0]
    nonneg = (
        np.ones(n, dtype=bool) if p.nonneg is None else np.asarray(p.nonneg, dtype=bool)
    )
    A_eq = _rows(p.A_eq, n)
    b_eq = _vec(p.b_eq)
    G = _rows(p.G, n)
    h = _vec(p.h)
    if A_eq.shape[0] != b_eq.shape[0] or G.shape[0] != h.shape[0]:
        raise ValueError("row/rhs length mismatch")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A_eq)) and
            np.all(np.isfinite(b_eq)) and np.all(np.isfinite(G)) and
            np.all(np.isfinite(h))):
        raise ValueError("non-finite entries in the program")

    # standard form: columns = [nonneg vars | free+ | free- | surplus]
    free = np.where(~nonneg)[0]
    pos = np.where(nonneg)[0]
    m = A_eq.shape[0] + G.shape[0]
    A_full = np.vstack([A_eq, G]) if m else np.zeros((0, n))
    b_full = np.concatenate([b_eq, h])

    n_pos, n_free, n_slk = len(pos), len(free), G.shape[0]
    n_std = n_pos + 2 * n_free + n_slk
    A = np.zeros((m, n_std))
    A[:, :n_pos] = A_full[:, pos]
    A[:, n_pos:n_pos + n_free] = A_full[:, free]
    A[:, n_pos + n_free:n_pos + 2 * n_free] = -A_full[:, free]
    for r in range(n_slk):
        A[A_eq.shape[0] + r, n_pos + 2 * n_free + r] = -1.0
    c_std = np.zeros(n_std)
    c_std[:n_pos] = c[pos]
    c_std[n_pos:n_pos + n_free] = c[free]
    c_std[n_pos + n_free:n_pos + 2 * n_free] = -c[free]

    flip = b_full < 0.0
    A[flip] *= -1.0
    b = np.where(flip, -b_full, b_full)

    if max_iter is None:
        max_iter = 2000 + 200 * (m + n_std)
    scale_b = 1.0 + float(np.abs(b).max()) if m else 1.0

    def unmap(x_std: np.ndarray) -> np.ndarray:
        x = np.zeros(n)
        x[pos] = x_std[:n_pos]
        x[free] = x_std[n_pos:n_pos + n_free] - x_std[n_pos + n_free:n_pos + 2 * n_free]
        return x

    if m == 0:
        return _no_row_case(c, nonneg, n)

    # ---- phase 1: artificial identity basis, minimize artificial mass ----
    sim = _Simplex(np.hstack([A, np.eye(m)]),
                   b,
                   np.concatenate([np.zeros(n_std), np.ones(m)]),
                   list(range(n_std, n_std + m)),
                   tol, max_iter)
    status1 = sim.run()
    iters = sim.iterations
    if status1 == "max_iterations":
        raise MaxIterations("phase-1 iteration cap reached",
                            best_x=unmap(sim.full_solution(n_std)))
    if status1 != "optimal":
        raise SolverFailure(f"phase 1 ended with status {status1}")
    phase1_value = float(sim.objective_value())
    if phase1_value > tol.lp_feas * scale_b:
        y = sim.dual_solution()
        y = np.where(flip, -y, y)  # undo row sign flips
        y_eq, y_in = y[:A_eq.shape[0]], y[A_eq.shape[0]:]
        nrm = float(np.abs(y).max())
        if nrm <= 0.0:
            raise SolverFailure("infeasible but no Farkas certificate")
        y_eq, y_in = y_eq / nrm, y_in / nrm
        _check_farkas(A_eq, b_eq, G, h, nonneg, y_eq, y_in, tol)
        return LpResult(status="infeasible", certificate=(y_eq, y_in),
                        iterations=iters)

    keep_rows = sim.drive_out_artificials(n_std)
    basis = [sim.basis[r] for r in keep_rows]
    A2 = A[keep_rows]
    b2 = b[keep_rows]

    # ---- phase 2 ----
    sim2 = _Simplex(A2, b2, c_std, basis, tol, max_iter)
    status2 = sim2.run()
    iters += sim2.iterations
    if status2 == "max_iterations":
        raise MaxIterations("simplex iteration cap reached",
                            best_x=unmap(sim2.full_solution(n_std)))
    if status2 == "unbounded":
        ray_std = sim2.unbounded_ray(n_std)
        return LpResult(status="unbounded", ray=unmap(ray_std), iterations=iters)

    x_std = sim2.full_solution(n_std)
    x = unmap(x_std)
    value = float(c @ x)
    res = _residuals(A_eq, b_eq, G, h, nonneg, x)
    res["reduced_cost_min"] = float(sim2.reduced_costs().min(initial=0.0))
    if res["primal_inf"] > tol.lp_feas * scale_b * 10:
        raise SolverFailure(f"optimal solution fails feasibility: {res}")
    return LpResult(status="optimal", x=x, value=value, iterations=iters,
                    residuals=res)


def _no_row_case(c, nonneg, n):
    # no constraints at all: bounded iff c >= 0 on nonneg vars, == 0 on free
    ray = np.zeros(n)
    for j in range(n):
        if nonneg[j] and c[j] < 0:
            ray[j] = 1.0
            return LpResult(status="unbounded", ray=ray)
        if not nonneg[j] and c[j] != 0:
            ray[j] = -np.sign(c[j])
            return LpResult(status="unbounded", ray=ray)
    return LpResult(status="optimal", x=np.zeros(n), value=0.0)


def _rows(M, n):
    if M is None:
        return np.zeros((0, n))
    M = np.asarray(M, dtype=np.float64)
    return M.reshape(-1, n)


def _vec(v):
    if v is None:
        return np.zeros(0)
    return np.asarray(v, dtype=np.float64).ravel()


def _residuals(A_eq, b_eq, G, h, nonneg, x):
    eq = float(np.abs(A_eq @ x - b_eq).max(initial=0.0))
    ineq = float(np.maximum(h - G @ x, 0.0).max(initial=0.0))
    lb = float(np.maximum(-x[nonneg], 0.0).max(initial=0.0))
    return {"primal_inf": max(eq, ineq, lb), "eq": eq, "ineq": ineq, "lb": lb}


def _check_farkas(A_eq, b_eq, G, h, nonneg, y_eq, y_in, tol):
    comb = (y_eq @ A_eq if A_eq.shape[0] else 0.0) + (y_in @ G if G.shape[0] else 0.0)
    comb = np.atleast_1d(comb)
    gain = float((y_eq @ b_eq if b_eq.shape[0] else 0.0) +
                 (y_in @ h if h.shape[0] else 0.0))
    ok = (
        np.all(y_in >= -tol.lp_feas)
        and np.all(comb[nonneg] <= tol.lp_feas)
        and np.all(np.abs(comb[~nonneg]) <= tol.lp_feas)
        and gain >= tol.lp_feas
    )
    if not ok:
        raise SolverFailure(
            f"Farkas certificate failed verification (gain={gain!r})"
        )


class _Simplex:
    """Revised simplex core over `min c.x, A x = b, x >= 0` with a given basis."""

    REFACTOR_EVERY = 60

    def __init__(self, A, b, c, basis, tol: Tolerances, max_iter: int):
        self.A = A
        self.b = b
        self.c = c
        self.basis = list(basis)
        self.tol = tol
        self.max_iter = max_iter
        self.m, self.n = A.shape
        self.iterations = 0
        self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis]
        try:
            self.B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure("singular basis matrix") from exc
        self.x_b = self.B_inv @ self.b

    def reduced_costs(self) -> np.ndarray:
        y = self.c[self.basis] @ self.B_inv
        return self.c - y @ self.A

    def dual_solution(self) -> np.ndarray:
        return self.c[self.basis] @ self.B_inv

    def objective_value(self) -> float:
        return float(self.c[self.basis] @ self.x_b)

    def full_solution(self, width: int) -> np.ndarray:
        x = np.zeros(width)
        for r, j in enumerate(self.basis):
            if j < width:
                x[j] = self.x_b[r]
        return np.maximum(x, 0.0)

    def run(self) -> str:
        in_basis = np.zeros(self.n, dtype=bool)
        in_basis[self.basis] = True
        since_refactor = 0
        bland = False
        degenerate_streak = 0
        while self.iterations < self.max_iter:
            d = self.reduced_costs()
            cand = np.where(~in_basis & (d < -self.tol.lp_reduced_cost))[0]
            if cand.size == 0:
                self._refactor()
                return "optimal"
            if bland:
                e = int(cand[0])  # smallest index, never cycles
            else:
                e = int(cand[np.argmin(d[cand])])  # most negative reduced cost
            u = self.B_inv @ self.A[:, e]
            rows = np.where(u > self.tol.lp_pivot)[0]
            if rows.size == 0:
                self._entering = e
                self._direction = u
                return "unbounded"
            ratios = self.x_b[rows] / u[rows]
            best = ratios.min()
            tie = rows[ratios <= best + self.tol.lp_pivot]
            # leave the smallest variable index among the tied rows
            leave_row = int(tie[np.argmin([self.basis[r] for r in tie])])
            t = self.x_b[leave_row] / u[leave_row]
            if t <= self.tol.lp_pivot:
                degenerate_streak += 1
                if degenerate_streak >= 40:
                    bland = True  # stalled on degenerate pivots
            else:
                degenerate_streak = 0
                bland = False

            in_basis[self.basis[leave_row]] = False
            in_basis[e] = True
            self.basis[leave_row] = e
            # eta update of B_inv and the basic solution
            pivot = u[leave_row]
            self.x_b -= t * u
            self.x_b[leave_row] = t
            row = self.B_inv[leave_row] / pivot
            self.B_inv -= np.outer(u, row)
            self.B_inv[leave_row] = row
            self.iterations += 1
            since_refactor += 1
            if since_refactor >= self.REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
        return "max_iterations"

    def unbounded_ray(self, width: int) -> np.ndarray:
        ray = np.zeros(width)
        e = self._entering
        if e < width:
            ray[e] = 1.0
        for r, j in enumerate(self.basis):
            if j < width:
                ray[j] = -self._direction[r]
        return ray

    def drive_out_artificials(self, n_real: int) -> list[int]:
        """Pivot zero-level artificials out of the basis; report surviving rows.

        Rows whose artificial cannot be replaced by any real column are
        redundant equalities and are dropped.
        """
        keep = []
        for r in range(self.m):
            if self.basis[r] < n_real:
                keep.append(r)
                continue
            row = self.B_inv[r] @ self.A[:, :n_real]
            cand = np.where(np.abs(row) > 1e-9)[0]
            replaced = False
            for j in cand:
                if j in self.basis:
                    continue
                u = self.B_inv @ self.A[:, j]
                if abs(u[r]) <= self.tol.lp_pivot:
                    continue
                pivot = u[r]
                t = self.x_b[r] / pivot
                self.x_b -= t * u
                self.x_b[r] = t
                brow = self.B_inv[r] / pivot
                self.B_inv -= np.outer(u, brow)
                self.B_inv[r] = brow
                self.basis[r] = int(j)
                keep.append(r)
                replaced = True
                break
            if not replaced:
                continue  # redundant row
        return keep
