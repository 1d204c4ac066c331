"""Market model on a scenario tree: attainable positions and arbitrage.

The attainable set A_T(x0) is never materialized in R^(d*N); every query
compiles to an LP over per-node trade coefficients. Dual variables are
stored as densities y with pairing E<y, x>, so feasibility for the dual
cone is a family of conditional-expectation tests against the per-node
polar cones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import BidAskMatrix, PolyCone, contains, polar_cone, solvency_cone
from .solver import LinearProgram, SolverFailure, lp_solve
from .tolerances import DEFAULT, Tolerances
from .tree import ScenarioTree, conditional_expectation


class MarketError(ValueError):
    pass


class NegativeCoefficient(MarketError):
    pass


class Inconclusive(RuntimeError):
    """Both arbitrage LPs are degenerate within the strictness margin."""


@dataclass
class MarketModel:
    """Tree plus per-node terms of trade with derived cone pairs."""

    tree: ScenarioTree
    bidask: tuple[BidAskMatrix, ...]
    K: tuple[PolyCone, ...]
    Kplus: tuple[PolyCone, ...]
    d: int
    _certificate: "PricingProcess | None" = field(default=None, repr=False)

    @classmethod
    def build(cls, tree: ScenarioTree, bidask: list[BidAskMatrix],
              tol: Tolerances = DEFAULT) -> "MarketModel":
        if len(bidask) != tree.n_nodes:
            raise MarketError(
                f"{len(bidask)} matrices for {tree.n_nodes} nodes")
        d = bidask[0].d
        if any(m.d != d for m in bidask):
            raise MarketError("asset count differs across nodes")
        K = tuple(solvency_cone(m, tol) for m in bidask)
        Kplus = tuple(polar_cone(k, tol) for k in K)
        return cls(tree=tree, bidask=tuple(bidask), K=K, Kplus=Kplus, d=d)

    def trade_generators(self, node: int) -> np.ndarray:
        """Unit generators of -K at `node`: the trades available at zero."""
        return -self.K[node].generators

    def plan_offsets(self) -> np.ndarray:
        """Start index of each node's coefficient block in a flat plan vector."""
        sizes = [self.K[v].generators.shape[0] for v in range(self.tree.n_nodes)]
        return np.concatenate([[0], np.cumsum(sizes)])


@dataclass
class TransferPlan:
    """Nonnegative weights over the trade generators of -K per node."""

    coefficients: tuple[np.ndarray, ...]

    @classmethod
    def zero(cls, market: MarketModel) -> "TransferPlan":
        return cls(tuple(np.zeros(market.K[v].generators.shape[0])
                         for v in range(market.tree.n_nodes)))

    @classmethod
    def from_flat(cls, market: MarketModel, flat: np.ndarray) -> "TransferPlan":
        off = market.plan_offsets()
        return cls(tuple(np.asarray(flat[off[v]:off[v + 1]], dtype=np.float64)
                         for v in range(market.tree.n_nodes)))

    def flat(self) -> np.ndarray:
        return (np.concatenate(self.coefficients)
                if self.coefficients else np.zeros(0))


@dataclass(frozen=True)
class AttainableSet:
    """A_T(x0): terminal positions reachable from the endowment x0."""

    market: MarketModel
    x0: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64)
        if x0.shape != (self.market.d,):
            raise MarketError(f"x0 has shape {x0.shape}, need ({self.market.d},)")
        object.__setattr__(self, "x0", x0)


@dataclass
class PricingProcess:
    """Adapted martingale selector of the polar cones, one vector per node."""

    values: np.ndarray  # (n_nodes, d)

    def leaf_restriction(self, tree: ScenarioTree) -> np.ndarray:
        return self.values[tree.leaves]


@dataclass
class NoArbitrage:
    certificate: PricingProcess
    margin: float


@dataclass
class Arbitrage:
    witness: np.ndarray       # (N, d) terminal position, >= 0, != 0
    plan: TransferPlan


def increments(market: MarketModel, plan: TransferPlan) -> np.ndarray:
    """Per-node self-financing increments xi(v) in -K(v), shape (n, d)."""
    n = market.tree.n_nodes
    xi = np.zeros((n, market.d))
    for v in range(n):
        lam = np.asarray(plan.coefficients[v], dtype=np.float64)
        gens = market.K[v].generators
        if lam.shape != (gens.shape[0],):
            raise MarketError(f"node {v}: {lam.shape[0]} coefficients for "
                              f"{gens.shape[0]} generators")
        if np.any(lam < 0):
            raise NegativeCoefficient(f"node {v}: negative plan coefficient")
        xi[v] = -(gens.T @ lam)
    return xi


def plan_matrix(market: MarketModel) -> np.ndarray:
    """Dense map M with x_flat = x0_tile + M lam for flat plans lam.

    Row order is leaf-major then asset: row l*d + i is asset i at leaf l.
    """
    tree = market.tree
    off = market.plan_offsets()
    M = np.zeros((tree.n_leaves * market.d, off[-1]))
    for li in range(tree.n_leaves):
        for t in range(tree.horizon + 1):
            v = int(tree.leaf_paths[li, t])
            gens = market.K[v].generators
            M[li * market.d:(li + 1) * market.d, off[v]:off[v + 1]] = -gens.T
    return M


def terminal_position(A: AttainableSet, plan: TransferPlan) -> np.ndarray:
    """x(leaf) = x0 + sum of increments along the root-to-leaf path."""
    market = A.market
    xi = increments(market, plan)
    tree = market.tree
    x = np.tile(A.x0, (tree.n_leaves, 1))
    for t in range(tree.horizon + 1):
        x += xi[tree.leaf_paths[:, t]]
    return x


def membership(
    A: AttainableSet,
    x: np.ndarray,
    tol: Tolerances = DEFAULT,
) -> tuple[bool, TransferPlan | None]:
    """LP feasibility of x in A_T(x0); returns a witness plan when true."""
    market = A.market
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (market.tree.n_leaves, market.d):
        raise MarketError(f"x has shape {x.shape}, need "
                          f"({market.tree.n_leaves}, {market.d})")
    M = plan_matrix(market)
    rhs = (x - A.x0[None, :]).ravel()
    prog = LinearProgram(c=np.zeros(M.shape[1]), A_eq=M, b_eq=rhs)
    res = lp_solve(prog, tol)
    if res.status == "optimal":
        return True, TransferPlan.from_flat(market, res.x)
    if res.status == "infeasible":
        return False, None
    raise SolverFailure(f"membership LP returned {res.status}")


def dual_feasibility(
    A: AttainableSet,
    y: np.ndarray,
    tol: float = DEFAULT.cone_contains,
) -> bool:
    """y is in the polar of -A_T iff E[y | F_t] lies in K+ at every node."""
    market = A.market
    tree = market.tree
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (tree.n_leaves, market.d):
        raise MarketError(f"y has shape {y.shape}, need "
                          f"({tree.n_leaves}, {market.d})")
    for t in range(tree.horizon + 1):
        cond = conditional_expectation(tree, y, t)
        for idx, v in enumerate(tree.levels[t]):
            if not contains(market.Kplus[int(v)], cond[idx], tol):
                return False
    return True


def polar_constraint_rows(market: MarketModel) -> np.ndarray:
    """Rows r with r @ y_flat >= 0 encoding E[y|F_t](v) in K+(v) for all v.

    Halfspaces of K+(v) are the generators of K(v). Variables are leaf
    densities in leaf-major asset-minor order.
    """
    tree = market.tree
    d = market.d
    rows = []
    for v in range(tree.n_nodes):
        gens = market.K[v].generators
        lo, hi = tree.leaf_slice[v]
        weights = tree.leaf_mass[lo:hi] / tree.mass[v]
        for g in gens:
            row = np.zeros(tree.n_leaves * d)
            block = np.outer(weights, g)  # (n_sub, d)
            row[lo * d:hi * d] = block.ravel()
            rows.append(row)
    return np.array(rows)


def check_no_arbitrage(
    market: MarketModel,
    tol: Tolerances = DEFAULT,
    cross_check: bool = False,
) -> NoArbitrage | Arbitrage:
    """FTAP dichotomy: a consistent pricing process or an arbitrage witness.

    Certificate LP: maximize delta subject to y in the polar of -A_T,
    y(leaf) >= delta componentwise, and E[sum_i y_i] = 1. A positive
    optimal margin yields the pricing process Z_t = E[y | F_t].

    Arbitrage LP: a nonnegative plan whose terminal position is >= 0 with
    total mass 1 (so nonzero), directly violating no-arbitrage.
    """
    cert = _certificate_lp(market, tol)
    found_cert = cert is not None and cert[1] > tol.eps_strict
    if found_cert and not cross_check:
        y, margin = cert
        Z = _pricing_from_density(market, y)
        market._certificate = Z
        return NoArbitrage(certificate=Z, margin=margin)
    arb = _arbitrage_lp(market, tol)
    found_arb = arb is not None
    if found_cert and found_arb:
        raise SolverFailure("both FTAP certificates found; kernel bug")
    if found_cert:
        y, margin = cert
        Z = _pricing_from_density(market, y)
        market._certificate = Z
        return NoArbitrage(certificate=Z, margin=margin)
    if found_arb:
        return Arbitrage(witness=arb[0], plan=arb[1])
    raise Inconclusive(
        f"certificate margin {None if cert is None else cert[1]!r} below "
        f"{tol.eps_strict} and no arbitrage witness found"
    )


def consistent_pricing_process(market: MarketModel,
                               tol: Tolerances = DEFAULT) -> PricingProcess:
    """Cached no-arbitrage certificate; raises on arbitrage markets."""
    if market._certificate is None:
        outcome = check_no_arbitrage(market, tol)
        if isinstance(outcome, Arbitrage):
            raise MarketError("market admits arbitrage; no pricing process")
    return market._certificate


def _certificate_lp(market, tol):
    tree = market.tree
    d = market.d
    n_y = tree.n_leaves * d
    cone = polar_constraint_rows(market)
    # variables [y, delta]
    G = np.zeros((cone.shape[0] + n_y, n_y + 1))
    G[:cone.shape[0], :n_y] = cone
    G[cone.shape[0]:, :n_y] = np.eye(n_y)
    G[cone.shape[0]:, n_y] = -1.0
    h = np.zeros(G.shape[0])
    A_eq = np.zeros((1, n_y + 1))
    A_eq[0, :n_y] = np.repeat(tree.leaf_mass, d)
    b_eq = np.array([1.0])
    c = np.zeros(n_y + 1)
    c[n_y] = -1.0  # maximize delta
    nonneg = np.ones(n_y + 1, dtype=bool)
    nonneg[n_y] = False
    res = lp_solve(LinearProgram(c=c, A_eq=A_eq, b_eq=b_eq, G=G, h=h,
                                 nonneg=nonneg), tol)
    if res.status != "optimal":
        return None
    y = res.x[:n_y].reshape(tree.n_leaves, d)
    return y, float(res.x[n_y])


def _arbitrage_lp(market, tol):
    tree = market.tree
    d = market.d
    M = plan_matrix(market)
    ones = np.ones(M.shape[0])
    prog = LinearProgram(
        c=np.zeros(M.shape[1]),
        A_eq=(ones @ M).reshape(1, -1),
        b_eq=np.array([1.0]),
        G=M,
        h=np.zeros(M.shape[0]),
    )
    res = lp_solve(prog, tol)
    if res.status != "optimal":
        return None
    plan = TransferPlan.from_flat(market, res.x)
    x = (M @ res.x).reshape(tree.n_leaves, d)
    return np.maximum(x, 0.0), plan


def _pricing_from_density(market, y):
    tree = market.tree
    values = np.zeros((tree.n_nodes, market.d))
    for t in range(tree.horizon + 1):
        cond = conditional_expectation(tree, y, t)
        for idx, v in enumerate(tree.levels[t]):
            values[int(v)] = cond[idx]
    return PricingProcess(values=values)
