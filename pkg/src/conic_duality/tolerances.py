"""Central tolerance configuration shared by all numeric components."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Numeric thresholds. One record so tests and the CLI can pin them."""

    # tree / matrix validation
    mass_check: float = 1e-12          # child masses must sum to parent within this
    triangle_rel: float = 1e-12        # relative slack on pi[i][j] <= pi[i][k]*pi[k][j]

    # cone arithmetic
    cone_contains: float = 1e-9        # halfspace slack in membership tests
    ray_dedupe: float = 1e-9           # two unit rays closer than this are the same

    # LP kernel
    lp_feas: float = 1e-9              # primal/dual feasibility and complementarity
    lp_pivot: float = 1e-10            # smallest usable pivot magnitude
    lp_reduced_cost: float = 1e-9      # entering-candidate threshold

    # smooth solver
    pg_norm: float = 1e-9              # projected-gradient termination, scaled by 1+|f|
    armijo_c: float = 1e-4
    armijo_beta: float = 0.5

    # market / duality
    eps_strict: float = 1e-7           # margin threshold for the no-arbitrage certificate
    weak_duality: float = 1e-7         # d <= p + weak_duality*(1+|p|)
    strong_duality: float = 1e-6       # |p - d| <= strong_duality*(1+|p|)
    grid_eps: float = 0.02             # interior weight-grid margin from the simplex boundary


DEFAULT = Tolerances()


def with_overrides(base: Tolerances = DEFAULT, **kwargs: float) -> Tolerances:
    """Return a copy of `base` with the given fields replaced."""
    return replace(base, **kwargs)
