"""Componentwise utility functions and their scalar conjugate kernel.

Only the exponential family u(x) = -a * exp(-x/b) ships: it is strictly
concave, strictly increasing, finite on all of R, has vanishing marginal
utility at +inf and exploding marginal utility at -inf. Families with a
half-line domain do not satisfy those requirements. New families need the
four methods below and nothing else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UtilityError(ValueError):
    pass


class NegativeWeight(UtilityError):
    """Conjugate kernel called with a nonpositive scalarization weight."""


class UtilityOverflow(OverflowError):
    """Exponent magnitude beyond the guarded range."""


EXP_CLAMP = 700.0  # |x/b| beyond this overflows float64 in exp


@dataclass(frozen=True)
class ExponentialUtility:
    """u(x) = -a * exp(-x / b), a > 0, b > 0."""

    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise UtilityError(f"need a, b > 0; got a={self.a}, b={self.b}")

    def evaluate(self, x: float) -> float:
        e = -x / self.b
        if abs(e) > EXP_CLAMP:
            raise UtilityOverflow(f"exponent {e!r} outside +-{EXP_CLAMP}")
        return -self.a * math.exp(e)

    def deriv(self, x: float) -> float:
        e = -x / self.b
        if abs(e) > EXP_CLAMP:
            raise UtilityOverflow(f"exponent {e!r} outside +-{EXP_CLAMP}")
        return (self.a / self.b) * math.exp(e)

    def conjugate_kernel(self, y: float, z: float) -> float:
        """phi(y, z) = inf over x of  z * (-u(x)) + y * x.

        Closed form y*b*(1 - log(y*b/(z*a))) for y > 0; zero at y = 0
        (the infimum over x -> +inf, not attained); -inf for y < 0.
        """
        if z <= 0.0:
            raise NegativeWeight(f"need z > 0, got {z!r}")
        if y < 0.0:
            return -math.inf
        if y == 0.0:
            return 0.0
        yb = y * self.b
        return yb * (1.0 - math.log(yb / (z * self.a)))

    def conjugate_argmin(self, y: float, z: float) -> float:
        """Minimizer of x -> z * (-u(x)) + y * x for y, z > 0."""
        if z <= 0.0:
            raise NegativeWeight(f"need z > 0, got {z!r}")
        if y <= 0.0:
            raise UtilityError(f"need y > 0, got {y!r}")
        return -self.b * math.log(y * self.b / (z * self.a))


@dataclass(frozen=True)
class VectorUtility:
    """U(x) = (u_1(x_1), ..., u_d(x_d)) applied componentwise."""

    assets: tuple[ExponentialUtility, ...]

    @property
    def d(self) -> int:
        return len(self.assets)

    @classmethod
    def exponential(cls, d: int, a=1.0, b=1.0) -> "VectorUtility":
        a_list = [a] * d if isinstance(a, (int, float)) else list(a)
        b_list = [b] * d if isinstance(b, (int, float)) else list(b)
        if len(a_list) != d or len(b_list) != d:
            raise UtilityError("parameter lists must have one entry per asset")
        return cls(tuple(ExponentialUtility(ai, bi)
                         for ai, bi in zip(a_list, b_list)))

    def params(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.array([u.a for u in self.assets])
        b = np.array([u.b for u in self.assets])
        return a, b
