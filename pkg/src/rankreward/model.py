"""Model parameters: consumer clusters, effort-cost profiles and the retailer's market."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = ["CostProfile", "ClusterParams", "MarketParams", "check_portfolio", "reference_clusters",
           "reference_market"]


@dataclass(frozen=True)
class CostProfile:
    """Time-dependent effort cost ``c(t)`` bounded in ``[c_lo, c_hi]`` on ``[0, T]``.

    ``fn`` must accept numpy arrays.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    c_lo: float
    c_hi: float
    label: str = "custom"

    def __post_init__(self):
        if not (0.0 < self.c_lo <= self.c_hi < np.inf):
            raise ValueError("cost bounds must satisfy 0 < c_lo <= c_hi < inf")

    def __call__(self, t):
        return np.asarray(self.fn(np.asarray(t, dtype=float)), dtype=float)

    def check(self, T: float, n: int = 1001):
        t = np.linspace(0.0, T, n)
        c = self(t) * np.ones_like(t)
        if np.any(c < self.c_lo - 1e-12) or np.any(c > self.c_hi + 1e-12):
            raise ValueError(f"cost profile leaves [{self.c_lo}, {self.c_hi}] on [0, {T}]")

    @classmethod
    def constant(cls, c: float) -> "CostProfile":
        return cls(lambda t: np.full_like(t, c, dtype=float), c, c, label=f"constant {c}")

    @classmethod
    def linear(cls, c0: float, slope: float, T: float) -> "CostProfile":
        """``c(t) = c0 + slope * t``, e.g. ``linear(5.5, -1.5, 3)`` for a cost falling to 1."""
        ends = (c0, c0 + slope * T)
        return cls(lambda t: c0 + slope * t, min(ends), max(ends), label=f"{c0} + {slope} t")


@dataclass(frozen=True)
class ClusterParams:
    """One sub-population of indistinguishable consumers.

    Attributes
    ----------
    x_nom : float
        Nominal terminal consumption (MWh), the start point of the forecast.
    sigma : float
        Volatility of the forecast (MWh per sqrt(year)).
    cost : float or CostProfile
        Quadratic effort cost coefficient, constant or time-dependent.
    rho : float
        Population weight.
    """

    x_nom: float
    sigma: float
    cost: float | CostProfile
    rho: float = 1.0
    name: str = ""

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if isinstance(self.cost, CostProfile):
            return
        if not float(self.cost) > 0:
            raise ValueError("effort cost must be positive")

    @property
    def constant_cost(self) -> bool:
        return not isinstance(self.cost, CostProfile) or self.cost.c_lo == self.cost.c_hi

    @property
    def c(self) -> float:
        """Constant effort cost; raises for a genuinely time-dependent profile."""
        if isinstance(self.cost, CostProfile):
            if self.cost.c_lo != self.cost.c_hi:
                raise ValueError("cluster has a time-dependent cost profile")
            return float(self.cost.c_lo)
        return float(self.cost)

    def profile(self) -> CostProfile:
        if isinstance(self.cost, CostProfile):
            return self.cost
        return CostProfile.constant(float(self.cost))

    def kappa(self) -> float:
        """Entropic temperature ``2 c sigma^2`` (euros)."""
        return 2.0 * self.c * self.sigma ** 2

    def terminal_sd(self, T: float) -> float:
        return self.sigma * np.sqrt(T)

    def price_shift(self, p: float, T: float) -> float:
        """Mean reduction ``p T / (2c)`` induced by the energy price alone."""
        return p * T / (2.0 * self.c)

    def with_rho(self, rho: float) -> "ClusterParams":
        return ClusterParams(self.x_nom, self.sigma, self.cost, rho, self.name)


def check_portfolio(clusters: Sequence[ClusterParams], tol: float = 1e-9):
    if len(clusters) == 0:
        raise ValueError("at least one cluster is required")
    total = sum(cl.rho for cl in clusters)
    if abs(total - 1.0) > tol:
        raise ValueError(f"cluster weights sum to {total}, expected 1")


@dataclass(frozen=True)
class MarketParams:
    """Retailer side: horizon, energy price, production cost and savings valuation.

    The savings valuation is either quadratic, ``s(m) = a2 m^2 + a1 m + a0``,
    or a user supplied pair ``(s, ds)``.
    """

    T: float
    p: float
    c_r: float
    alpha2: float = 0.0
    alpha1: float = 0.0
    alpha0: float = 0.0
    s_fn: Optional[Callable[[float], float]] = field(default=None, compare=False)
    ds_fn: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if (self.s_fn is None) != (self.ds_fn is None):
            raise ValueError("supply both s and its derivative, or neither")

    @property
    def quadratic(self) -> bool:
        return self.s_fn is None

    def s(self, m):
        if self.s_fn is not None:
            return self.s_fn(m)
        return self.alpha2 * m * m + self.alpha1 * m + self.alpha0

    def ds(self, m):
        if self.ds_fn is not None:
            return self.ds_fn(m)
        return 2.0 * self.alpha2 * m + self.alpha1

    def g(self, m):
        """Retailer valuation net of production cost, ``s(m) - c_r m``."""
        return self.s(m) - self.c_r * m

    def delta(self, m):
        """Reduction desire ``p - c_r + s'(m)``."""
        return self.p - self.c_r + self.ds(m)

    def check_savings(self, x_grid) -> list[str]:
        """Sample ``s'`` on a grid; return violations of 'decreasing and concave'."""
        ds = np.array([self.ds(x) for x in np.asarray(x_grid, dtype=float)])
        issues = []
        if np.any(ds > 1e-12):
            issues.append("s'(m) > 0 somewhere: savings valuation is not decreasing")
        if np.any(np.diff(ds) > 1e-12):
            issues.append("s' increases somewhere: savings valuation is not concave")
        return issues


def reference_clusters() -> list[ClusterParams]:
    """The two consumer segments of the reference instance."""
    return [
        ClusterParams(x_nom=18.0, sigma=0.6, cost=2.5, rho=0.5, name="segment 1"),
        ClusterParams(x_nom=12.0, sigma=0.3, cost=5.0, rho=0.5, name="segment 2"),
    ]


def reference_market() -> MarketParams:
    """Reference market with savings valuation ``s(m) = -0.1 m^2``."""
    return MarketParams(T=3.0, p=0.17, c_r=0.15, alpha2=-0.1)
