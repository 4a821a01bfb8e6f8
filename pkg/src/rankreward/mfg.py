"""Agent side of the game: best responses and mean-field equilibria.

Terminal laws are carried in two forms. A :class:`QuantileGrid` holds the
quantile function on a rank grid. A :class:`DensityGrid` holds the
density on a consumption grid. Under a reward ``B(r) - p x`` the
equilibrium is known in closed form (:func:`equilibrium_closed_form`).
For other rewards it is found by damped iteration of the best response
(:func:`fixed_point_solve`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.integrate import cumulative_simpson
from scipy.special import log_ndtr

from .errors import AttainabilityError, InconsistentInputError
from .model import ClusterParams, MarketParams
from .numerics import (
    Grid1D,
    gaussian_pdf,
    normal_quantile,
    normal_score_ranks,
    rank_grid,
    rank_weights,
    wasserstein1_density,
)
from .rewards import (
    GeneralReward,
    PiecewiseReward,
    inverse_exp_weight_integral,
    log_exp_weight_integral,
    log_exp_weight_tail,
)

__all__ = [
    "QuantileGrid",
    "DensityGrid",
    "EquilibriumResult",
    "FixedPointResult",
    "consumption_grid",
    "nominal_density",
    "gaussian_quantiles",
    "log_nominal_density",
    "price_incentive",
    "equilibrium_closed_form",
    "equilibrium_value",
    "consumer_value",
    "best_response",
    "best_response_value",
    "constant_damping",
    "power_damping",
    "fixed_point_solve",
    "reward_from_distribution",
    "distribution_objective",
    "write_equilibrium_csv",
]

_TINY = 1e-300


@dataclass(frozen=True)
class QuantileGrid(Grid1D):
    """Quantile function ``q(r)`` (MWh) sampled on a rank grid inside (0, 1)."""

    def __post_init__(self):
        super().__post_init__()
        if self.points[0] <= 0.0 or self.points[-1] >= 1.0:
            raise ValueError("rank grid must lie inside (0, 1)")
        scale = max(1.0, float(np.max(np.abs(self.values))))
        if np.any(np.diff(self.values) < -1e-12 * scale):
            raise ValueError("quantile values must be non-decreasing in the rank")

    @property
    def ranks(self) -> np.ndarray:
        return self.points

    def mean(self) -> float:
        return float(np.sum(rank_weights(self.points) * self.values))

    def shifted(self, d: float) -> "QuantileGrid":
        return QuantileGrid(self.points, self.values + d)


@dataclass(frozen=True)
class DensityGrid(Grid1D):
    """Probability density (per MWh) on a consumption grid.

    The trapezoid integral must be one to within ``1e-6``; use
    :meth:`normalized` to build one from unnormalised values. A known c.d.f.
    on the grid (e.g. from a closed form) can be attached as ``exact_cdf``;
    :meth:`cdf` then returns it instead of integrating.
    """

    exact_cdf: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        super().__post_init__()
        if self.exact_cdf is not None:
            F = np.asarray(self.exact_cdf, dtype=float)
            if F.shape != self.points.shape or np.any(np.diff(F) < 0):
                raise ValueError("exact c.d.f. must be non-decreasing on the grid")
            object.__setattr__(self, "exact_cdf", F)
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite and non-negative")
        mass = float(np.trapezoid(self.values, self.points))
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"density integrates to {mass}, not 1")

    @classmethod
    def normalized(cls, x, values, cdf=None) -> "DensityGrid":
        values = np.asarray(values, dtype=float)
        return cls(x, values / np.trapezoid(values, x), cdf)

    @property
    def x(self) -> np.ndarray:
        return self.points

    def cdf(self) -> np.ndarray:
        """C.d.f. on the grid (cumulative Simpson, rescaled to end at 1)."""
        if self.exact_cdf is not None:
            return self.exact_cdf
        F = cumulative_simpson(self.values, x=self.points, initial=0.0)
        F = np.clip(F / F[-1], 0.0, 1.0)
        return np.maximum.accumulate(F)

    def survival(self) -> np.ndarray:
        """``1 - F`` integrated from the right, accurate deep in the upper tail."""
        S = cumulative_simpson(self.values[::-1], x=-self.points[::-1], initial=0.0)
        S = np.clip(S / S[-1], 0.0, 1.0)
        return np.maximum.accumulate(S)[::-1]

    def mean(self) -> float:
        return float(np.trapezoid(self.points * self.values, self.points))

    def quantiles(self, ranks=None) -> QuantileGrid:
        """Invert the c.d.f. by monotone interpolation.

        Without an exact c.d.f., ranks above one half are inverted through
        the survival function so that ranks close to 1 keep their relative
        precision.
        """
        ranks = rank_grid() if ranks is None else np.asarray(ranks, dtype=float)
        x = self.points
        F = self.cdf()
        # keep only strictly increasing nodes so the inverse is a function
        keep = np.concatenate(([True], np.diff(F) > 1e-300))
        q = np.interp(ranks, F[keep], x[keep])
        upper = ranks > 0.5
        if np.any(upper) and self.exact_cdf is None:
            S = self.survival()[::-1]
            keep = np.concatenate(([True], np.diff(S) > 1e-300))
            q[upper] = np.interp(1.0 - ranks[upper], S[keep], x[::-1][keep])
        return QuantileGrid(ranks, np.maximum.accumulate(q))

    def log_values_at(self, y) -> np.ndarray:
        """Log density at arbitrary points by a cubic spline of the log density.

        The spline reproduces Gaussian log densities exactly, so density
        ratios of smooth laws carry no interpolation ripple.
        """
        with np.errstate(divide="ignore"):
            logf = np.log(np.maximum(self.values, _TINY))
        y = np.asarray(y, dtype=float)
        return CubicSpline(self.points, logf)(np.clip(y, self.points[0], self.points[-1]))


@dataclass(frozen=True)
class EquilibriumResult:
    """Equilibrium terminal law of one cluster and the agents' value.

    ``log_density_at_quantile[j]`` is ``log f(q(r_j))`` (equivalently
    ``-log q'(r_j)``), computed analytically.
    """

    quantile: QuantileGrid
    density: DensityGrid
    mean: float
    consumer_value: float
    log_beta: float
    log_density_at_quantile: np.ndarray = field(repr=False)
    cdf: np.ndarray = field(repr=False)


@dataclass
class FixedPointResult:
    density: DensityGrid
    trace: list
    converged: bool
    iterations: int

    def __iter__(self):
        return iter((self.density, self.trace))


def consumption_grid(clusters: Union[ClusterParams, Sequence[ClusterParams]], T: float,
                     p: float = 0.0, n: int = 4001, n_sd: float = 8.0,
                     pad_low: float = 0.0, pad_high: float = 0.0) -> np.ndarray:
    """Uniform grid covering every cluster's nominal and price-incentive laws.

    Spans ``[min x_nom - n_sd*sd - pT/(2c), max x_nom + n_sd*sd]`` plus padding.
    """
    if isinstance(clusters, ClusterParams):
        clusters = [clusters]
    lo = min(cl.x_nom - n_sd * cl.terminal_sd(T) - max(p, 0.0) * T / (2 * _c_lo(cl))
             for cl in clusters)
    hi = max(cl.x_nom + n_sd * cl.terminal_sd(T) - min(p, 0.0) * T / (2 * _c_lo(cl))
             for cl in clusters)
    return np.linspace(lo - pad_low, hi + pad_high, n)


def _c_lo(cl: ClusterParams) -> float:
    return cl.profile().c_lo


def log_nominal_density(cl: ClusterParams, T: float, x) -> np.ndarray:
    sd = cl.terminal_sd(T)
    z = (np.asarray(x, dtype=float) - cl.x_nom) / sd
    return -0.5 * z * z - np.log(sd * np.sqrt(2.0 * np.pi))


def nominal_density(cl: ClusterParams, T: float, x=None) -> DensityGrid:
    """Zero-effort terminal law ``N(x_nom, sigma sqrt(T))`` on a grid."""
    x = consumption_grid(cl, T) if x is None else np.asarray(x, dtype=float)
    return DensityGrid.normalized(x, gaussian_pdf(x, cl.x_nom, cl.terminal_sd(T)))


def gaussian_quantiles(mean: float, sd: float, ranks=None) -> QuantileGrid:
    ranks = rank_grid() if ranks is None else np.asarray(ranks, dtype=float)
    return QuantileGrid(ranks, mean + sd * normal_quantile(ranks))


def price_incentive(cl: ClusterParams, p: float, T: float) -> tuple[float, float]:
    """Equilibrium mean and agent value when the only incentive is the price.

    Returns
    -------
    x_pi : float
        ``x_nom - p T / (2c)``.
    V_pi : float
        ``-p x_nom + p^2 T / (4c)``.
    """
    if not cl.constant_cost:
        raise ValueError("price_incentive needs a constant effort cost; use the hjb module")
    c = cl.c
    return cl.x_nom - p * T / (2.0 * c), -p * cl.x_nom + p * p * T / (4.0 * c)


def equilibrium_value(B: PiecewiseReward, p: float, cl: ClusterParams, T: float) -> float:
    """Agents' equilibrium value under ``B(r) - p x``.

    Equal to ``V_pi - kappa log int_0^1 exp(-B/kappa)``; a reward meets the
    participation constraint exactly when that integral is at most one.
    """
    _, V_pi = price_incentive(cl, p, T)
    return V_pi - cl.kappa() * log_exp_weight_integral(B, cl.kappa(), 1.0)


def equilibrium_closed_form(B: PiecewiseReward, p: float, cl: ClusterParams, T: float,
                            ranks=None, x=None) -> EquilibriumResult:
    """Unique equilibrium under the total reward ``B(r) - p x``.

    The price-free quantile is ``x_nom + sd N^{-1}(G(r)/G(1))`` with
    ``G(r) = int_0^r exp(-B/kappa)``; the price moves it down by ``pT/(2c)``.

    Parameters
    ----------
    ranks : array_like, optional
        Rank grid for the quantile function (default :func:`rank_grid`).
    x : array_like, optional
        Consumption grid for the density (default :func:`consumption_grid`).
    """
    ranks = rank_grid() if ranks is None else np.asarray(ranks, dtype=float)
    x = consumption_grid(cl, T, p) if x is None else np.asarray(x, dtype=float)
    kappa, sd, shift = cl.kappa(), cl.terminal_sd(T), cl.price_shift(p, T)

    log_G1 = log_exp_weight_integral(B, kappa, 1.0)
    log_lo = log_exp_weight_integral(B, kappa, ranks) - log_G1
    log_hi = log_exp_weight_tail(B, kappa, ranks) - log_G1
    lower = log_lo <= np.log(0.5)
    z = np.empty_like(ranks)
    z[lower] = normal_quantile(np.maximum(np.exp(log_lo[lower]), _TINY))
    z[~lower] = -normal_quantile(np.maximum(np.exp(log_hi[~lower]), _TINY))
    q = cl.x_nom + sd * z - shift

    Br = np.interp(ranks, B.eta, B.b)
    log_fq = -0.5 * z * z - np.log(sd * np.sqrt(2.0 * np.pi)) + log_G1 + Br / kappa

    # density on the consumption grid: rank of x first, then the tilt
    zx = (x + shift - cl.x_nom) / sd
    F = inverse_exp_weight_integral(B, kappa, log_G1 + log_ndtr(zx))
    log_f = -0.5 * zx * zx - np.log(sd * np.sqrt(2.0 * np.pi)) + log_G1 + np.interp(F, B.eta, B.b) / kappa
    density = DensityGrid.normalized(x, np.exp(log_f), cdf=F)

    quantile = QuantileGrid(ranks, q)
    V = equilibrium_value(B, p, cl, T)
    return EquilibriumResult(quantile=quantile, density=density, mean=quantile.mean(),
                             consumer_value=V, log_beta=V / kappa,
                             log_density_at_quantile=log_fq, cdf=F)


def consumer_value(B: PiecewiseReward, p: float, cl: ClusterParams, T: float,
                   eq: EquilibriumResult, rtol: float = 1e-5) -> float:
    """Agents' value ``2 c sigma^2 log beta`` by substituting ``x = q(r)``.

    At an equilibrium the integrand
    ``B(r) - p q(r) + kappa log(f_nom(q(r)) / f(q(r)))`` is constant in ``r``;
    a spread above ``rtol`` (relative to ``max(|V|, kappa)``) means ``eq`` is not
    the equilibrium of ``(B, p)`` and raises :class:`InconsistentInputError`.
    """
    kappa = cl.kappa()
    r, q = eq.quantile.ranks, eq.quantile.values
    v = (np.interp(r, B.eta, B.b) - p * q
         + kappa * (log_nominal_density(cl, T, q) - eq.log_density_at_quantile))
    w = rank_weights(r)
    vmax = np.max(v)
    V = vmax + kappa * np.log(np.sum(w * np.exp((v - vmax) / kappa)))
    spread = float(np.std(v)) / max(abs(V), kappa)
    if spread > rtol:
        raise InconsistentInputError(
            f"value integrand varies across ranks (relative spread {spread:.2e}); "
            "the distribution is not the equilibrium of this reward")
    return float(V)


def _tilted(R: GeneralReward, mu: DensityGrid, cl: ClusterParams, T: float):
    x = mu.points
    Rmu = np.asarray(R(x, mu.cdf()), dtype=float) * np.ones_like(x)
    if not np.all(np.isfinite(Rmu)):
        raise ValueError("reward is not finite on the grid")
    logw = log_nominal_density(cl, T, x) + Rmu / cl.kappa()
    top = np.max(logw)
    w = np.exp(logw - top)
    mass = np.trapezoid(w, x)
    return x, w / mass, top + np.log(mass)


def best_response(R: GeneralReward, mu: DensityGrid, cl: ClusterParams, T: float) -> DensityGrid:
    """Optimal terminal law of one agent facing the population law ``mu``.

    ``f*(x) = f_nom(x) exp(R(x, F_mu(x)) / kappa) / beta``, normalised in
    log space so large rewards never overflow.
    """
    x, f, _ = _tilted(R, mu, cl, T)
    return DensityGrid(x, f)


def best_response_value(R: GeneralReward, mu: DensityGrid, cl: ClusterParams, T: float) -> float:
    """Optimal value ``kappa log beta`` of one agent facing ``mu``."""
    _, _, log_beta = _tilted(R, mu, cl, T)
    return float(cl.kappa() * log_beta)


def constant_damping(l: float = 0.5) -> Callable[[int], float]:
    if not 0.0 < l <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    return lambda i: l


def power_damping(power: float = 1.0) -> Callable[[int], float]:
    """``l_i = (1/(i+1))^power``; slow but convergent for ``power = 1``."""
    if not power > 0:
        raise ValueError("power must be positive")
    return lambda i: (1.0 / (i + 1.0)) ** power


def fixed_point_solve(R: Optional[GeneralReward], cl: ClusterParams, T: float,
                      damping: Union[float, Callable[[int], float]] = None,
                      eps: float = 1e-6, n_max: int = 500,
                      mu0: Optional[DensityGrid] = None, x=None,
                      phi: Optional[Callable[[DensityGrid], DensityGrid]] = None,
                      callback: Optional[Callable[[int, DensityGrid], None]] = None,
                      ) -> FixedPointResult:
    """Damped fixed-point iteration of the best response.

    ``f_{i+1} = l_i Phi(f_i) + (1 - l_i) f_i`` until the W1 distance between
    consecutive iterates drops below ``eps`` or ``n_max`` iterations ran.
    Running out of iterations is reported through ``converged=False``.

    Parameters
    ----------
    damping : float or callable, optional
        Constant weight, or ``i -> l_i``. Defaults to ``1/(i+1)``.
    mu0 : DensityGrid, optional
        Initial iterate; the nominal law by default.
    phi : callable, optional
        Best-response map; defaults to :func:`best_response` with ``R``.
        The time-dependent-cost solver plugs in here.
    callback : callable, optional
        Called as ``callback(i, density)`` after every iteration.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if damping is None:
        damping = power_damping(1.0)
    elif not callable(damping):
        damping = constant_damping(float(damping))
    if phi is None:
        if R is None:
            raise ValueError("either a reward or a best-response map is required")
        phi = lambda mu: best_response(R, mu, cl, T)  # noqa: E731
    if mu0 is None:
        if x is None:
            price = R.price if R is not None and R.price is not None else 0.0
            x = consumption_grid(cl, T, price)
        mu0 = nominal_density(cl, T, x)

    f = mu0
    trace = []
    for i in range(n_max):
        half = phi(f)
        l = damping(i)
        nxt = DensityGrid.normalized(f.points, l * half.values + (1.0 - l) * f.values)
        d = wasserstein1_density(f, nxt)
        trace.append(d)
        f = nxt
        if callback is not None:
            callback(i, f)
        if d < eps:
            return FixedPointResult(f, trace, True, i + 1)
    return FixedPointResult(f, trace, False, n_max)


def reward_from_distribution(mu: DensityGrid, cl: ClusterParams, p: float, T: float,
                             C: Optional[float] = None, budget: Optional[float] = None,
                             ranks=None, rtol: float = 1e-9):
    """Ranked reward whose equilibrium is ``mu`` (defined up to a constant).

    ``B(r) = kappa log zeta(q(r)) + p q(r) + C`` with ``zeta = f_mu / f_nom``.
    The agents' value under ``B`` equals ``C``, so participation needs
    ``C >= V_pi``; a budget ``int B <= K`` caps ``C`` from above.

    Returns
    -------
    B : PiecewiseReward
        Sampled on ``[0, ranks..., 1]`` with flat ends; the default ranks are
        :func:`normal_score_ranks`, dense near 0 and 1.
    bounds : tuple of float
        Admissible range ``(C_lo, C_hi)``; ``C_hi`` is ``inf`` without a budget.

    Raises
    ------
    AttainabilityError
        If the profile increases somewhere (location in ``.index`` / ``.rank``),
        or the budget leaves no admissible constant.
    """
    ranks = normal_score_ranks() if ranks is None else np.asarray(ranks, dtype=float)
    # the log density ratio is pure rounding noise beyond ~1e-10 of tail mass
    ranks = ranks[(ranks >= 1e-10) & (ranks <= 1.0 - 1e-10)]
    kappa = cl.kappa()
    q = mu.quantiles(ranks).values
    log_zeta = mu.log_values_at(q) - log_nominal_density(cl, T, q)
    profile = kappa * log_zeta + p * q

    scale = max(1.0, float(np.max(np.abs(profile))))
    bad = np.flatnonzero(np.diff(profile) > rtol * scale)
    if bad.size:
        j = int(bad[0])
        raise AttainabilityError(
            f"profile increases between ranks {ranks[j]:.6g} and {ranks[j + 1]:.6g}: "
            "no non-increasing ranked reward attains this distribution",
            index=j, rank=float(ranks[j]))
    profile = np.minimum.accumulate(profile)

    _, V_pi = price_incentive(cl, p, T)
    w = rank_weights(ranks)
    if budget is None:
        C_hi = np.inf
    else:
        C_hi = budget - kappa * float(np.sum(w * log_zeta)) - p * float(np.sum(w * q))
        if C_hi < V_pi:
            raise AttainabilityError(
                f"budget {budget} leaves no constant satisfying participation "
                f"(need C in [{V_pi}, {C_hi}])")
    if C is None:
        C = V_pi
    elif not V_pi - 1e-12 <= C <= C_hi + 1e-12:
        raise ValueError(f"constant {C} outside admissible range [{V_pi}, {C_hi}]")

    eta = np.concatenate(([0.0], ranks, [1.0]))
    b = np.concatenate(([profile[0]], profile, [profile[-1]])) + C
    return PiecewiseReward(eta, b), (float(V_pi), float(C_hi))


def _kl_to_nominal(mu: DensityGrid, cl: ClusterParams, T: float) -> float:
    f = mu.values
    log_nom = log_nominal_density(cl, T, mu.points)
    holes = (f < _TINY) & (log_nom > np.log(1e-12))
    if np.any(holes):
        warnings.warn("density vanishes where the nominal law has mass; clamped at 1e-300",
                      RuntimeWarning, stacklevel=3)
    integrand = np.where(f > 0, f * (np.log(np.maximum(f, _TINY)) - log_nom), 0.0)
    return float(np.trapezoid(integrand, mu.points))


def distribution_objective(mu_list: Sequence[DensityGrid], clusters: Sequence[ClusterParams],
                           market: MarketParams) -> float:
    """Retailer gain written directly on the target distributions.

    ``g(sum rho_k m_k) - sum rho_k [V_pi_k + kappa_k KL(mu_k || nominal_k)]``,
    the value reached when each ``mu_k`` is implemented by its cheapest
    participating reward.
    """
    if len(mu_list) != len(clusters):
        raise ValueError("one distribution per cluster is required")
    T, p = market.T, market.p
    m = sum(cl.rho * mu.mean() for mu, cl in zip(mu_list, clusters))
    cost = 0.0
    for mu, cl in zip(mu_list, clusters):
        _, V_pi = price_incentive(cl, p, T)
        cost += cl.rho * (V_pi + cl.kappa() * _kl_to_nominal(mu, cl, T))
    return float(market.g(m) - cost)


def write_equilibrium_csv(path, B: PiecewiseReward, clusters: Sequence[ClusterParams],
                          p: float, T: float, ranks=None):
    """Quantiles per cluster: nominal, price incentive only, and equilibrium under ``B``."""
    ranks = rank_grid() if ranks is None else np.asarray(ranks, dtype=float)
    cols, names = [ranks], ["rank"]
    z = normal_quantile(ranks)
    for k, cl in enumerate(clusters, start=1):
        sd = cl.terminal_sd(T)
        x_pi, _ = price_incentive(cl, p, T)
        eq = equilibrium_closed_form(B, p, cl, T, ranks=ranks)
        cols += [cl.x_nom + sd * z, x_pi + sd * z, eq.quantile.values]
        names += [f"quantile_nominal_{k}", f"quantile_price_incentive_{k}",
                  f"quantile_equilibrium_{k}"]
    np.savetxt(Path(path), np.column_stack(cols), delimiter=",", header=",".join(names),
               comments="", fmt="%.17g")
