"""Retailer side: objectives, the homogeneous optimum and the reward search."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .cmaes import SearchConfig, run_search
from .errors import DegenerateProblemError, InconsistentInputError
from .mfg import (
    DensityGrid,
    equilibrium_value,
    gaussian_quantiles,
    price_incentive,
    best_response,
)
from .model import ClusterParams, MarketParams, check_portfolio
from .numerics import normal_quantile, normal_score_ranks, rank_grid, rank_weights, wasserstein1_density
from .rewards import (
    GeneralReward,
    PiecewiseReward,
    from_search_vector,
    log_exp_weight_integral,
    log_exp_weight_tail,
    to_search_vector,
    total_reward_integral,
    uniform_knots,
)

__all__ = [
    "ObjectiveReport",
    "OptimizeConfig",
    "OptimizeResult",
    "AnalyticOptimum",
    "retailer_gain",
    "lagrangian_objective",
    "analytic_optimum",
    "quadratic_mean_closed_form",
    "optimize_reward",
    "invariance_transforms",
    "InvarianceResult",
]


@dataclass
class ObjectiveReport:
    """Retailer gain of a reward and the per-cluster quantities behind it."""

    pi: float
    pi_lambda: float
    lam: float
    means: list
    values: list
    slacks: list
    reward_cost: float
    mean: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def retailer_gain(B: PiecewiseReward, clusters: Sequence[ClusterParams], market: MarketParams,
                  lam: float = 0.0, ranks=None) -> ObjectiveReport:
    """Evaluate ``s(m) + (p - c_r) m - int B`` at the equilibria induced by ``B``.

    ``m = sum_k rho_k m_k`` with each cluster's equilibrium in closed form.
    The report also carries the agents' values ``V_k``, the participation
    slacks ``V_k - V_pi_k`` and the penalised gain
    ``pi - lam * sum_k rho_k max(V_pi_k - V_k, 0)``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    ranks = rank_grid() if ranks is None else ranks
    w = rank_weights(ranks)
    z_cache = {}
    T, p = market.T, market.p
    means, values, slacks = [], [], []
    for cl in clusters:
        means.append(_equilibrium_mean(B, p, cl, T, ranks, w, z_cache))
        V = equilibrium_value(B, p, cl, T)
        values.append(V)
        slacks.append(V - price_incentive(cl, p, T)[1])
    m = float(sum(cl.rho * mk for cl, mk in zip(clusters, means)))
    cost = total_reward_integral(B)
    pi = float(market.s(m) + (p - market.c_r) * m - cost)
    penalty = sum(cl.rho * max(-sl, 0.0) for cl, sl in zip(clusters, slacks))
    return ObjectiveReport(pi=pi, pi_lambda=pi - lam * penalty, lam=lam, means=means,
                           values=values, slacks=slacks, reward_cost=cost, mean=m)


def _equilibrium_mean(B, p, cl, T, ranks, w, cache) -> float:
    # mean only: skips the density reconstruction of equilibrium_closed_form
    kappa = cl.kappa()
    log_G1 = log_exp_weight_integral(B, kappa, 1.0)
    log_lo = log_exp_weight_integral(B, kappa, ranks) - log_G1
    lower = log_lo <= np.log(0.5)
    z = np.empty_like(ranks)
    z[lower] = normal_quantile(np.maximum(np.exp(log_lo[lower]), 1e-300))
    if np.any(~lower):
        log_hi = log_exp_weight_tail(B, kappa, ranks[~lower]) - log_G1
        z[~lower] = -normal_quantile(np.maximum(np.exp(log_hi), 1e-300))
    q_mean = float(np.sum(w * z))
    return cl.x_nom + cl.terminal_sd(T) * q_mean - cl.price_shift(p, T)


def lagrangian_objective(B: PiecewiseReward, clusters: Sequence[ClusterParams],
                         market: MarketParams, lam: float, ranks=None) -> float:
    """Penalised gain ``pi - lam * sum_k rho_k max(V_pi_k - V_k(B), 0)``."""
    return retailer_gain(B, clusters, market, lam, ranks).pi_lambda


@dataclass
class AnalyticOptimum:
    m_star: float
    delta: float
    B_star: Optional[PiecewiseReward]
    pi_star: float
    x_pi: float
    decreasing: bool
    residual: float
    ranks: np.ndarray = field(repr=False, default=None)
    values: np.ndarray = field(repr=False, default=None)


def _bisect_mean(cl: ClusterParams, market: MarketParams, tol: float = 1e-13) -> float:
    T, c = market.T, cl.c
    x_pi, _ = price_incentive(cl, market.p, T)

    def h(m):
        return m - x_pi - T / (2 * c) * market.delta(m)

    lo = x_pi - abs(market.delta(x_pi)) * T / (2 * c) - 1.0
    hi = x_pi + 1.0
    step = 1.0
    for _ in range(200):
        if h(lo) <= 0.0 <= h(hi):
            break
        step *= 2.0
        if h(lo) > 0:
            lo -= step
        if h(hi) < 0:
            hi += step
    else:
        raise DegenerateProblemError("could not bracket the optimal mean")
    return brentq(h, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


def quadratic_mean_closed_form(alpha2: float, alpha1: float, cl: ClusterParams,
                               market: MarketParams) -> float:
    """Optimal mean for ``s(m) = alpha2 m^2 + alpha1 m + alpha0``.

    ``(x_nom + (alpha1 - c_r) T / (2c)) / (1 - alpha2 T / c)``; the price drops out.
    """
    c, T = cl.c, market.T
    denom = 1.0 - alpha2 * T / c
    if abs(denom) < 1e-14:
        raise DegenerateProblemError("alpha2 T / c = 1: the optimal mean is undetermined")
    return (cl.x_nom + (alpha1 - market.c_r) * T / (2.0 * c)) / denom


def analytic_optimum(cl: ClusterParams, market: MarketParams, ranks=None,
                     M: float = 60.0) -> AnalyticOptimum:
    """Optimal reward for a single cluster, without the monotonicity constraint.

    The optimal law is ``N(m*, sigma sqrt(T))`` with ``m* - x_pi = T delta(m*) / (2c)``,
    found by bracketing and Brent's method. The reward
    ``B*(r) = c/T (x_pi^2 - m*^2) + q*(r) delta(m*)`` is sampled on
    ``[0, ranks..., 1]`` (flat beyond the end ranks) and truncated to ``[-M, M]``.
    The default ranks are normal scores (see :func:`normal_score_ranks`): the
    tilted equilibrium puts visible weight on extreme ranks, which a uniform
    rank grid would cut off.
    It is non-increasing only when ``delta(m*) <= 0``; otherwise ``decreasing`` is
    False, ``B_star`` is None and the increasing profile is left in ``values``.
    """
    ranks = normal_score_ranks() if ranks is None else np.asarray(ranks, dtype=float)
    T, c = market.T, cl.c
    x_pi, _ = price_incentive(cl, market.p, T)
    m = _bisect_mean(cl, market)
    residual = m - x_pi - T / (2 * c) * market.delta(m)
    delta = float(market.delta(m))
    q = gaussian_quantiles(m, cl.terminal_sd(T), ranks).values
    b = c / T * (x_pi ** 2 - m ** 2) + q * delta
    b = np.clip(np.concatenate(([b[0]], b, [b[-1]])), -M, M)
    eta = np.concatenate(([0.0], ranks, [1.0]))
    decreasing = delta <= 0
    B = PiecewiseReward(eta, b, M) if decreasing else None
    pi = float(market.s(m) - m * market.ds(m) + 0.5 * (m + x_pi) * delta)
    return AnalyticOptimum(m_star=float(m), delta=delta, B_star=B, pi_star=pi, x_pi=x_pi,
                           decreasing=decreasing, residual=float(residual), ranks=eta, values=b)


@dataclass
class OptimizeConfig:
    M: float = 60.0
    N: int = 20
    lam: float = 1e3
    sigma0: float = 0.05
    budget: int = 20000
    seed: int = 0
    z0: Optional[np.ndarray] = None
    popsize: Optional[int] = None
    repair: bool = True


@dataclass
class OptimizeResult:
    reward: PiecewiseReward
    report: ObjectiveReport
    trace: list
    z: np.ndarray
    evaluations: int
    initial_pi_lambda: float
    shift: float = 0.0


def optimize_reward(clusters: Sequence[ClusterParams], market: MarketParams,
                    config: Optional[OptimizeConfig] = None, ranks=None) -> OptimizeResult:
    """Search the bounded piecewise-linear class for the best penalised gain.

    The objective ``z -> pi_lambda(from_search_vector(z))`` is maximised over
    ``(-1, 1]^N`` by CMA-ES from ``z0`` (all ones by default: ``B = M``,
    which satisfies participation).

    With ``config.repair`` a reward that ends marginally below a
    participation constraint is lifted by the missing constant, which raises
    every agent value one for one. The lift is recorded in ``shift``.
    """
    cfg = config or OptimizeConfig()
    if not cfg.M > 0:
        raise ValueError("M must be positive")
    if cfg.N < 2:
        raise ValueError("at least two knots are required")
    if cfg.lam < 0:
        raise ValueError("lambda must be non-negative")
    check_portfolio(clusters)
    ranks = rank_grid() if ranks is None else ranks
    eta = uniform_knots(cfg.N)
    z0 = np.ones(cfg.N) if cfg.z0 is None else np.asarray(cfg.z0, dtype=float)

    def theta(z):
        B = from_search_vector(z, cfg.M, eta)
        return retailer_gain(B, clusters, market, cfg.lam, ranks).pi_lambda

    initial = theta(z0)
    search = run_search(theta, SearchConfig(z0=z0, sigma0=cfg.sigma0, max_evals=cfg.budget,
                                            seed=cfg.seed, popsize=cfg.popsize))
    B = from_search_vector(search.z_best, cfg.M, eta)
    report = retailer_gain(B, clusters, market, cfg.lam, ranks)
    shift = 0.0
    if cfg.repair:
        deficit = max(0.0, -min(report.slacks))
        if deficit > 0.0 and B.b[0] + deficit <= cfg.M:
            shift = deficit * (1 + 1e-12) + 1e-15
            B = PiecewiseReward(eta, B.b + shift, cfg.M)
            report = retailer_gain(B, clusters, market, cfg.lam, ranks)
    return OptimizeResult(reward=B, report=report, trace=search.trace, z=to_search_vector(B),
                          evaluations=search.evaluations, initial_pi_lambda=initial, shift=shift)


@dataclass
class InvarianceResult:
    """Purely ranked and purely consumption-based rewards equivalent to ``R`` at ``mu``."""

    B_hat: PiecewiseReward
    R_hat: GeneralReward
    R_hat_values: np.ndarray
    cost_original: float
    cost_ranked: float
    x: np.ndarray


def invariance_transforms(R: GeneralReward, mu_star: DensityGrid, cl: ClusterParams,
                          market: MarketParams, tol: float = 1e-5) -> InvarianceResult:
    """Equivalent simple rewards at an equilibrium.

    ``B_hat(r) = R(q(r), r)`` depends on the rank only and
    ``R_hat(x) = R(x, F(x))`` on the consumption only; both keep ``mu_star``
    as equilibrium and cost the same as ``R`` there.

    Raises :class:`InconsistentInputError` if ``mu_star`` is not an
    equilibrium of ``R`` (best-response gap above ``tol`` in W1).
    """
    T = market.T
    gap = wasserstein1_density(best_response(R, mu_star, cl, T), mu_star)
    if gap > tol:
        raise InconsistentInputError(f"mu_star is not an equilibrium of R (W1 gap {gap:.2e})")
    x, f = mu_star.points, mu_star.values
    F = mu_star.cdf()
    Rmu = np.asarray(R(x, F), dtype=float) * np.ones_like(x)

    # knots at the ranks of the grid points, where the law has mass
    keep = np.concatenate(([True], np.diff(F) > 1e-14)) & (F > 0.0) & (F < 1.0)
    eta = np.concatenate(([0.0], F[keep], [1.0]))
    vals = np.concatenate(([Rmu[keep][0]], Rmu[keep], [Rmu[keep][-1]]))
    vals = np.minimum.accumulate(vals)
    B_hat = PiecewiseReward(eta, vals)

    R_hat = GeneralReward.of_consumption(lambda y: np.interp(y, x, Rmu))
    cost_original = float(np.trapezoid(Rmu * f, x))
    cost_ranked = total_reward_integral(B_hat)
    return InvarianceResult(B_hat=B_hat, R_hat=R_hat, R_hat_values=Rmu,
                            cost_original=cost_original, cost_ranked=cost_ranked, x=x)
