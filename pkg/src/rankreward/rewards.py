"""Rank-based reward classes.

The main object is :class:`PiecewiseReward`, a bounded non-increasing
piecewise-linear function of the rank on knots ``0 = eta_1 < ... < eta_N = 1``.
It comes with the bijection between the box ``(-1, 1]^N`` and the reward
class used by the search, and with exact segment-wise integrals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

__all__ = [
    "PiecewiseReward",
    "GeneralReward",
    "uniform_knots",
    "eval_reward",
    "from_search_vector",
    "to_search_vector",
    "exp_weight_integral",
    "log_exp_weight_integral",
    "log_exp_weight_tail",
    "inverse_exp_weight_integral",
    "total_reward_integral",
]

_FLAT_TOL = 1e-9


def uniform_knots(n: int = 20) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least two knots")
    return np.linspace(0.0, 1.0, n)


@dataclass(frozen=True)
class PiecewiseReward:
    """Linear interpolation of non-increasing values ``b`` on rank knots ``eta``.

    Attributes
    ----------
    eta : ndarray
        Knots, strictly increasing from 0 to 1.
    b : ndarray
        Reward (euros) at the knots, ``b[0] >= b[1] >= ... >= b[-1]``.
    M : float
        Bound with ``|b_i| <= M``. Defaults to ``max |b|``.
    """

    eta: np.ndarray
    b: np.ndarray
    M: Optional[float] = None

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if eta.ndim != 1 or eta.shape != b.shape or eta.size < 2:
            raise ValueError("eta and b must be 1-D of equal length >= 2")
        if eta[0] != 0.0 or eta[-1] != 1.0:
            raise ValueError("knots must start at 0 and end at 1")
        if np.any(np.diff(eta) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not np.all(np.isfinite(b)):
            raise ValueError("reward values must be finite")
        scale = max(1.0, float(np.max(np.abs(b))))
        if np.any(np.diff(b) > 1e-12 * scale):
            raise ValueError("reward values must be non-increasing in the rank")
        M = float(np.max(np.abs(b))) if self.M is None else float(self.M)
        if M < 0:
            raise ValueError("bound M must be non-negative")
        if np.any(np.abs(b) > M * (1 + 1e-12) + 1e-300):
            raise ValueError("reward values exceed the bound M")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "M", M)

    @property
    def n_knots(self) -> int:
        return self.eta.size

    def __call__(self, r):
        return eval_reward(self, r)

    def shifted(self, constant: float) -> "PiecewiseReward":
        """Same shape, every value moved by ``constant`` (the bound grows if needed)."""
        b = self.b + constant
        return PiecewiseReward(self.eta, b, max(self.M, float(np.max(np.abs(b)))))

    @classmethod
    def constant(cls, value: float, eta=None, M: Optional[float] = None) -> "PiecewiseReward":
        eta = np.array([0.0, 1.0]) if eta is None else np.asarray(eta, dtype=float)
        return cls(eta, np.full(eta.size, float(value)), abs(value) if M is None else M)

    @classmethod
    def from_function(cls, fn: Callable, eta, M: Optional[float] = None, clip: bool = True):
        """Sample a non-increasing function of the rank at ``eta``.

        With ``clip`` the samples are truncated to ``[-M, M]``.
        """
        eta = np.asarray(eta, dtype=float)
        b = np.asarray(fn(eta), dtype=float) * np.ones_like(eta)
        if M is not None and clip:
            b = np.clip(b, -M, M)
        return cls(eta, b, M)

    def to_csv(self, path):
        np.savetxt(Path(path), np.column_stack([self.eta, self.b]), delimiter=",",
                   header="rank,value", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, M: Optional[float] = None) -> "PiecewiseReward":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], M)


def eval_reward(B: PiecewiseReward, r):
    """Evaluate the piecewise-linear reward at ranks ``r`` in [0, 1]."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0) or np.any(r_arr > 1.0) or np.any(np.isnan(r_arr)):
        raise ValueError("ranks must lie in [0, 1]")
    out = np.interp(r_arr, B.eta, B.b)
    return float(out) if np.ndim(r) == 0 else out


def from_search_vector(z, M: float, eta=None) -> PiecewiseReward:
    """Map ``z`` in ``(-1, 1]^N`` to a bounded non-increasing reward.

    ``b_1 = M z_1`` and ``b_i = (b_{i-1} - M)/2 + (b_{i-1} + M) z_i / 2``:
    each ``z_i`` picks a point between ``-M`` (at ``z_i = -1``) and the
    previous value (at ``z_i = 1``).
    """
    z = np.asarray(z, dtype=float)
    if not M > 0:
        raise ValueError("M must be positive")
    if z.ndim != 1 or z.size < 2:
        raise ValueError("search vector must be 1-D with at least two entries")
    if np.any(z <= -1.0) or np.any(z > 1.0):
        raise ValueError("search vector entries must lie in (-1, 1]")
    eta = uniform_knots(z.size) if eta is None else np.asarray(eta, dtype=float)
    if eta.size != z.size:
        raise ValueError("knots and search vector differ in length")
    b = np.empty_like(z)
    b[0] = M * z[0]
    for i in range(1, z.size):
        v = 0.5 * (b[i - 1] - M) + 0.5 * (b[i - 1] + M) * z[i]
        b[i] = min(max(v, -M), b[i - 1])
    return PiecewiseReward(eta, b, M)


def to_search_vector(B: PiecewiseReward) -> np.ndarray:
    """Inverse of :func:`from_search_vector`.

    Where the previous value already sits on the floor ``-M`` the next
    component is undetermined; it is set to 1 (flat floor).
    """
    M, b = B.M, B.b
    if not M > 0:
        raise ValueError("bound M must be positive")
    z = np.empty_like(b)
    z[0] = b[0] / M
    for i in range(1, b.size):
        denom = b[i - 1] + M
        if denom <= 1e-14 * M:
            z[i] = 1.0
        else:
            z[i] = (2.0 * b[i] - b[i - 1] + M) / denom
    return np.clip(z, -1.0, 1.0)


def _log_h(t):
    """``log((exp(t) - 1) / t)`` for ``t >= 0``, with the limit 0 at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    small = t < _FLAT_TOL
    out[small] = 0.5 * t[small]
    big = ~small
    tb = t[big]
    out[big] = tb + np.log(-np.expm1(-tb)) - np.log(tb)
    return out


def _segments(B: PiecewiseReward, kappa: float):
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    d_eta = np.diff(B.eta)
    # drop along each segment in units of kappa (>= 0 for a non-increasing reward)
    t = np.maximum(B.b[:-1] - B.b[1:], 0.0) / kappa
    log_seg = -B.b[:-1] / kappa + np.log(d_eta) + _log_h(t)
    log_G = np.concatenate(([-np.inf], np.logaddexp.accumulate(log_seg)))
    return d_eta, t, log_G, log_seg


def log_exp_weight_integral(B: PiecewiseReward, kappa: float, r):
    """``log int_0^r exp(-B(z)/kappa) dz``, exact for piecewise-linear ``B``."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0.0) or np.any(r_arr > 1.0):
        raise ValueError("ranks must lie in [0, 1]")
    d_eta, t, log_G, _ = _segments(B, kappa)
    i = np.clip(np.searchsorted(B.eta, r_arr, side="right") - 1, 0, B.eta.size - 2)
    frac = r_arr - B.eta[i]
    tp = t[i] * frac / d_eta[i]
    with np.errstate(divide="ignore"):
        log_part = -B.b[i] / kappa + np.log(frac) + _log_h(tp)
    out = np.logaddexp(log_G[i], log_part)
    return float(out[0]) if np.ndim(r) == 0 else out


def log_exp_weight_tail(B: PiecewiseReward, kappa: float, r):
    """``log int_r^1 exp(-B(z)/kappa) dz``, computed without cancellation."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0.0) or np.any(r_arr > 1.0):
        raise ValueError("ranks must lie in [0, 1]")
    d_eta, t, _, log_seg = _segments(B, kappa)
    # log of the integral over segments i+1, ..., N-1
    log_after = np.concatenate((np.logaddexp.accumulate(log_seg[::-1])[::-1][1:], [-np.inf]))
    i = np.clip(np.searchsorted(B.eta, r_arr, side="right") - 1, 0, B.eta.size - 2)
    rest = B.eta[i + 1] - r_arr
    tp = t[i] * rest / d_eta[i]
    with np.errstate(divide="ignore"):
        small = tp < _FLAT_TOL
        safe = np.where(small, 1.0, tp)
        log_h_back = np.where(small, -0.5 * tp, np.log(-np.expm1(-safe)) - np.log(safe))
        log_part = -B.b[i + 1] / kappa + np.log(rest) + log_h_back
    out = np.logaddexp(log_after[i], log_part)
    return float(out[0]) if np.ndim(r) == 0 else out


def exp_weight_integral(B: PiecewiseReward, kappa: float, r):
    """``int_0^r exp(-B(z)/kappa) dz`` in closed form.

    A segment of length ``l`` going from ``b_i`` down to ``b_{i+1}``
    contributes ``kappa l (exp(-b_{i+1}/kappa) - exp(-b_i/kappa)) / (b_i - b_{i+1})``,
    or ``l exp(-b_i/kappa)`` when flat.
    """
    return np.exp(log_exp_weight_integral(B, kappa, r))


def inverse_exp_weight_integral(B: PiecewiseReward, kappa: float, log_u):
    """Ranks ``r`` solving ``log_exp_weight_integral(B, kappa, r) == log_u``.

    ``log_u`` must not exceed the log of the full integral.
    """
    log_u = np.atleast_1d(np.asarray(log_u, dtype=float))
    d_eta, t, log_G, _ = _segments(B, kappa)
    if np.any(log_u > log_G[-1] + 1e-12):
        raise ValueError("target exceeds the total weight")
    log_u = np.minimum(log_u, log_G[-1])
    i = np.clip(np.searchsorted(log_G, log_u, side="right") - 1, 0, B.eta.size - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        # log(u - G_i), guarded against u == G_i
        gap = np.where(np.isfinite(log_G[i]), log_G[i] - log_u, -np.inf)
        log_excess = log_u + np.log1p(-np.exp(np.minimum(gap, 0.0)))
    log_y = log_excess + B.b[i] / kappa
    rate = t[i] / d_eta[i]  # |slope| / kappa
    small = rate * d_eta[i] < 1e-12
    safe_rate = np.where(small, 1.0, rate)
    with np.errstate(over="ignore", divide="ignore"):
        y = np.exp(np.where(small, log_y, 0.0))
        # log1p(y rate) in log space, so steep segments do not overflow
        steep = np.logaddexp(0.0, log_y + np.log(safe_rate)) / safe_rate
    step = np.where(small, y * (1.0 - 0.5 * y * rate), steep)
    r = np.clip(B.eta[i] + np.minimum(step, d_eta[i]), 0.0, 1.0)
    return r


def total_reward_integral(B: PiecewiseReward) -> float:
    """``int_0^1 B(r) dr`` (trapezoid is exact for piecewise-linear B)."""
    return float(np.sum(np.diff(B.eta) * 0.5 * (B.b[1:] + B.b[:-1])))


@dataclass(frozen=True)
class GeneralReward:
    """Reward ``R(x, r)`` depending on terminal consumption and rank.

    ``fn`` is vectorised: ``fn(x, r)`` with broadcastable arrays.

    Attributes
    ----------
    purely_ranked : bool
        ``R`` ignores ``x``.
    price : float or None
        When set, ``R(x, r) = ranked(r) - price * x`` with ``ranked`` stored
        in ``ranked_part``.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    purely_ranked: bool = False
    price: Optional[float] = None
    ranked_part: Optional[PiecewiseReward] = field(default=None, compare=False)
    x_only: bool = False

    def __call__(self, x, r):
        return self.fn(np.asarray(x, dtype=float), np.asarray(r, dtype=float))

    @property
    def affine_in_x(self) -> bool:
        return self.price is not None

    @classmethod
    def from_piecewise(cls, B: PiecewiseReward, p: float = 0.0) -> "GeneralReward":
        """``R(x, r) = B(r) - p x``."""
        return cls(lambda x, r: np.interp(r, B.eta, B.b) - p * x,
                   purely_ranked=(p == 0.0), price=p, ranked_part=B)

    @classmethod
    def ranked(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "GeneralReward":
        return cls(lambda x, r: fn(r) + 0.0 * x, purely_ranked=True)

    @classmethod
    def of_consumption(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "GeneralReward":
        return cls(lambda x, r: fn(x) + 0.0 * r, x_only=True)

    def monotonicity_violations(self, x_grid, r_grid, tol: float = 1e-10) -> int:
        """Count grid cells where ``R`` increases in ``x`` or in ``r``."""
        X, Rk = np.meshgrid(np.asarray(x_grid, float), np.asarray(r_grid, float), indexing="ij")
        V = self(X, Rk) * np.ones_like(X)
        if not np.all(np.isfinite(V)):
            raise ValueError("reward is not finite on the evaluation grid")
        scale = max(1.0, float(np.max(np.abs(V))))
        return int(np.sum(np.diff(V, axis=0) > tol * scale) + np.sum(np.diff(V, axis=1) > tol * scale))
