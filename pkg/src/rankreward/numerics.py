"""Shared numerical kernels.

Gaussian helpers, trapezoid quadrature, the one-dimensional Wasserstein
distance and the exponential-tilt identity for Gaussian densities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "Grid1D",
    "normal_pdf",
    "normal_cdf",
    "normal_quantile",
    "gaussian_pdf",
    "integrate_trapezoid",
    "cumulative_trapezoid",
    "rank_grid",
    "rank_weights",
    "wasserstein1",
    "wasserstein1_density",
    "gaussian_tilt",
]

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Grid1D:
    """Values sampled on a strictly increasing 1-D grid."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if points.ndim != 1 or points.shape != values.shape:
            raise ValueError("points and values must be 1-D arrays of equal length")
        if points.size < 2:
            raise ValueError("a grid needs at least two points")
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.points.size


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def normal_cdf(z):
    """Standard normal c.d.f. (erfc based, full double precision in the tails)."""
    return ndtr(z)


def gaussian_pdf(x, mean, sd):
    """Density of N(mean, sd) at ``x``."""
    return normal_pdf((np.asarray(x, dtype=float) - mean) / sd) / sd


# Wichura's AS241 (PPND16) coefficients, highest degree last.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coefs, x):
    out = np.zeros_like(x)
    for c in reversed(coefs):
        out = out * x + c
    return out


def normal_quantile(u):
    """Inverse of the standard normal c.d.f.

    Uses the AS241 rational approximation, which is accurate to about
    1e-16 relative over the whole open unit interval.

    Parameters
    ----------
    u : float or array_like
        Probabilities in the open interval (0, 1).

    Returns
    -------
    float or ndarray
        ``z`` such that ``normal_cdf(z) == u``.
    """
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~(u > 0.0) | ~(u < 1.0)):
        raise ValueError("normal_quantile is defined on the open interval (0, 1)")
    q = u - 0.5
    out = np.empty_like(u)

    central = np.abs(q) <= 0.425
    if np.any(central):
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _poly(_A, r) / _poly(_B, r)

    tail = ~central
    if np.any(tail):
        r = np.minimum(u[tail], 1.0 - u[tail])
        r = np.sqrt(-np.log(r))
        x = np.empty_like(r)
        near = r <= 5.0
        rn = r[near] - 1.6
        x[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        x[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(q[tail] < 0.0, -x, x)

    return float(out[0]) if scalar else out


def integrate_trapezoid(grid: Grid1D) -> float:
    """Trapezoid-rule integral of ``grid.values`` over ``grid.points``."""
    return float(np.trapezoid(grid.values, grid.points))


def cumulative_trapezoid(values, points) -> np.ndarray:
    """Running trapezoid integral, starting at 0 on the first point."""
    values = np.asarray(values, dtype=float)
    dx = np.diff(np.asarray(points, dtype=float))
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * dx * (values[1:] + values[:-1]))
    return out


def rank_grid(n: int = 2001) -> np.ndarray:
    """Cell midpoints of a uniform partition of [0, 1] into ``n`` cells.

    The endpoints 0 and 1 are excluded so the normal quantile stays finite.
    """
    if n < 2:
        raise ValueError("rank grid needs at least two cells")
    return (np.arange(n) + 0.5) / n


def normal_score_ranks(n: int = 3281, z_max: float = 8.2) -> np.ndarray:
    """Ranks ``N(z)`` for ``z`` evenly spaced on ``[-z_max, z_max]``.

    Dense near 0 and 1; used to sample rewards whose equilibria put visible
    weight on extreme ranks. Duplicates from rounding near 1 are dropped.
    """
    r = normal_cdf(np.linspace(-z_max, z_max, n))
    r = r[(r > 0.0) & (r < 1.0)]
    return r[np.concatenate(([True], np.diff(r) > 0))]


def rank_weights(ranks) -> np.ndarray:
    """Quadrature weights for integrals over [0, 1] on a rank grid.

    Each node owns the interval between the midpoints to its neighbours,
    with the first and last nodes extended to 0 and 1. On a
    :func:`rank_grid` this is the midpoint rule with weight ``1/n``.
    """
    ranks = np.asarray(ranks, dtype=float)
    edges = np.concatenate(([0.0], 0.5 * (ranks[1:] + ranks[:-1]), [1.0]))
    return np.diff(edges)


def wasserstein1(q1: Grid1D, q2: Grid1D) -> float:
    """W1 distance between two laws given by quantiles on a common rank grid.

    Uses the one-dimensional identity ``W1 = int_0^1 |q1(r) - q2(r)| dr``.
    """
    if q1.points.shape != q2.points.shape or not np.allclose(
        q1.points, q2.points, rtol=0.0, atol=1e-14
    ):
        raise ValueError("quantile grids must share the same rank grid")
    w = rank_weights(q1.points)
    return float(np.sum(w * np.abs(q1.values - q2.values)))


def wasserstein1_density(f1: Grid1D, f2: Grid1D) -> float:
    """W1 distance between two densities on a common x grid, ``int |F1 - F2| dx``."""
    if f1.points.shape != f2.points.shape or not np.allclose(
        f1.points, f2.points, rtol=0.0, atol=1e-12
    ):
        raise ValueError("densities must share the same x grid")
    F1 = cumulative_trapezoid(f1.values, f1.points)
    F2 = cumulative_trapezoid(f2.values, f2.points)
    return float(np.trapezoid(np.abs(F1 - F2), f1.points))


def gaussian_tilt(x_nom: float, sd: float, tau: float) -> tuple[float, float]:
    """Exponential tilt of the Gaussian density N(x_nom, sd) by exp(tau * x).

    ``phi(x; x_nom, sd) * exp(tau * x) == exp(log_normalizer) * phi(x; tilted_mean, sd)``
    pointwise.

    Returns
    -------
    log_normalizer, tilted_mean : float
    """
    if not sd > 0:
        raise ValueError("sd must be positive")
    log_normalizer = tau * x_nom + 0.5 * tau * tau * sd * sd
    tilted_mean = x_nom + tau * sd * sd
    return log_normalizer, tilted_mean
