"""Best response under a time-dependent effort cost, by finite differences.

The value function solves

    u_t + u_x^2 / (4 c(t)) + (sigma^2 / 2) u_xx = 0,    u(T, .) = R_mu,

backwards in time with an explicit scheme. The optimal feedback is
``a* = u_x / (2 c(t))`` and the terminal law follows from the forward
Kolmogorov equation ``m_t + (a* m)_x = (sigma^2/2) m_xx`` started from the
point mass at ``x_nom``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import StabilityError
from .mfg import DensityGrid, consumption_grid, fixed_point_solve, nominal_density
from .model import ClusterParams, CostProfile
from .numerics import gaussian_pdf
from .rewards import GeneralReward

__all__ = ["HJBGrid", "ControlField", "HJBResult", "default_grid",
           "solve_best_response_timedep", "timedep_fixed_point"]


@dataclass(frozen=True)
class HJBGrid:
    """Uniform space grid and number of time steps on ``[0, T]``."""

    x: np.ndarray
    n_t: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size < 5:
            raise ValueError("space grid needs at least five points")
        dx = np.diff(x)
        if np.any(dx <= 0) or np.ptp(dx) > 1e-9 * dx.mean():
            raise ValueError("space grid must be uniform and increasing")
        if self.n_t < 1:
            raise ValueError("at least one time step is required")
        object.__setattr__(self, "x", x)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def refined(self) -> "HJBGrid":
        """Half the space step and a quarter of the time step."""
        return HJBGrid(np.linspace(self.x[0], self.x[-1], 2 * self.x.size - 1), 4 * self.n_t)


def default_grid(cl: ClusterParams, T: float, p: float = 0.0, n_x: int = 801,
                 safety: float = 0.9, pad: float = 1.0,
                 payoff: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> HJBGrid:
    """Consumption grid of ``n_x`` points and the fewest stable time steps.

    Without ``payoff`` only the diffusion bound ``dt <= dx^2 / sigma^2`` is
    used. With it, the drift bound ``dt <= sigma^2 / a_max^2`` is added, with
    ``a_max`` the steepest terminal slope over ``2 c_lo``.
    """
    x = consumption_grid(cl, T, p, n=n_x, pad_low=pad, pad_high=pad)
    dx = x[1] - x[0]
    dt = dx * dx / cl.sigma ** 2
    if payoff is not None:
        a_max = _max_drift(payoff, x, cl.profile().c_lo)
        if a_max > 0:
            dt = min(dt, cl.sigma ** 2 / a_max ** 2)
    return HJBGrid(x, int(np.ceil(T / (safety * dt))))


def _max_drift(payoff, x, c_lo: float) -> float:
    u = np.asarray(payoff(x), dtype=float) * np.ones_like(x)
    return float(np.max(np.abs(np.diff(u))) / (x[1] - x[0]) / (2.0 * c_lo))


@dataclass
class ControlField:
    """Feedback effort ``a*(t, x)`` on a time by space grid."""

    t: np.ndarray
    x: np.ndarray
    a: np.ndarray

    def __call__(self, t: float, x):
        """Bilinear interpolation; ``x`` outside the grid uses the edge column."""
        x = np.asarray(x, dtype=float)
        j = np.clip((t - self.t[0]) / (self.t[1] - self.t[0]), 0.0, self.t.size - 1.0)
        j0 = min(int(j), self.t.size - 2)
        w = j - j0
        row = (1.0 - w) * self.a[j0] + w * self.a[j0 + 1]
        return np.interp(x, self.x, row)

    def to_csv(self, path, every: int = 1):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "x", "a_star"])
            for j in range(0, self.t.size, every):
                for xi, ai in zip(self.x, self.a[j]):
                    out.writerow([f"{self.t[j]:.17g}", f"{xi:.17g}", f"{ai:.17g}"])


@dataclass
class HJBResult:
    density: DensityGrid
    control: ControlField
    value_at_origin: float
    u0: np.ndarray


def _check_stability(grid: HJBGrid, sigma: float, T: float, a_max: float = 0.0):
    dx = grid.dx
    dt = T / grid.n_t
    required = dx * dx / sigma ** 2
    if a_max > 0:
        # central drift term: cell Peclet bound of the explicit scheme
        required = min(required, sigma ** 2 / a_max ** 2)
    if dt > required * (1 + 1e-12):
        raise StabilityError(
            f"time step {dt:.3e} exceeds the explicit stability bound {required:.3e}; "
            f"use at least {int(np.ceil(T / required))} steps", required_dt=required)


def _bernoulli(z):
    # z / (e^z - 1), with the removable singularity at 0
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-6
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 - 0.5 * z, zs / np.expm1(zs))


def solve_best_response_timedep(R_mu: Callable[[np.ndarray], np.ndarray],
                                profile: CostProfile, cl: ClusterParams, T: float,
                                grid: Optional[HJBGrid] = None) -> HJBResult:
    """Backward HJB sweep, feedback control and forward density.

    Parameters
    ----------
    R_mu : callable
        Terminal payoff ``x -> R(x, F_mu(x))`` (euros), bounded on the grid.
    profile : CostProfile
        Effort cost ``c(t)``.
    grid : HJBGrid, optional
        Defaults to :func:`default_grid` for this payoff (801 points, stable
        time step).

    Notes
    -----
    Second derivatives are central; ``u_x`` in the Hamiltonian is central.
    At the two ends ``u`` is extrapolated linearly. The forward equation uses
    the exponentially fitted (Scharfetter-Gummel) flux with zero flux at the
    boundary, which keeps the density positive and its mass exact.
    The point mass at ``x_nom`` is replaced by the Gaussian of width ``2 dx``,
    taken as the law at ``t0 = (2 dx)^2 / sigma^2`` (shifted by the initial
    drift), so the mollification does not widen the terminal law.
    """
    profile.check(T)
    grid = grid or default_grid(cl, T, payoff=R_mu)
    x, n_t = grid.x, grid.n_t
    dx, dt = grid.dx, T / n_t
    sig2 = cl.sigma ** 2
    t = np.linspace(0.0, T, n_t + 1)
    c = profile(t) * np.ones_like(t)

    u = np.asarray(R_mu(x), dtype=float) * np.ones_like(x)
    if not np.all(np.isfinite(u)):
        raise ValueError("terminal payoff must be finite on the grid")
    _check_stability(grid, cl.sigma, T, _max_drift(R_mu, x, profile.c_lo))

    # backward sweep; a[n] is the feedback at time t[n]
    a = np.empty((n_t + 1, x.size))
    ux = np.gradient(u, dx)
    a[n_t] = ux / (2.0 * c[n_t])
    for n in range(n_t - 1, -1, -1):
        uxx = np.zeros_like(u)
        uxx[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx * dx)
        ux_c = np.zeros_like(u)
        ux_c[1:-1] = (u[2:] - u[:-2]) / (2.0 * dx)
        u_new = u + dt * (ux_c ** 2 / (4.0 * c[n + 1]) + 0.5 * sig2 * uxx)
        u_new[0] = 2.0 * u_new[1] - u_new[2]
        u_new[-1] = 2.0 * u_new[-2] - u_new[-3]
        u = u_new
        a[n] = np.gradient(u, dx) / (2.0 * c[n])
    value = float(np.interp(cl.x_nom, x, u))
    control = ControlField(t, x, a)

    # forward sweep from the mollified start
    width = 2.0 * dx
    t0 = width ** 2 / sig2
    n0 = min(int(round(t0 / dt)), n_t - 1)
    t0 = n0 * dt
    centre = cl.x_nom + float(np.interp(cl.x_nom, x, a[0])) * t0
    m = gaussian_pdf(x, centre, np.sqrt(max(t0, 0.0) * sig2) if n0 > 0 else width)
    m /= m.sum() * dx
    D = 0.5 * sig2
    for n in range(n0, n_t):
        a_half = 0.5 * (a[n, 1:] + a[n, :-1])
        pe = a_half * dx / D
        flux = D / dx * (_bernoulli(-pe) * m[:-1] - _bernoulli(pe) * m[1:])
        div = np.zeros_like(m)
        div[:-1] += flux
        div[1:] -= flux
        m = m - dt / dx * div
    mass = m.sum() * dx
    if abs(mass - 1.0) > 1e-4 or np.any(m < -1e-12):
        raise StabilityError("forward sweep lost mass or positivity", required_dt=None)
    return HJBResult(DensityGrid.normalized(x, np.maximum(m, 0.0)), control, value, u)


def timedep_fixed_point(B_or_R, cl: ClusterParams, T: float, p: float = 0.0,
                        profile: Optional[CostProfile] = None, grid: Optional[HJBGrid] = None,
                        damping=0.5, eps: float = 1e-4, n_max: int = 200, n_x: int = 801):
    """Damped fixed point of the finite-difference best response.

    ``B_or_R`` is a :class:`GeneralReward` or a ranked reward, combined with
    the price ``p`` as ``B(r) - p x``.
    """
    R = B_or_R if isinstance(B_or_R, GeneralReward) else GeneralReward.from_piecewise(B_or_R, p)
    profile = profile or cl.profile()
    price = R.price if R.price is not None else p
    # without a given grid the space grid is fixed and the time step follows each payoff
    x = grid.x if grid is not None else default_grid(cl, T, price, n_x=n_x).x

    def phi(mu: DensityGrid) -> DensityGrid:
        F = mu.cdf()
        payoff = lambda y: np.asarray(R(y, np.interp(y, x, F)), dtype=float)  # noqa: E731
        g = grid or default_grid(cl, T, price, n_x=x.size, payoff=payoff)
        return solve_best_response_timedep(payoff, profile, cl, T, g).density

    mu0 = nominal_density(cl, T, x)
    return fixed_point_solve(None, cl, T, damping=damping, eps=eps, n_max=n_max, mu0=mu0, phi=phi)
