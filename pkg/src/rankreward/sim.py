"""Finite-population Euler-Maruyama simulation under mean-field feedback controls."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .hjb import ControlField
from .mfg import consumption_grid
from .model import ClusterParams

__all__ = ["feedback_control", "zero_control", "brownian_increments", "TrajectoryBundle",
           "simulate_population", "empirical_rank", "write_trajectories_csv", "BLOCK"]

# agents per random stream; agent i always reads row i % BLOCK of block i // BLOCK
BLOCK = 4096


def feedback_control(R_mu: Callable[[np.ndarray], np.ndarray], cl: ClusterParams, T: float,
                     n_steps: int = 300, x=None, p: float = 0.0, n_x: int = 401,
                     points_per_bw: float = 4.0, reach: float = 12.0) -> ControlField:
    """Optimal feedback for a constant cost from the Gaussian tilt.

    ``a*(t, x) = sigma^2 d/dx log w(t, x)`` with
    ``w(t, x) = E[exp(R_mu(x + sigma W_{T-t}) / (2 c sigma^2))]``. The kernel
    derivative is taken analytically, ``a* = sigma^2 (E_tilt[Y] - x) / h^2`` with
    ``h = sigma sqrt(T - t)`` floored at ``sigma sqrt(dt)``; the tilted mean is a
    log-space weighted sum on a grid of spacing ``h / points_per_bw`` reaching
    ``reach * h`` beyond the control grid.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    kappa = cl.kappa()
    x = consumption_grid(cl, T, p, n=n_x, pad_low=1.0, pad_high=1.0) if x is None \
        else np.asarray(x, dtype=float)
    t = np.linspace(0.0, T, n_steps + 1)
    dt = T / n_steps
    a = np.empty((t.size, x.size))
    sig2 = cl.sigma ** 2
    for n, tn in enumerate(t):
        h2 = sig2 * max(T - tn, dt)
        h = np.sqrt(h2)
        dy = h / points_per_bw
        lo, hi = x[0] - reach * h, x[-1] + reach * h
        y = np.linspace(lo, hi, int(np.ceil((hi - lo) / dy)) + 1)
        r = np.asarray(R_mu(y), dtype=float) * np.ones_like(y) / kappa
        for s in range(0, x.size, 64):
            xs = x[s:s + 64, None]
            logk = r[None, :] - 0.5 * (y[None, :] - xs) ** 2 / h2
            w = np.exp(logk - logk.max(axis=1, keepdims=True))
            ey = (w @ y) / w.sum(axis=1)
            a[n, s:s + 64] = sig2 * (ey - xs[:, 0]) / h2
    return ControlField(t, x, a)


def zero_control(cl: ClusterParams, T: float, n_steps: int = 300) -> ControlField:
    x = np.array([cl.x_nom - 1.0, cl.x_nom + 1.0])
    t = np.linspace(0.0, T, n_steps + 1)
    return ControlField(t, x, np.zeros((t.size, 2)))


def brownian_increments(seed: int, cluster: int, block: int, n_steps: int) -> np.ndarray:
    """Standard normal draws of one block of agents, shape ``(BLOCK, n_steps)``.

    The stream is keyed by ``(seed, cluster, block)``, so an agent's noise does
    not depend on how many agents are simulated or which scenario runs.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(cluster, block))
    return np.random.Generator(np.random.Philox(ss)).standard_normal((BLOCK, n_steps))


@dataclass
class TrajectoryBundle:
    """Simulated agents of one scenario.

    ``paths`` and ``cost_paths`` are only kept when requested; the terminal
    values and total effort costs are always available.
    """

    scenario: str
    t: np.ndarray
    labels: np.ndarray
    terminal: np.ndarray
    effort_cost: np.ndarray
    seed: int
    exits: int
    noise_digest: str
    paths: Optional[np.ndarray] = None
    cost_paths: Optional[np.ndarray] = None

    def cluster(self, k: int) -> np.ndarray:
        return self.terminal[self.labels == k]


def simulate_population(clusters: Sequence[ClusterParams], n_agents: Sequence[int] | int,
                        controls: Mapping[str, Sequence[Optional[ControlField]]], T: float,
                        n_steps: int = 300, seed: int = 0, store_paths: bool = False
                        ) -> dict[str, TrajectoryBundle]:
    """Euler-Maruyama paths of every scenario on shared Brownian increments.

    ``X(t + dt) = X(t) + a*(t, X(t)) dt + sigma sqrt(dt) xi`` and the effort cost
    grows by ``c(t) a*^2 dt``. ``controls[name][k]`` is the feedback of cluster
    ``k`` in scenario ``name`` (None for zero effort). Agents leaving the
    control grid use its edge column; such steps are counted in ``exits``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if np.isscalar(n_agents):
        n_agents = [int(n_agents)] * len(clusters)
    if len(n_agents) != len(clusters) or min(n_agents) < 1:
        raise ValueError("need a positive agent count for every cluster")
    for name, ctl in controls.items():
        if len(ctl) != len(clusters):
            raise ValueError(f"scenario {name!r} needs one control per cluster")

    dt = T / n_steps
    t = np.linspace(0.0, T, n_steps + 1)
    labels = np.concatenate([np.full(n, k) for k, n in enumerate(n_agents)])
    out = {}
    state = {name: dict(term=[], cost=[], paths=[], cpaths=[], exits=0) for name in controls}
    digest = hashlib.sha256()
    for k, (cl, n) in enumerate(zip(clusters, n_agents)):
        c_t = cl.profile()(t) * np.ones_like(t)
        sq = cl.sigma * np.sqrt(dt)
        for blk in range(0, (n + BLOCK - 1) // BLOCK):
            m = min(BLOCK, n - blk * BLOCK)
            xi = brownian_increments(seed, k, blk, n_steps)[:m]
            digest.update(xi.tobytes())
            for name, ctl in controls.items():
                field_k = ctl[k]
                X = np.full(m, cl.x_nom)
                cost = np.zeros(m)
                if store_paths:
                    P = np.empty((m, n_steps + 1))
                    Cp = np.empty((m, n_steps + 1))
                    P[:, 0], Cp[:, 0] = X, 0.0
                for j in range(n_steps):
                    if field_k is None:
                        a = 0.0
                    else:
                        a = field_k(t[j], X)
                        state[name]["exits"] += int(np.count_nonzero(
                            (X < field_k.x[0]) | (X > field_k.x[-1])))
                    cost = cost + c_t[j] * a * a * dt
                    X = X + a * dt + sq * xi[:, j]
                    if store_paths:
                        P[:, j + 1], Cp[:, j + 1] = X, cost
                st = state[name]
                st["term"].append(X)
                st["cost"].append(cost)
                if store_paths:
                    st["paths"].append(P)
                    st["cpaths"].append(Cp)
    for name, st in state.items():
        out[name] = TrajectoryBundle(
            scenario=name, t=t, labels=labels, terminal=np.concatenate(st["term"]),
            effort_cost=np.concatenate(st["cost"]), seed=seed, exits=st["exits"],
            noise_digest=digest.hexdigest(),
            paths=np.vstack(st["paths"]) if store_paths else None,
            cost_paths=np.vstack(st["cpaths"]) if store_paths else None)
    return out


def empirical_rank(values) -> np.ndarray:
    """``rank_i = #{j : X_j <= X_i} / N``; the highest consumption has rank 1."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("at least one agent is required")
    return np.searchsorted(np.sort(v), v, side="right") / v.size


def write_trajectories_csv(path, bundles: Sequence[TrajectoryBundle], every: int = 1,
                           max_agents: Optional[int] = None):
    """Long-format CSV: t, agent_id, cluster, scenario, x, cum_effort_cost."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "agent_id", "cluster", "scenario", "x", "cum_effort_cost"])
        for b in bundles:
            if b.paths is None:
                raise ValueError(f"scenario {b.scenario!r} was simulated without paths")
            ids = range(b.paths.shape[0]) if max_agents is None else \
                [i for k in np.unique(b.labels) for i in np.flatnonzero(b.labels == k)[:max_agents]]
            for i in ids:
                for j in range(0, b.t.size, every):
                    out.writerow([f"{b.t[j]:.17g}", i, int(b.labels[i]), b.scenario,
                                  f"{b.paths[i, j]:.17g}", f"{b.cost_paths[i, j]:.17g}"])
