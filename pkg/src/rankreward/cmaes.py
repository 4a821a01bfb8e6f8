"""Covariance matrix adaptation evolution strategy on the box ``(-1, 1]^n``.

A plain (mu/mu_w, lambda) CMA-ES with the standard default constants, rank-one
and rank-mu covariance updates and cumulative step-size adaptation. Sampled
points are folded into the box by reflection before evaluation. The search
maximises.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["SearchConfig", "SearchResult", "run_search", "mirror_into_box", "write_trace_csv"]


@dataclass
class SearchConfig:
    z0: np.ndarray
    sigma0: float = 0.05
    max_evals: int = 20000
    seed: int = 0
    popsize: Optional[int] = None

    def __post_init__(self):
        self.z0 = np.atleast_1d(np.asarray(self.z0, dtype=float))
        if self.z0.ndim != 1 or self.z0.size < 1:
            raise ValueError("z0 must be a non-empty vector")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.max_evals < 1:
            raise ValueError("max_evals must be at least 1")
        if np.any(self.z0 <= -1.0) or np.any(self.z0 > 1.0):
            raise ValueError("z0 must lie in (-1, 1]^n")

    @property
    def n(self) -> int:
        return self.z0.size

    @property
    def lam(self) -> int:
        return self.popsize or 4 + int(3 * np.log(self.n))


@dataclass
class SearchResult:
    z_best: np.ndarray
    f_best: float
    evaluations: int
    # one row per generation: (generation, f_best, step_size)
    trace: list = field(default_factory=list)


def mirror_into_box(z):
    """Reflect coordinates across -1 and 1 until they land in ``(-1, 1]``."""
    z = np.asarray(z, dtype=float)
    y = np.mod(z + 1.0, 4.0)  # period 4 folding
    y = np.where(y > 2.0, 4.0 - y, y) - 1.0
    # -1 itself is outside the half-open box; reflect it to the upper edge
    y = np.where(y <= -1.0, 1.0, y)
    # points already inside stay bit-identical
    return np.where((z > -1.0) & (z <= 1.0), z, y)


def _fitness(objective, z) -> float:
    try:
        f = float(objective(z))
    except (ValueError, FloatingPointError, ArithmeticError):
        return -np.inf
    return f if np.isfinite(f) else -np.inf


def run_search(objective: Callable[[np.ndarray], float], cfg: SearchConfig) -> SearchResult:
    """Maximise ``objective`` over ``(-1, 1]^n`` starting from ``cfg.z0``.

    Non-finite objective values (or numerical exceptions) count as ``-inf``.
    The result is a deterministic function of the seed.
    """
    n, lam = cfg.n, cfg.lam
    rng = np.random.Generator(np.random.Philox(cfg.seed))

    mu = lam // 2
    w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / np.sum(w ** 2)

    cc = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    cs = (mu_eff + 2) / (n + mu_eff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    cmu = min(1 - c1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    damps = 1 + 2 * max(0.0, np.sqrt((mu_eff - 1) / (n + 1)) - 1) + cs
    chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))

    mean = cfg.z0.copy()
    sigma = cfg.sigma0
    C = np.eye(n)
    pc = np.zeros(n)
    ps = np.zeros(n)
    eig_B, eig_D = np.eye(n), np.ones(n)
    eigen_at = 0

    z_best = cfg.z0.copy()
    f_best = _fitness(objective, z_best)
    evals = 1
    trace = [(0, f_best, sigma)]
    gen = 0
    while evals + lam <= cfg.max_evals:
        gen += 1
        noise = rng.standard_normal((lam, n))
        steps = (noise * eig_D) @ eig_B.T
        raw = mean + sigma * steps
        cand = mirror_into_box(raw)
        fit = np.array([_fitness(objective, z) for z in cand])
        evals += lam

        order = np.argsort(-fit, kind="stable")
        if fit[order[0]] > f_best:
            f_best = float(fit[order[0]])
            z_best = cand[order[0]].copy()

        # recombine the folded points so the mean stays in the box
        y = (cand[order[:mu]] - mean) / sigma
        y_w = w @ y
        mean = mean + sigma * y_w

        inv_sqrt_C = eig_B @ np.diag(1.0 / eig_D) @ eig_B.T
        ps = (1 - cs) * ps + np.sqrt(cs * (2 - cs) * mu_eff) * (inv_sqrt_C @ y_w)
        h_sig = (np.linalg.norm(ps) / np.sqrt(1 - (1 - cs) ** (2 * gen)) / chi_n
                 < 1.4 + 2 / (n + 1))
        pc = (1 - cc) * pc + h_sig * np.sqrt(cc * (2 - cc) * mu_eff) * y_w
        C = ((1 - c1 - cmu) * C
             + c1 * (np.outer(pc, pc) + (1 - h_sig) * cc * (2 - cc) * C)
             + cmu * (y.T * w) @ y)
        sigma *= np.exp((cs / damps) * (np.linalg.norm(ps) / chi_n - 1))
        sigma = min(sigma, 2.0)

        if gen - eigen_at > lam / (c1 + cmu) / n / 10:
            eigen_at = gen
            C = np.triu(C) + np.triu(C, 1).T
            d2, eig_B = np.linalg.eigh(C)
            eig_D = np.sqrt(np.maximum(d2, 1e-300))
        trace.append((gen, f_best, sigma))
        if sigma * eig_D.max() < 1e-13:
            break
    return SearchResult(z_best=z_best, f_best=f_best, evaluations=evals, trace=trace)


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["generation", "f_best", "step_size"])
        for g, f, s in trace:
            out.writerow([g, f"{f:.17g}", f"{s:.17g}"])
