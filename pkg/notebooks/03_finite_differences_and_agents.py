# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Cross-checks: finite differences and simulated agents
#
# The closed form assumes a constant effort cost. A finite-difference
# Hamilton-Jacobi-Bellman solver reproduces it and then handles a cost that
# falls over the horizon; a finite population simulated on shared noise
# checks values and means.

import numpy as np

from rankreward import (ClusterParams, CostProfile, PiecewiseReward, analytic_optimum,
                        equilibrium_closed_form, reference_clusters, reference_market)
from rankreward.hjb import default_grid, solve_best_response_timedep, timedep_fixed_point
from rankreward.numerics import wasserstein1_density
from rankreward.sim import feedback_control, simulate_population

market = reference_market()
seg = reference_clusters()[0].with_rho(1.0)
T, p = market.T, market.p
B = analytic_optimum(seg, market).B_star


def payoff_at_equilibrium(B, cl):
    eq = equilibrium_closed_form(B, p, cl, T)
    xs, F = eq.density.points, eq.density.cdf()
    return (lambda y: B(np.interp(y, xs, F)) - p * np.asarray(y)), eq


# ## Constant cost against the closed form
#
# A smooth reward keeps the explicit scheme's time step moderate.

smooth = PiecewiseReward(np.linspace(0, 1, 6), [4.0, 2.5, 1.0, 0.0, -1.0, -2.0])
payoff, eq = payoff_at_equilibrium(smooth, seg)
grid = default_grid(seg, T, p, payoff=payoff)
for g in (grid, grid.refined()):
    res = solve_best_response_timedep(payoff, seg.profile(), seg, T, g)
    ref = equilibrium_closed_form(smooth, p, seg, T, x=g.x).density
    print(f"{g.x.size} points, {g.n_t} steps: W1 {wasserstein1_density(res.density, ref):.2e}, "
          f"value {res.value_at_origin:.5f} vs {eq.consumer_value:.5f}")

# ## Cost falling from 5.5 to 1 over the horizon

falling = CostProfile.linear(5.5, -1.5, T)
seg_t = ClusterParams(seg.x_nom, seg.sigma, falling, 1.0)
fp = timedep_fixed_point(smooth, seg_t, T, p, falling, damping=0.5, eps=1e-4)
print(f"converged={fp.converged} after {fp.iterations} iterations, mean {fp.density.mean():.4f}")

# ## Agents under the optimal reward
#
# 100000 agents; the price-only and zero-effort scenarios reuse the same
# Brownian increments.

payoff, eq = payoff_at_equilibrium(B, seg)
controls = {"optimal": [feedback_control(payoff, seg, T)],
            "price_incentive": [feedback_control(lambda y: -p * np.asarray(y), seg, T)],
            "baseline": [None]}
runs = simulate_population([seg], 100_000, controls, T, seed=0)
v = payoff(runs["optimal"].terminal) - runs["optimal"].effort_cost
print(f"value {v.mean():.4f} +- {v.std(ddof=1) / np.sqrt(v.size):.4f} "
      f"(closed form {eq.consumer_value:.4f})")
for name, b in runs.items():
    print(f"{name:16s} mean {b.terminal.mean():.4f}  sd {b.terminal.std():.4f}  "
          f"noise {b.noise_digest[:12]}")
