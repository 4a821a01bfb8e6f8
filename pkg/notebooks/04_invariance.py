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

# # Rank-only and consumption-only equivalents
#
# A reward mixing rank and consumption, `R(x, r) = B(r) - 0.05 x^2 - p x`,
# has an equilibrium `mu`. Freezing the rank map at `mu` gives a purely
# ranked reward and a purely consumption-based one; both keep `mu` and cost
# the same.

import numpy as np

from rankreward import (GeneralReward, PiecewiseReward, fixed_point_solve, reference_clusters,
                        reference_market)
from rankreward.mfg import consumption_grid
from rankreward.numerics import wasserstein1_density
from rankreward.principal import invariance_transforms

market = reference_market()
seg = reference_clusters()[0].with_rho(1.0)
T, p = market.T, market.p

B = PiecewiseReward(np.linspace(0, 1, 5), [3.0, 1.0, 0.0, -1.0, -2.0])
R = GeneralReward(lambda x, r: B(r) - 0.05 * x * x - p * x)
x = consumption_grid(seg, T, p, n=32001, pad_low=2.0, pad_high=2.0)
mu = fixed_point_solve(R, seg, T, damping=0.5, eps=1e-10, n_max=2000, x=x)
print(f"joint reward: {mu.iterations} iterations, mean {mu.density.mean():.4f}")

res = invariance_transforms(R, mu.density, seg, market)
for label, R_new in (("ranked", GeneralReward.from_piecewise(res.B_hat)),
                     ("consumption", res.R_hat)):
    eq = fixed_point_solve(R_new, seg, T, damping=0.5, eps=1e-10, n_max=2000, mu0=mu.density)
    print(f"{label:12s} W1 to mu {wasserstein1_density(eq.density, mu.density):.2e}")
print(f"cost {res.cost_original:.8f} (joint) vs {res.cost_ranked:.8f} (ranked)")
