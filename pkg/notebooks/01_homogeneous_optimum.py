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

# # One consumer segment: closed form against search
#
# A retailer values mean consumption `m` through `s(m) = -0.1 m^2` and pays a
# bonus `B(r)` by rank. With one segment the best law is Gaussian with the
# nominal spread and a shifted mean, so the search can be checked exactly.

import numpy as np

from rankreward import (analytic_optimum, equilibrium_closed_form, price_incentive,
                        retailer_gain, reference_clusters, reference_market)
from rankreward.numerics import gaussian_pdf, wasserstein1_density
from rankreward.mfg import DensityGrid
from rankreward.principal import OptimizeConfig, optimize_reward

market = reference_market()
seg = reference_clusters()[0].with_rho(1.0)
T, p = market.T, market.p

# ## Price alone
#
# With `B = 0` the price moves the whole law down by `pT/(2c)`.

x_pi, V_pi = price_incentive(seg, p, T)
print(f"price-incentive mean {x_pi:.4f}, agent value {V_pi:.6f}")

# ## Optimal mean and reward

opt = analytic_optimum(seg, market)
print(f"m* = {opt.m_star:.7f}, reduction desire = {opt.delta:.6f}, gain = {opt.pi_star:.4f}")
rep = retailer_gain(opt.B_star, [seg], market)
print(f"reward sampled on {opt.B_star.n_knots} ranks: gain {rep.pi:.4f}, "
      f"mean {rep.mean:.5f}, participation slack {rep.slacks[0]:.2e}")

# ## Search over 20-knot decreasing rewards
#
# Starts from the flat reward at the bound (`z = 1`), which satisfies
# participation; the hinge penalty keeps the agents at their outside option.

res = optimize_reward([seg], market, OptimizeConfig(seed=0))
print(f"searched gain {res.report.pi:.4f} after {res.evaluations} evaluations "
      f"(slack {res.report.slacks[0]:.2e}, shift {res.shift:.2e})")

eq = equilibrium_closed_form(res.reward, p, seg, T)
x = eq.density.points
target = DensityGrid.normalized(x, gaussian_pdf(x, opt.m_star, seg.terminal_sd(T)))
print(f"W1 to the optimal Gaussian: {wasserstein1_density(eq.density, target):.4f} MWh")

# Knot values of both rewards at the search knots:

knots = res.reward.eta
print(np.column_stack((knots, res.reward.b, opt.B_star(knots))).round(3))
