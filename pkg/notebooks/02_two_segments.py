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

# # Two segments sharing one reward
#
# Ranks are computed inside each segment but the bonus schedule is common.
# The shared reward is a compromise: each segment does worse than under its
# own optimal reward, and the binding participation constraint is the one of
# the segment that is cheaper to move.

from rankreward import analytic_optimum, retailer_gain, reference_clusters, reference_market
from rankreward.principal import OptimizeConfig, optimize_reward

market = reference_market()
segments = reference_clusters()

shared = optimize_reward(segments, market, OptimizeConfig(seed=0))
print(f"portfolio gain {shared.report.pi:.4f}, mean {shared.report.mean:.4f}")
for k, seg in enumerate(segments):
    alone = seg.with_rho(1.0)
    own = analytic_optimum(alone, market)
    pi_shared = retailer_gain(shared.reward, [alone], market).pi
    print(f"{seg.name}: mean {shared.report.means[k]:.4f} (own optimum {own.m_star:.4f}), "
          f"gain {pi_shared:.4f} vs {own.pi_star:.4f}, slack {shared.report.slacks[k]:.5f}")
