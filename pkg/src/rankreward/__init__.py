"""Rank-based reward design for energy-saving programmes.

A retailer pays consumers a bonus that depends on their rank within their
cluster; consumers react as a mean-field population. The package computes
equilibria in closed form, optimises the reward, and checks the results by
finite differences and Monte-Carlo simulation.
"""

from .errors import (AttainabilityError, DegenerateProblemError, InconsistentInputError,
                     StabilityError)
from .model import (ClusterParams, CostProfile, MarketParams, check_portfolio, reference_clusters,
                    reference_market)
from .rewards import GeneralReward, PiecewiseReward, from_search_vector, to_search_vector
from .mfg import (DensityGrid, QuantileGrid, best_response, consumer_value,
                  distribution_objective, equilibrium_closed_form, equilibrium_value,
                  fixed_point_solve, price_incentive, reward_from_distribution)
from .principal import (analytic_optimum, invariance_transforms, lagrangian_objective,
                        optimize_reward, quadratic_mean_closed_form, retailer_gain)

__version__ = "0.1.0"

__all__ = [
    "AttainabilityError", "DegenerateProblemError", "InconsistentInputError", "StabilityError",
    "ClusterParams", "CostProfile", "MarketParams", "check_portfolio", "reference_clusters",
    "reference_market", "GeneralReward", "PiecewiseReward", "from_search_vector",
    "to_search_vector", "DensityGrid", "QuantileGrid", "best_response", "consumer_value",
    "distribution_objective", "equilibrium_closed_form", "equilibrium_value",
    "fixed_point_solve", "price_incentive", "reward_from_distribution", "analytic_optimum",
    "invariance_transforms", "lagrangian_objective", "optimize_reward",
    "quadratic_mean_closed_form", "retailer_gain",
]
