import numpy as np
import pytest

from rankreward import (AttainabilityError, ClusterParams, CostProfile, GeneralReward,
                        InconsistentInputError, MarketParams, PiecewiseReward, best_response,
                        consumer_value, distribution_objective, equilibrium_closed_form,
                        equilibrium_value, fixed_point_solve, from_search_vector, price_incentive,
                        reward_from_distribution)
from rankreward.mfg import (DensityGrid, consumption_grid, gaussian_quantiles, nominal_density,
                            power_damping, write_equilibrium_csv)
from rankreward.numerics import gaussian_pdf, rank_grid, wasserstein1, wasserstein1_density
from rankreward.principal import retailer_gain

T, P = 3.0, 0.17


class TestPriceIncentive:
    def test_no_price(self, cluster1):
        assert price_incentive(cluster1, 0.0, T) == (18.0, 0.0)

    def test_cluster1(self, cluster1):
        x_pi, V_pi = price_incentive(cluster1, P, T)
        assert x_pi == pytest.approx(17.898, abs=1e-12)
        assert V_pi == pytest.approx(-3.051330, abs=1e-12)

    def test_cluster2(self, cluster2):
        assert price_incentive(cluster2, P, T)[0] == pytest.approx(11.949, abs=1e-12)

    def test_time_dependent_cost_rejected(self):
        cl = ClusterParams(18.0, 0.6, CostProfile.linear(5.5, -1.5, T))
        with pytest.raises(ValueError):
            price_incentive(cl, P, T)


class TestClosedForm:
    def test_constant_reward_no_price_is_nominal(self, cluster1):
        eq = equilibrium_closed_form(PiecewiseReward.constant(3.0), 0.0, cluster1, T)
        ref = gaussian_quantiles(18.0, 0.6 * np.sqrt(T))
        assert wasserstein1(eq.quantile, ref) < 1e-12

    def test_constant_reward_with_price(self, cluster1):
        eq = equilibrium_closed_form(PiecewiseReward.constant(0.0), P, cluster1, T)
        assert wasserstein1(eq.quantile, gaussian_quantiles(17.898, 0.6 * np.sqrt(T))) < 1e-12

    def test_shift_property(self, cluster1, cluster2, rng):
        for cl in (cluster1, cluster2):
            for _ in range(10):
                B = from_search_vector(rng.uniform(-1, 1, 10), 4.0)
                a = equilibrium_closed_form(B, P, cl, T).quantile
                b = equilibrium_closed_form(B, 0.0, cl, T).quantile
                assert wasserstein1(a, b.shifted(-cl.price_shift(P, T))) < 1e-10

    def test_fixed_point_residual(self, cluster1, rng):
        B = from_search_vector(rng.uniform(-1, 1, 10), 4.0)
        eq = equilibrium_closed_form(B, P, cluster1, T)
        phi = best_response(GeneralReward.from_piecewise(B, P), eq.density, cluster1, T)
        assert wasserstein1_density(phi, eq.density) < 1e-6

    def test_mean_and_consistency(self, cluster1, rng):
        B = from_search_vector(rng.uniform(-1, 1, 10), 4.0)
        eq = equilibrium_closed_form(B, P, cluster1, T)
        assert eq.mean == pytest.approx(eq.quantile.mean(), abs=1e-12)
        assert abs(eq.mean - eq.density.mean()) < 1e-5
        F_at_q = np.interp(eq.quantile.values, eq.density.points, eq.density.cdf())
        assert np.max(np.abs(F_at_q - eq.quantile.ranks)) < 1e-4

    def test_density_normalised(self, cluster2, rng):
        B = from_search_vector(rng.uniform(-1, 1, 10), 4.0)
        eq = equilibrium_closed_form(B, P, cluster2, T)
        assert np.trapezoid(eq.density.values, eq.density.points) == pytest.approx(1.0, abs=1e-6)
        assert np.all(eq.density.values >= 0)


class TestConsumerValue:
    def test_zero_reward(self, cluster1):
        eq = equilibrium_closed_form(PiecewiseReward.constant(0.0), P, cluster1, T)
        V = consumer_value(PiecewiseReward.constant(0.0), P, cluster1, T, eq)
        assert V == pytest.approx(-3.051330, abs=1e-6)

    def test_constant_reward_adds(self, cluster1):
        B = PiecewiseReward.constant(2.0)
        V = consumer_value(B, P, cluster1, T, equilibrium_closed_form(B, P, cluster1, T))
        assert V == pytest.approx(-3.05133 + 2.0, abs=1e-8)

    def test_closed_form_agrees(self, cluster2, rng):
        B = from_search_vector(rng.uniform(-1, 1, 10), 4.0)
        eq = equilibrium_closed_form(B, P, cluster2, T)
        assert consumer_value(B, P, cluster2, T, eq) == pytest.approx(
            equilibrium_value(B, P, cluster2, T), abs=1e-9)

    def test_analytic_optimum_saturates(self, cluster1, optimum1):
        eq = equilibrium_closed_form(optimum1.B_star, P, cluster1, T)
        V = consumer_value(optimum1.B_star, P, cluster1, T, eq)
        assert V == pytest.approx(-3.05133, abs=1e-4)

    def test_wrong_distribution_rejected(self, cluster1, rng):
        B = from_search_vector(rng.uniform(-1, 1, 10), 4.0)
        other = equilibrium_closed_form(PiecewiseReward.constant(0.0), P, cluster1, T)
        with pytest.raises(InconsistentInputError):
            consumer_value(B, P, cluster1, T, other)


class TestBestResponse:
    def test_zero_reward_gives_nominal(self, cluster1):
        x = consumption_grid(cluster1, T)
        mu = DensityGrid.normalized(x, gaussian_pdf(x, 16.0, 2.0))
        out = best_response(GeneralReward(lambda x, r: 0.0 * x), mu, cluster1, T)
        assert wasserstein1_density(out, nominal_density(cluster1, T, x)) < 1e-10

    def test_linear_price(self, cluster1):
        x = consumption_grid(cluster1, T, P)
        mu = nominal_density(cluster1, T, x)
        out = best_response(GeneralReward(lambda x, r: -P * x), mu, cluster1, T)
        ref = DensityGrid.normalized(x, gaussian_pdf(x, 17.898, 0.6 * np.sqrt(T)))
        assert wasserstein1_density(out, ref) < 1e-6
        assert np.trapezoid(out.values, x) == pytest.approx(1.0, abs=1e-8)

    def test_huge_reward_no_overflow(self, cluster1):
        x = consumption_grid(cluster1, T)
        mu = nominal_density(cluster1, T, x)
        out = best_response(GeneralReward(lambda x, r: -500.0 * x), mu, cluster1, T)
        assert np.all(np.isfinite(out.values))


class TestFixedPoint:
    def test_zero_reward_immediate(self, cluster1):
        res = fixed_point_solve(GeneralReward(lambda x, r: 0.0 * x), cluster1, T)
        assert res.converged and res.iterations == 1 and res.trace[0] < 1e-14

    def test_harmonic_damping_approaches_closed_form(self, cluster1):
        # mild reward: the harmonic schedule is slow, see the acceptance suite
        B = from_search_vector(np.array([0.05, 0.9, 0.95, 0.9, 0.95, 0.9, 0.95, 0.9, 0.95, 0.9]), 4.0)
        R = GeneralReward.from_piecewise(B, P)
        x = consumption_grid(cluster1, T, P)
        ref = equilibrium_closed_form(B, P, cluster1, T, x=x).density
        errs = []
        fixed_point_solve(R, cluster1, T, damping=power_damping(1.0), eps=1e-300, n_max=200,
                          x=x, callback=lambda i, f: errs.append(wasserstein1_density(f, ref)))
        assert errs[-1] < 1e-4
        tail = np.array(errs[20:])
        assert np.all(np.diff(tail) <= 1e-15)

    def test_constant_damping_converges(self, cluster2, rng):
        B = from_search_vector(rng.uniform(-1, 1, 10), 4.0)
        res = fixed_point_solve(GeneralReward.from_piecewise(B, P), cluster2, T, damping=0.5)
        assert res.converged
        ref = equilibrium_closed_form(B, P, cluster2, T, x=res.density.points).density
        assert wasserstein1_density(res.density, ref) < 1e-5

    def test_non_convergence_flagged(self, cluster1, rng):
        B = from_search_vector(rng.uniform(-1, 1, 10), 4.0)
        res = fixed_point_solve(GeneralReward.from_piecewise(B, P), cluster1, T, damping=0.5,
                                eps=1e-14, n_max=3)
        assert not res.converged and len(res.trace) == 3

    def test_unpacks_as_pair(self, cluster1):
        density, trace = fixed_point_solve(GeneralReward(lambda x, r: 0.0 * x), cluster1, T)
        assert isinstance(trace, list)

    def test_bad_eps(self, cluster1):
        with pytest.raises(ValueError):
            fixed_point_solve(GeneralReward(lambda x, r: 0.0 * x), cluster1, T, eps=0.0)


class TestInverseMaps:
    def _gauss(self, cl, mean, p=P):
        x = consumption_grid(cl, T, p, pad_low=3.0)
        return DensityGrid.normalized(x, gaussian_pdf(x, mean, cl.terminal_sd(T)))

    def test_price_incentive_needs_no_shape(self, cluster1):
        B, (lo, hi) = reward_from_distribution(self._gauss(cluster1, 17.898), cluster1, P, T)
        # the price alone implements this law: the ranked part vanishes at C = V_pi
        assert np.max(np.abs(B.b)) < 1e-6
        assert lo == pytest.approx(price_incentive(cluster1, P, T)[1]) and hi == np.inf

    def test_round_trip(self, cluster1):
        mu = self._gauss(cluster1, 16.0)
        B, _ = reward_from_distribution(mu, cluster1, P, T)
        eq = equilibrium_closed_form(B, P, cluster1, T, x=mu.points)
        assert wasserstein1_density(eq.density, mu) < 1e-3

    def test_increasing_profile_rejected(self, cluster1):
        mu = nominal_density(cluster1, T, consumption_grid(cluster1, T, P))
        with pytest.raises(AttainabilityError) as info:
            reward_from_distribution(mu, cluster1, P, T)
        assert info.value.rank is not None

    def test_budget_bounds(self, cluster1):
        mu = self._gauss(cluster1, 16.0)
        B, (lo, hi) = reward_from_distribution(mu, cluster1, P, T, budget=100.0)
        assert lo < hi < 100.0
        with pytest.raises(AttainabilityError):
            reward_from_distribution(mu, cluster1, P, T, budget=-100.0)

    def test_distribution_objective_values(self, cluster1, market):
        x_pi_law = self._gauss(cluster1, 17.898)
        assert distribution_objective([x_pi_law], [cluster1], market) == pytest.approx(-31.6759, abs=1e-3)
        opt = self._gauss(cluster1, 15.991071428571429)
        assert distribution_objective([opt], [cluster1], market) == pytest.approx(-28.2819, abs=1e-3)

    def test_distribution_objective_trivial(self, cluster1):
        mk = MarketParams(T=T, p=0.0, c_r=0.0)
        mu = nominal_density(cluster1, T)
        assert distribution_objective([mu], [cluster1], mk) == pytest.approx(0.0, abs=1e-9)

    def test_objective_matches_retailer_gain(self, cluster1, market):
        mu = self._gauss(cluster1, 16.5)
        B, _ = reward_from_distribution(mu, cluster1, P, T)
        lhs = distribution_objective([mu], [cluster1], market)
        assert retailer_gain(B, [cluster1], market).pi == pytest.approx(lhs, abs=1e-4)


def test_equilibrium_csv(tmp_path, clusters):
    B = from_search_vector(np.linspace(0.9, 0.5, 10), 4.0)
    write_equilibrium_csv(tmp_path / "eq.csv", B, clusters, P, T, rank_grid(101))
    data = np.genfromtxt(tmp_path / "eq.csv", delimiter=",", names=True)
    assert data.dtype.names == ("rank", "quantile_nominal_1", "quantile_price_incentive_1",
                                "quantile_equilibrium_1", "quantile_nominal_2",
                                "quantile_price_incentive_2", "quantile_equilibrium_2")
    assert data.shape == (101,)
