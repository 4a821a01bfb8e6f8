import numpy as np
import pytest

from rankreward import PiecewiseReward, equilibrium_closed_form
from rankreward.sim import (BLOCK, brownian_increments, empirical_rank, feedback_control,
                            simulate_population, write_trajectories_csv, zero_control)

T, P = 3.0, 0.17
REWARD = PiecewiseReward(np.linspace(0, 1, 6), [4.0, 2.5, 1.0, 0.0, -1.0, -2.0])


def linear(y):
    return -P * np.asarray(y)


@pytest.fixture(scope="module")
def price_control(cluster1):
    return feedback_control(linear, cluster1, T, n_steps=100)


class TestControls:
    def test_linear_payoff(self, cluster1, price_control):
        assert np.allclose(price_control.a, -P / (2 * cluster1.c), atol=1e-9)

    def test_zero_control(self, cluster1):
        z = zero_control(cluster1, T, 10)
        assert np.all(z(1.0, np.array([0.0, 18.0, 40.0])) == 0.0)

    def test_tilt_pushes_down(self, cluster1):
        eq = equilibrium_closed_form(REWARD, P, cluster1, T)
        xs, F = eq.density.points, eq.density.cdf()
        ctl = feedback_control(lambda y: REWARD(np.interp(y, xs, F)) - P * y, cluster1, T,
                               n_steps=50)
        assert np.all(ctl.a < 0)

    def test_bad_steps(self, cluster1):
        with pytest.raises(ValueError):
            feedback_control(linear, cluster1, T, n_steps=0)


class TestNoise:
    def test_stream_keys(self):
        a = brownian_increments(0, 0, 0, 5)
        assert a.shape == (BLOCK, 5)
        assert np.array_equal(a, brownian_increments(0, 0, 0, 5))
        assert not np.array_equal(a, brownian_increments(0, 1, 0, 5))
        assert not np.array_equal(a, brownian_increments(0, 0, 1, 5))
        assert not np.array_equal(a, brownian_increments(1, 0, 0, 5))

    def test_prefix_property(self, cluster1):
        ctl = {"zero": [None]}
        small = simulate_population([cluster1], 10, ctl, T, n_steps=20, seed=4)["zero"]
        big = simulate_population([cluster1], BLOCK + 50, ctl, T, n_steps=20, seed=4)["zero"]
        assert np.array_equal(small.terminal, big.terminal[:10])

    def test_common_random_numbers(self, cluster1, price_control):
        out = simulate_population([cluster1], 500, {"a": [None], "b": [price_control]}, T,
                                  n_steps=100, seed=2, store_paths=True)
        assert out["a"].noise_digest == out["b"].noise_digest
        # the increments differ only by the drift
        da = np.diff(out["a"].paths, axis=1)
        db = np.diff(out["b"].paths, axis=1)
        assert np.allclose(db - da, -P / (2 * cluster1.c) * T / 100, atol=1e-12)


class TestSimulate:
    def test_nominal_law(self, cluster1):
        b = simulate_population([cluster1], 20000, {"zero": [None]}, T, n_steps=30)["zero"]
        se = cluster1.terminal_sd(T) / np.sqrt(b.terminal.size)
        assert abs(b.terminal.mean() - cluster1.x_nom) < 4 * se
        assert b.terminal.std() == pytest.approx(cluster1.terminal_sd(T), rel=0.03)
        assert np.all(b.effort_cost == 0.0)

    def test_price_incentive(self, cluster1, price_control):
        b = simulate_population([cluster1], 10000, {"pi": [price_control]}, T, n_steps=100)["pi"]
        target = cluster1.x_nom - cluster1.price_shift(P, T)
        assert b.terminal.mean() == pytest.approx(target, abs=0.032)
        # deterministic cost: c a^2 T
        assert np.allclose(b.effort_cost, cluster1.c * (P / (2 * cluster1.c)) ** 2 * T)

    def test_monte_carlo_value(self, cluster1):
        eq = equilibrium_closed_form(REWARD, P, cluster1, T)
        xs, F = eq.density.points, eq.density.cdf()
        payoff = lambda y: REWARD(np.interp(y, xs, F)) - P * np.asarray(y)  # noqa: E731
        ctl = feedback_control(payoff, cluster1, T, n_steps=300)
        b = simulate_population([cluster1], 20000, {"opt": [ctl]}, T, n_steps=300, seed=7)["opt"]
        v = payoff(b.terminal) - b.effort_cost
        se = v.std(ddof=1) / np.sqrt(v.size)
        assert abs(v.mean() - eq.consumer_value) < 4 * se
        assert abs(b.terminal.mean() - eq.mean) < 4 * b.terminal.std() / np.sqrt(v.size)

    def test_two_clusters(self, clusters):
        out = simulate_population(clusters, [30, 20], {"zero": [None, None]}, T, n_steps=10)
        b = out["zero"]
        assert b.terminal.size == 50 and b.cluster(1).size == 20
        assert abs(b.cluster(1).mean() - 12.0) < 1.0

    def test_exits_counted(self, cluster1):
        ctl = feedback_control(linear, cluster1, T, n_steps=20, x=np.linspace(17.5, 18.5, 11))
        b = simulate_population([cluster1], 200, {"s": [ctl]}, T, n_steps=20)["s"]
        assert b.exits > 0

    @pytest.mark.parametrize("kw", [dict(n_agents=[10, 10]), dict(n_agents=0),
                                    dict(n_steps=0), dict(controls={"x": [None, None]})])
    def test_validation(self, cluster1, kw):
        args = dict(clusters=[cluster1], n_agents=10, controls={"x": [None]}, T=T) | kw
        with pytest.raises(ValueError):
            simulate_population(**args)


class TestRanksAndOutput:
    def test_empirical_rank(self):
        r = empirical_rank([3.0, 1.0, 2.0, 2.0])
        assert np.allclose(r, [1.0, 0.25, 0.75, 0.75])
        with pytest.raises(ValueError):
            empirical_rank([])

    def test_trajectories_csv(self, tmp_path, clusters):
        out = simulate_population(clusters, 5, {"zero": [None, None]}, T, n_steps=4,
                                  store_paths=True)
        path = tmp_path / "traj.csv"
        write_trajectories_csv(path, list(out.values()), max_agents=2)
        rows = path.read_text().splitlines()
        assert rows[0] == "t,agent_id,cluster,scenario,x,cum_effort_cost"
        assert len(rows) == 1 + 2 * 2 * 5

    def test_csv_needs_paths(self, tmp_path, cluster1):
        out = simulate_population([cluster1], 3, {"zero": [None]}, T, n_steps=4)
        with pytest.raises(ValueError):
            write_trajectories_csv(tmp_path / "t.csv", list(out.values()))
