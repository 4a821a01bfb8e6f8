import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from rankreward.numerics import (Grid1D, gaussian_pdf, gaussian_tilt, integrate_trapezoid,
                                 normal_cdf, normal_quantile, rank_grid, rank_weights,
                                 wasserstein1, wasserstein1_density)
from rankreward.mfg import QuantileGrid, DensityGrid, gaussian_quantiles


class TestGrid:
    def test_rejects_unsorted_points(self):
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, 2.0, 1.0]), np.zeros(3))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, 1.0]), np.zeros(3))

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0]), np.zeros(1))


class TestNormalQuantile:
    def test_median(self):
        assert normal_quantile(0.5) == 0.0

    def test_table_value(self):
        assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)

    def test_round_trip_random(self, rng):
        u = rng.uniform(0, 1, 1000)
        assert np.max(np.abs(ndtr(normal_quantile(u)) - u)) < 1e-12

    def test_against_high_precision_oracle(self):
        u = np.concatenate((np.logspace(-12, -1, 200), np.linspace(0.1, 0.9, 200),
                            1 - np.logspace(-1, -12, 200)))
        assert np.max(np.abs(normal_quantile(u) - ndtri(u))) < 1e-9

    def test_strictly_increasing(self):
        u = np.linspace(1e-9, 1 - 1e-9, 20001)
        assert np.all(np.diff(normal_quantile(u)) > 0)

    def test_cdf_inverse_pair(self):
        u = np.concatenate((np.logspace(-12, -0.5, 400), 1 - np.logspace(-0.5, -12, 400)))
        assert np.max(np.abs(normal_cdf(normal_quantile(u)) - u)) < 1e-9
        z = np.linspace(-7, 0, 701)  # lower side, where N(z) is represented exactly
        assert np.max(np.abs(normal_quantile(normal_cdf(z)) - z)) < 1e-9

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, np.nan])
    def test_domain(self, u):
        with pytest.raises(ValueError):
            normal_quantile(u)


class TestTrapezoid:
    def test_constant_any_spacing(self, rng):
        x = np.sort(np.concatenate(([0.0, 1.0], rng.uniform(0, 1, 50))))
        assert integrate_trapezoid(Grid1D(x, np.ones_like(x))) == pytest.approx(1.0, abs=1e-14)

    def test_affine_exact(self):
        x = np.linspace(0, 1, 11)
        assert integrate_trapezoid(Grid1D(x, x)) == pytest.approx(0.5, abs=1e-15)

    def test_square(self):
        x = np.linspace(0, 1, 4001)
        assert abs(integrate_trapezoid(Grid1D(x, x * x)) - 1 / 3) < 1e-7


class TestWasserstein:
    def test_identical(self):
        q = gaussian_quantiles(0.0, 1.0)
        assert wasserstein1(q, q) == 0.0

    def test_shift(self):
        q1, q2 = gaussian_quantiles(0.0, 1.0), gaussian_quantiles(0.7, 1.0)
        assert wasserstein1(q1, q2) == pytest.approx(0.7, abs=1e-12)

    def test_scale(self):
        q1, q2 = gaussian_quantiles(0.0, 1.0), gaussian_quantiles(0.0, 2.0)
        assert abs(wasserstein1(q1, q2) - np.sqrt(2 / np.pi)) < 1e-3

    def test_symmetric(self, rng):
        r = rank_grid(101)
        a = QuantileGrid(r, np.sort(rng.normal(size=101)))
        b = QuantileGrid(r, np.sort(rng.normal(size=101)))
        assert wasserstein1(a, b) == wasserstein1(b, a)

    def test_mismatched_grids(self):
        with pytest.raises(ValueError):
            wasserstein1(gaussian_quantiles(0, 1, rank_grid(11)), gaussian_quantiles(0, 1, rank_grid(21)))

    def test_density_form_shift(self):
        x = np.linspace(-10, 12, 8001)
        f1 = DensityGrid.normalized(x, gaussian_pdf(x, 0.0, 1.0))
        f2 = DensityGrid.normalized(x, gaussian_pdf(x, 1.5, 1.0))
        assert wasserstein1_density(f1, f2) == pytest.approx(1.5, abs=1e-6)

    def test_rank_weights_sum_to_one(self):
        assert rank_weights(rank_grid()).sum() == pytest.approx(1.0, abs=1e-14)

    def test_default_rank_grid_is_midpoints(self):
        r = rank_grid()
        assert r.size == 2001
        assert r[0] == pytest.approx(1 / 4002) and r[-1] == pytest.approx(1 - 1 / 4002)


class TestGaussianTilt:
    def test_zero_tilt(self):
        assert gaussian_tilt(18.0, 1.0, 0.0) == (0.0, 18.0)

    def test_price_incentive_mean(self):
        _, m = gaussian_tilt(18.0, 0.6 * np.sqrt(3), -0.17 / 1.8)
        assert m == pytest.approx(17.898, abs=1e-12)

    def test_pointwise_identity(self):
        x_nom, sd, tau = 18.0, 0.6 * np.sqrt(3), -0.4
        x = np.linspace(10, 26, 4001)
        log_norm, mean = gaussian_tilt(x_nom, sd, tau)
        lhs = gaussian_pdf(x, x_nom, sd) * np.exp(tau * x)
        rhs = np.exp(log_norm) * gaussian_pdf(x, mean, sd)
        assert np.max(np.abs(lhs - rhs) / np.maximum(rhs, 1e-300)) < 1e-12

    def test_domain(self):
        with pytest.raises(ValueError):
            gaussian_tilt(0.0, 0.0, 1.0)
