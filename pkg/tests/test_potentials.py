"""Potential families: validation, convexity, moments, sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from lcprod.errors import InvalidPotential, UnsupportedDomain
from lcprod.potentials import (
    LinearTilt,
    Quadratic,
    ScaledAbs,
    Uniform,
    _tilt_cdf,
    _tilt_inverse_table,
)
from lcprod.seeds import substream

TILT_MEAN = 2.0 / (np.e**2 - 1.0)


class TestValidation:
    def test_quadratic_rejects_indefinite_precision(self):
        with pytest.raises(InvalidPotential):
            Quadratic(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_quadratic_rejects_asymmetric_precision(self):
        with pytest.raises(InvalidPotential):
            Quadratic(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_quadratic_rejects_shape_mismatch(self):
        with pytest.raises(InvalidPotential):
            Quadratic(np.zeros(2), np.eye(3))

    def test_tilt_rejects_unbounded_box(self):
        with pytest.raises(InvalidPotential):
            LinearTilt(np.array([1.0]), np.array([[-np.inf, 1.0]]))

    def test_tilt_rejects_empty_interval(self):
        with pytest.raises(InvalidPotential):
            LinearTilt(np.array([1.0]), np.array([[1.0, 1.0]]))

    def test_uniform_rejects_inverted_box(self):
        with pytest.raises(InvalidPotential):
            Uniform(np.array([[2.0, 1.0]]))

    def test_scaledabs_rejects_nonpositive_rates(self):
        with pytest.raises(InvalidPotential):
            ScaledAbs(np.zeros(2), np.array([1.0, 0.0]))

    def test_interval_mass_needs_dimension_one(self):
        pot = Uniform(np.array([[-1.0, 1.0], [-1.0, 1.0]]))
        with pytest.raises(UnsupportedDomain):
            pot.density_interval_mass(0.0, 1.0)


def _potential_window(pot):
    if isinstance(pot, (LinearTilt, Uniform)):
        return pot.box[:, 0], pot.box[:, 1]
    d = pot.domain_dim
    return -4.0 * np.ones(d), 4.0 * np.ones(d)


@pytest.fixture(
    params=[
        Quadratic(np.array([0.5, -0.2]), np.array([[2.0, 0.4], [0.4, 1.0]])),
        LinearTilt(np.array([-1.0, 2.0]), np.array([[-1.0, 1.0], [0.0, 3.0]])),
        Uniform(np.array([[-1.0, 2.0], [0.0, 0.5]])),
        ScaledAbs(np.array([1.0, -1.0]), np.array([0.5, 3.0])),
    ],
    ids=["quadratic", "tilt", "uniform", "scaledabs"],
)
def potential(request):
    return request.param


class TestConvexity:
    @given(data=st.data())
    @settings(max_examples=60, deadline=None, derandomize=True)
    def test_midpoint_inequality(self, potential, data):
        lo, hi = _potential_window(potential)
        draw = st.floats(0.0, 1.0, allow_nan=False)
        u = np.array([data.draw(draw) for _ in range(potential.domain_dim)])
        v = np.array([data.draw(draw) for _ in range(potential.domain_dim)])
        u = lo + u * (hi - lo)
        v = lo + v * (hi - lo)
        mid = potential.value(0.5 * (u + v))
        assert mid <= 0.5 * (potential.value(u) + potential.value(v)) + 1e-9


class TestMoments:
    def test_quadratic_mean_and_covariance(self):
        prec = np.array([[2.0, 0.4], [0.4, 1.0]])
        pot = Quadratic(np.array([0.5, -0.2]), prec)
        np.testing.assert_allclose(pot.domain_mean(), [0.5, -0.2])
        np.testing.assert_allclose(pot.domain_covariance(), np.linalg.inv(prec), atol=1e-12)

    def test_uniform_mean_and_variance(self):
        pot = Uniform(np.array([[-1.0, 3.0]]))
        np.testing.assert_allclose(pot.domain_mean(), [1.0])
        np.testing.assert_allclose(pot.domain_covariance(), [[16.0 / 12.0]])

    def test_tilt_mean_matches_by_parts_oracle(self):
        pot = LinearTilt(np.array([-1.0]), np.array([[-1.0, 1.0]]))
        np.testing.assert_allclose(pot.domain_mean(), [TILT_MEAN], atol=1e-8)

    def test_tilt_variance_matches_dense_grid_oracle(self):
        pot = LinearTilt(np.array([-1.0]), np.array([[-1.0, 1.0]]))
        xs = np.linspace(-1.0, 1.0, 2_000_001)
        w = np.exp(xs)
        z = np.trapezoid(w, xs)
        m1 = np.trapezoid(xs * w, xs) / z
        var = np.trapezoid((xs - m1) ** 2 * w, xs) / z
        np.testing.assert_allclose(pot.domain_covariance()[0, 0], var, atol=1e-8)

    def test_scaledabs_mean_is_center_and_variance_analytic(self):
        pot = ScaledAbs(np.array([1.5, -2.0]), np.array([0.5, 4.0]))
        np.testing.assert_allclose(pot.domain_mean(), [1.5, -2.0], atol=1e-8)
        np.testing.assert_allclose(
            pot.domain_covariance(), np.diag([2.0 / 0.25, 2.0 / 16.0])
        )


class TestSampling:
    def test_sample_moments_match(self, potential):
        rng = substream(123, 99, 0)
        pts = potential.sample_domain(rng, 200_000)
        mean = potential.domain_mean()
        cov = potential.domain_covariance()
        se = np.sqrt(np.diag(cov) / pts.shape[0])
        assert np.all(np.abs(pts.mean(axis=0) - mean) <= 5 * se + 1e-12)
        emp_cov = np.cov(pts.T)
        assert np.allclose(emp_cov, cov, atol=6 * np.abs(cov).max() / math.sqrt(pts.shape[0]) + 0.01)

    def test_sampling_is_deterministic(self, potential):
        a = potential.sample_domain(substream(5, 99, 1), 64)
        b = potential.sample_domain(substream(5, 99, 1), 64)
        np.testing.assert_array_equal(a, b)

    def test_batch_prefix_matches_single_draw(self, potential):
        one = potential.sample_domain(substream(5, 99, 2), 1)
        batch = potential.sample_domain(substream(5, 99, 2), 16)
        np.testing.assert_array_equal(one[0], batch[0])

    def test_degenerate_uniform_domain(self):
        pot = Uniform(np.zeros((0, 2)))
        assert pot.domain_dim == 0
        pts = pot.sample_domain(substream(1, 99, 3), 8)
        assert pts.shape == (8, 0)
        assert pot.domain_mean().shape == (0,)
        assert pot.domain_covariance().shape == (0, 0)


class TestTiltInverseTable:
    def test_grid_floor_and_interpolation_error(self):
        xs, cdf = _tilt_inverse_table(-1.0, -1.0, 1.0)
        assert xs.size >= 4097
        mids = 0.5 * (xs[:-1] + xs[1:])
        gap = np.max(np.abs(0.5 * (cdf[:-1] + cdf[1:]) - _tilt_cdf(-1.0, -1.0, 1.0, mids)))
        assert gap < 1e-8

    def test_tilt_sample_mean_within_tolerance(self):
        pot = LinearTilt(np.array([-1.0]), np.array([[-1.0, 1.0]]))
        pts = pot.sample_domain(substream(7, 99, 4), 100_000)
        sd = math.sqrt(pot.domain_covariance()[0, 0])
        assert abs(pts.mean() - TILT_MEAN) <= 4 * sd / math.sqrt(pts.shape[0])


class TestIntervalMass:
    def test_quadratic_matches_normal_cdf(self):
        pot = Quadratic(np.array([0.5]), np.array([[4.0]]))
        got = pot.density_interval_mass(0.0, 1.0)
        want = ndtr((1.0 - 0.5) * 2.0) - ndtr((0.0 - 0.5) * 2.0)
        assert abs(got - want) < 1e-9

    def test_uniform_overlap(self):
        pot = Uniform(np.array([[-1.0, 1.0]]))
        assert pot.density_interval_mass(0.0, 3.0) == pytest.approx(0.5)
        assert pot.density_interval_mass(2.0, 3.0) == 0.0

    def test_scaledabs_matches_laplace_cdf(self):
        pot = ScaledAbs(np.array([1.0]), np.array([2.0]))

        def laplace_cdf(x):
            if x < 1.0:
                return 0.5 * math.exp(2.0 * (x - 1.0))
            return 1.0 - 0.5 * math.exp(-2.0 * (x - 1.0))

        got = pot.density_interval_mass(0.0, 2.0)
        assert abs(got - (laplace_cdf(2.0) - laplace_cdf(0.0))) < 1e-9

    def test_tilt_matches_closed_form(self):
        pot = LinearTilt(np.array([-1.0]), np.array([[-1.0, 1.0]]))
        got = pot.density_interval_mass(0.0, 1.0)
        want = (np.e - 1.0) / (np.e - np.exp(-1.0))
        assert abs(got - want) < 1e-9
