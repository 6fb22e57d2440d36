import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from lscv.core import (
    BandwidthGrid,
    SeedPolicy,
    WeightFn,
    derive_rng,
    epanechnikov,
    kernel_weights,
    make_weight,
)


class TestEpanechnikov:
    def test_center_value(self):
        assert epanechnikov()(0.0) == pytest.approx(1.5, abs=0)

    def test_support_boundary(self):
        k = epanechnikov()
        assert k(0.5) == 0.0
        assert k(0.7) == 0.0
        assert k(-0.51) == 0.0

    def test_integrates_to_one(self):
        k = epanechnikov()
        val, _ = quad(k.evaluate, -0.5, 0.5, epsabs=1e-13)
        assert abs(val - 1.0) <= 1e-10

    def test_moment_constants_match_quadrature(self):
        k = epanechnikov()
        mu, _ = quad(lambda x: k.evaluate(x) ** 2, -0.5, 0.5, epsabs=1e-13)
        d, _ = quad(lambda x: x * x * k.evaluate(x), -0.5, 0.5, epsabs=1e-13)
        assert abs(mu - k.mu_k) <= 1e-10
        assert abs(d - k.d_k) <= 1e-10
        assert k.mu_k == pytest.approx(1.2, abs=1e-15)
        assert k.d_k == pytest.approx(0.05, abs=1e-15)

    @given(st.floats(-2.0, 2.0))
    @settings(max_examples=200, deadline=None)
    def test_symmetry_and_nonnegativity(self, x):
        k = epanechnikov()
        assert k(x) == k(-x)
        assert k(x) >= 0.0


class TestKernelWeights:
    def test_center_point(self):
        w = kernel_weights(epanechnikov(), 100, 0.5, 0.1)
        assert w[49] == pytest.approx(15.0)

    def test_outside_support(self):
        w = kernel_weights(epanechnikov(), 100, 0.5, 0.1)
        assert w[55] == 0.0  # |t/n - u|/h = 0.6 > 1/2

    def test_support_edge_is_zero(self):
        # t=4, n=10, u=0.5, h=0.2: argument is exactly -1/2
        w = kernel_weights(epanechnikov(), 10, 0.5, 0.2)
        assert w[3] == 0.0

    def test_rejects_nonpositive_bandwidth(self):
        with pytest.raises(ValueError):
            kernel_weights(epanechnikov(), 10, 0.5, 0.0)
        with pytest.raises(ValueError):
            kernel_weights(epanechnikov(), 10, 0.5, -0.1)

    def test_sparsity(self):
        n, h = 200, 0.13
        w = kernel_weights(epanechnikov(), n, 0.4, h)
        assert np.count_nonzero(w) <= int(np.ceil(n * h)) + 1

    @pytest.mark.parametrize("n,h,u", [(100, 0.2, 0.5), (500, 0.05, 0.3),
                                       (1000, 0.02, 0.7), (2000, 0.3, 0.5)])
    def test_riemann_sum_bound(self, n, h, u):
        # (1/n) sum of weights approximates the kernel integral 1 at a
        # Lipschitz-driven rate
        k = epanechnikov()
        s = np.sum(kernel_weights(k, n, u, h)) / n
        assert abs(s - 1.0) <= 2.0 * k.lipschitz / (n * h) + 2.0 / (n * h)


class TestWeightFn:
    def test_indicator_values(self):
        w = make_weight(0.05, 0.95)
        assert w.eval(0.5) == 1.0
        assert w.eval(0.01) == 0.0
        # closed endpoints
        assert w.eval(0.05) == 1.0
        assert w.eval(0.95) == 1.0

    def test_rejects_empty_interval(self):
        with pytest.raises(ValueError):
            make_weight(0.5, 0.5)
        with pytest.raises(ValueError):
            make_weight(0.7, 0.2)

    def test_support_indices(self):
        w = make_weight(0.05, 0.95)
        ts = w.support_indices(200)
        assert ts[0] == 10 and ts[-1] == 190  # 10/200 = 0.05 included

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_indicator_form(self, u):
        w = make_weight(0.2, 0.8)
        assert w.eval(u) == (1.0 if 0.2 <= u <= 0.8 else 0.0)


class TestBandwidthGrid:
    def test_default_grid(self):
        g = BandwidthGrid.log_spaced()
        assert len(g) == 40
        assert g.points[0] == 0.01
        assert g.points[-1] == 0.99
        assert np.all(np.diff(g.points) > 0)

    def test_invalid_grids(self):
        with pytest.raises(ValueError):
            BandwidthGrid(h_min=0.0, h_max=0.5, points=np.array([0.1, 0.2]))
        with pytest.raises(ValueError):
            BandwidthGrid(h_min=0.1, h_max=1.0, points=np.array([0.1, 1.0]))
        with pytest.raises(ValueError):
            BandwidthGrid(h_min=0.1, h_max=0.5, points=np.array([0.2]))
        with pytest.raises(ValueError):
            BandwidthGrid(h_min=0.1, h_max=0.5, points=np.array([0.3, 0.2]))


class TestSeedPolicy:
    def test_determinism(self):
        a = SeedPolicy(123).derive(7).standard_normal(1000)
        b = SeedPolicy(123).derive(7).standard_normal(1000)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ_across_indices(self):
        draws = {}
        for i in range(50):
            draws[i] = tuple(derive_rng(99, i).standard_normal(4))
        assert len(set(draws.values())) == 50

    def test_streams_differ_across_seeds(self):
        a = derive_rng(1, 0).standard_normal(8)
        b = derive_rng(2, 0).standard_normal(8)
        assert not np.array_equal(a, b)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            derive_rng(-1, 0)
