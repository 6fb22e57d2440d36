import numpy as np
import pytest

from lscv.core import derive_rng
from lscv.curves import ParamCurve
from lscv.experiments import model_preset
from lscv.processes import (
    Family,
    Innovation,
    ModelSpec,
    draw_innovations,
    read_series_cache,
    series_from_csv,
    series_to_csv,
    simulate,
    simulate_stationary,
    simulate_tvar,
    simulate_tvarch,
    simulate_tvma1,
    simulate_tvtar1,
    write_series_cache,
)

AR_SPEC = ModelSpec(Family.TVAR, 1, ((-0.99, 0.99), (0.05, 5.0)))
MA_SPEC = ModelSpec(Family.TVMA1, 1, ((-0.99, 0.99), (0.05, 5.0)))
ARCH_SPEC = ModelSpec(Family.TVARCH, 1, ((0.01, 10.0), (0.01, 0.95)))
TAR_SPEC = ModelSpec(Family.TVTAR1, 1, ((-0.95, 0.95), (-0.95, 0.95), (0.05, 5.0)))


class TestModelSpec:
    def test_dimension_accounting(self):
        assert AR_SPEC.p == 2 and ARCH_SPEC.p == 2 and TAR_SPEC.p == 3

    def test_rejects_bad_boxes(self):
        with pytest.raises(ValueError):
            ModelSpec(Family.TVAR, 1, ((-0.9, 0.9), (0.0, 1.0)))  # sigma lower bound
        with pytest.raises(ValueError):
            ModelSpec(Family.TVMA1, 1, ((-1.0, 0.9), (0.1, 1.0)))  # alpha touches -1
        with pytest.raises(ValueError):
            ModelSpec(Family.TVARCH, 1, ((0.0, 1.0), (0.1, 0.5)))  # a0 lower bound 0
        with pytest.raises(ValueError):
            ModelSpec(Family.TVARCH, 1, ((0.1, 1.0), (0.1, 1.5)))  # unstable upper bound
        with pytest.raises(ValueError):
            ModelSpec(Family.TVTAR1, 1, ((-1.0, 0.5), (-0.5, 0.5), (0.1, 1.0)))


class TestDegenerateRecursions:
    def test_ar_zero_coefficient_returns_innovations(self):
        curve = ParamCurve.constant([0.0, 1.0])
        s = simulate_tvar(AR_SPEC, curve, 300, seed=4, keep_innovations=True)
        np.testing.assert_array_equal(s.values, s.innovations)

    def test_ma_zero_alpha(self):
        curve = ParamCurve.constant([0.0, 0.7])
        s = simulate_tvma1(MA_SPEC, curve, 300, seed=4, keep_innovations=True)
        np.testing.assert_allclose(s.values, 0.7 * s.innovations, rtol=0, atol=0)

    def test_arch_no_lag_is_scaled_noise(self):
        curve = ParamCurve.constant([0.49, 0.01])
        s = simulate_tvarch(ARCH_SPEC, curve, 2000, seed=4, keep_innovations=True)
        # a1 at its tiny lower bound: variance within a whisker of a0
        assert np.var(s.values) == pytest.approx(0.49 / (1 - 0.01), rel=0.1)

    def test_tar_zero_slopes_is_noise(self):
        curve = ParamCurve.constant([0.0, 0.0, 1.0])
        s = simulate_tvtar1(TAR_SPEC, curve, 300, seed=4, keep_innovations=True)
        np.testing.assert_allclose(s.values, s.innovations)

    def test_tar_equal_slopes_absolute_value(self):
        curve = ParamCurve.constant([0.4, 0.4, 1.0])
        s = simulate_tvtar1(TAR_SPEC, curve, 200, seed=4, keep_innovations=True)
        x = s.values
        for t in range(1, 200):
            assert x[t] == pytest.approx(0.4 * abs(x[t - 1]) + s.innovations[t], abs=1e-12)


class TestStationaryMoments:
    def test_ar1_autocorrelation(self):
        s = simulate_stationary(AR_SPEC, [0.5, 1.0], 100_000, seed=10)
        x = s.values
        rho = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert rho == pytest.approx(0.5, abs=0.01)

    def test_ma1_autocorrelation(self):
        s = simulate_stationary(MA_SPEC, [0.5, 1.0], 100_000, seed=10)
        x = s.values
        rho = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert rho == pytest.approx(0.4, abs=0.01)  # alpha/(1+alpha^2)

    def test_arch1_unconditional_variance(self):
        s = simulate_stationary(ARCH_SPEC, [0.4, 0.2], 100_000, seed=10)
        assert np.mean(s.values**2) == pytest.approx(0.5, abs=0.02)


class TestSeedAndEquivalence:
    @pytest.mark.parametrize("name", ["a", "b", "c", "d"])
    def test_bit_identical_regeneration(self, name):
        spec, curve = model_preset(name)
        s1 = simulate(spec, curve, 400, seed=77)
        s2 = simulate(spec, curve, 400, seed=77)
        np.testing.assert_array_equal(s1.values, s2.values)
        s3 = simulate(spec, curve, 400, seed=78)
        assert not np.array_equal(s1.values, s3.values)

    @pytest.mark.parametrize("spec,theta", [
        (AR_SPEC, [0.6, 0.8]),
        (MA_SPEC, [-0.4, 1.2]),
        (ARCH_SPEC, [0.3, 0.25]),
        (TAR_SPEC, [0.3, -0.2, 1.0]),
    ])
    def test_frozen_curve_equals_stationary(self, spec, theta):
        curve = ParamCurve.constant(theta)
        a = simulate(spec, curve, 300, seed=5)
        b = simulate_stationary(spec, theta, 300, seed=5)
        np.testing.assert_array_equal(a.values, b.values)

    def test_model_a_windowed_variance(self):
        spec, curve = model_preset("a")
        s = simulate(spec, curve, 20_000, seed=3)
        # local second moment near sigma(u)^2/(1-alpha(u)^2)
        for u in (0.25, 0.5, 0.75):
            t0 = int(u * 20_000)
            window = s.values[t0 - 500:t0 + 500]
            th = curve.eval(u)
            target = th[1] ** 2 / (1 - th[0] ** 2)
            assert np.mean(window**2) == pytest.approx(target, rel=0.35)


class TestArchExactRecursion:
    def test_squared_recursion_residual_zero(self):
        spec, curve = model_preset("c")
        s = simulate(spec, curve, 600, seed=21, keep_innovations=True)
        th = curve.eval(np.arange(1, 601) / 600)
        sq, eps = s.squared_values, s.innovations
        for t in range(1, 600):
            expected = (th[t, 0] + th[t, 1] * sq[t - 1]) * (eps[t] * eps[t])
            assert sq[t] == expected  # bitwise
        np.testing.assert_allclose(s.values**2, sq, rtol=1e-12)


class TestInnovations:
    @pytest.mark.parametrize("dist", [Innovation.GAUSSIAN, Innovation.UNIFORM,
                                      Innovation.EXPONENTIAL])
    def test_standardization(self, dist):
        eps = draw_innovations(derive_rng(8), dist, 1_000_000)
        assert abs(np.mean(eps)) <= 0.01
        assert abs(np.var(eps) - 1.0) <= 0.01

    def test_pareto_mean_only(self):
        eps = draw_innovations(derive_rng(8), Innovation.PARETO, 1_000_000)
        assert abs(np.mean(eps)) <= 0.05  # heavy tail, slow LLN
        assert np.max(np.abs(eps)) <= 1e8


class TestSerialization:
    def test_csv_roundtrip(self, tmp_path):
        spec, curve = model_preset("a")
        s = simulate(spec, curve, 50, seed=9)
        path = tmp_path / "series.csv"
        series_to_csv(s, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,t/n,X"
        np.testing.assert_array_equal(series_from_csv(path), s.values)

    def test_cache_roundtrip(self, tmp_path):
        spec, curve = model_preset("b")
        s = simulate(spec, curve, 64, seed=9)
        path = tmp_path / "series.bin"
        write_series_cache(s, path)
        values, seed = read_series_cache(path, expected_spec=spec)
        assert seed == 9
        np.testing.assert_array_equal(values, s.values)

    def test_cache_spec_mismatch(self, tmp_path):
        spec, curve = model_preset("b")
        s = simulate(spec, curve, 16, seed=9)
        path = tmp_path / "series.bin"
        write_series_cache(s, path)
        other, _ = model_preset("a")
        with pytest.raises(ValueError):
            read_series_cache(path, expected_spec=other)


class TestValidation:
    def test_rejects_curve_outside_box(self):
        bad = ParamCurve.constant([1.5, 1.0])
        with pytest.raises(ValueError):
            simulate_tvar(AR_SPEC, bad, 50, seed=1)

    def test_rejects_wrong_dimension(self):
        with pytest.raises(ValueError):
            simulate_tvar(AR_SPEC, ParamCurve.constant([0.5]), 50, seed=1)

    def test_rejects_wrong_family(self):
        with pytest.raises(ValueError):
            simulate_tvma1(AR_SPEC, ParamCurve.constant([0.5, 1.0]), 50, seed=1)
