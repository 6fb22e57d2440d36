import numpy as np
import pytest

from lscv.curves import ParamCurve, constant_component, sinusoid
from lscv.experiments import model_preset


def _fd_check(curve, us, rtol=1e-5):
    step = 1e-4
    for u in us:
        c = min(max(u, step), 1.0 - step)
        d1 = (curve.eval(c + step) - curve.eval(c - step)) / (2 * step)
        d2 = (curve.eval(c + step) - 2 * curve.eval(c) + curve.eval(c - step)) / step**2
        np.testing.assert_allclose(curve.deriv1(c), d1, rtol=rtol, atol=1e-6)
        np.testing.assert_allclose(curve.deriv2(c), d2, rtol=rtol, atol=1e-3)


class TestParamCurve:
    def test_constant(self):
        c = ParamCurve.constant([0.3, 1.2])
        np.testing.assert_array_equal(c.eval(0.7), [0.3, 1.2])
        np.testing.assert_array_equal(c.deriv1(0.5), [0.0, 0.0])
        np.testing.assert_array_equal(c.deriv2(0.5), [0.0, 0.0])

    def test_vectorized_shape(self):
        c = ParamCurve.from_components([sinusoid(0.9), sinusoid(0.3, 0.5)])
        out = c.eval(np.linspace(0, 1, 7))
        assert out.shape == (7, 2)

    def test_analytic_derivatives_match_finite_differences(self):
        c = ParamCurve.from_components(
            [sinusoid(0.9), sinusoid(0.5, cosine=True), constant_component(2.0)])
        _fd_check(c, np.linspace(0.05, 0.95, 9))

    def test_fd_fallback(self):
        c = ParamCurve(dim=1, fn=lambda u: (u * u + 0.5).reshape(-1, 1))
        assert c.deriv1(0.4)[0] == pytest.approx(0.8, rel=1e-6)
        assert c.deriv2(0.4)[0] == pytest.approx(2.0, rel=1e-4)

    def test_from_table_roundtrip_and_derivatives(self):
        us = np.linspace(0, 1, 101)
        vals = np.column_stack([np.sin(2 * np.pi * us) * 0.4, 0.2 * us + 0.5])
        c = ParamCurve.from_table(us, vals)
        np.testing.assert_allclose(c.eval(us), vals, atol=1e-12)
        assert c.deriv1(0.5)[1] == pytest.approx(0.2, rel=1e-6)
        _fd_check(c, [0.3, 0.6])


class TestPresets:
    @pytest.mark.parametrize("name", ["a", "b", "c", "d"])
    def test_curve_stays_inside_box(self, name):
        spec, curve = model_preset(name)
        u = np.linspace(0, 1, 501)
        assert spec.contains(curve.eval(u))

    @pytest.mark.parametrize("name", ["a", "b", "c", "d"])
    def test_preset_derivatives(self, name):
        _, curve = model_preset(name)
        _fd_check(curve, np.linspace(0.1, 0.9, 5))

    def test_model_a_values(self):
        _, curve = model_preset("a")
        th = curve.eval(0.25)
        assert th[0] == pytest.approx(0.9)
        assert th[1] == pytest.approx(0.8)
