"""Vector-valued parameter curves on rescaled time u in [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = ["ParamCurve", "sinusoid", "constant_component"]

_FD_STEP = 1e-4


@dataclass(frozen=True)
class ParamCurve:
    """A smooth map u -> theta(u) in R^p with optional analytic derivatives.

    ``fn`` (and ``d1``/``d2`` when given) take an array of shape (m,) and
    return an array of shape (m, dim).  When derivatives are not supplied
    they are approximated by central finite differences with step 1e-4,
    clipped so the stencil stays inside [0, 1].
    """

    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray] | None = None
    d2: Callable[[np.ndarray], np.ndarray] | None = None

    def eval(self, u) -> np.ndarray:
        scalar = np.isscalar(u)
        uu = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.asarray(self.fn(uu), dtype=float).reshape(uu.size, self.dim)
        return out[0] if scalar else out

    __call__ = eval

    def deriv1(self, u) -> np.ndarray:
        if self.d1 is not None:
            scalar = np.isscalar(u)
            uu = np.atleast_1d(np.asarray(u, dtype=float))
            out = np.asarray(self.d1(uu), dtype=float).reshape(uu.size, self.dim)
            return out[0] if scalar else out
        return self._fd(u, order=1)

    def deriv2(self, u) -> np.ndarray:
        if self.d2 is not None:
            scalar = np.isscalar(u)
            uu = np.atleast_1d(np.asarray(u, dtype=float))
            out = np.asarray(self.d2(uu), dtype=float).reshape(uu.size, self.dim)
            return out[0] if scalar else out
        return self._fd(u, order=2)

    def _fd(self, u, order: int) -> np.ndarray:
        scalar = np.isscalar(u)
        uu = np.atleast_1d(np.asarray(u, dtype=float))
        c = np.clip(uu, _FD_STEP, 1.0 - _FD_STEP)
        lo, hi, mid = self.eval(c - _FD_STEP), self.eval(c + _FD_STEP), self.eval(c)
        if order == 1:
            out = (hi - lo) / (2.0 * _FD_STEP)
        else:
            out = (hi - 2.0 * mid + lo) / (_FD_STEP * _FD_STEP)
        return out[0] if scalar else out

    @classmethod
    def constant(cls, theta: Sequence[float]) -> "ParamCurve":
        theta = np.asarray(theta, dtype=float)
        p = theta.size

        def fn(u):
            return np.broadcast_to(theta, (len(u), p)).copy()

        def zero(u):
            return np.zeros((len(u), p))

        return cls(dim=p, fn=fn, d1=zero, d2=zero)

    @classmethod
    def from_components(cls, components) -> "ParamCurve":
        """Stack scalar components, each a (f, f', f'') triple of callables.

        Second and third entries may be None; missing derivatives fall back
        to finite differences for the whole curve.
        """
        comps = list(components)
        p = len(comps)
        have_d1 = all(c[1] is not None for c in comps)
        have_d2 = all(c[2] is not None for c in comps)

        def stack(i):
            def g(u):
                return np.column_stack([np.asarray(c[i](u), dtype=float) for c in comps])

            return g

        return cls(
            dim=p,
            fn=stack(0),
            d1=stack(1) if have_d1 else None,
            d2=stack(2) if have_d2 else None,
        )

    @classmethod
    def from_table(cls, us: Sequence[float], values: np.ndarray) -> "ParamCurve":
        """Cubic-spline interpolant through sampled (u, theta) rows.

        Derivatives come from the interpolant, which is what the plug-in
        bandwidth uses when no analytic curve is available.
        """
        from scipy.interpolate import CubicSpline

        us = np.asarray(us, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] != us.size:
            values = values.T
        if values.shape[0] != us.size:
            raise ValueError("table rows must match the u samples")
        spline = CubicSpline(us, values, axis=0)
        p = values.shape[1]
        return cls(
            dim=p,
            fn=lambda u: spline(u).reshape(len(u), p),
            d1=lambda u: spline(u, 1).reshape(len(u), p),
            d2=lambda u: spline(u, 2).reshape(len(u), p),
        )


def sinusoid(amplitude: float, offset: float = 0.0, cosine: bool = False):
    """Component triple for a(u) = amplitude*sin(2*pi*u) + offset (or cos)."""
    w = 2.0 * np.pi
    if cosine:
        return (
            lambda u: amplitude * np.cos(w * u) + offset,
            lambda u: -amplitude * w * np.sin(w * u),
            lambda u: -amplitude * w * w * np.cos(w * u),
        )
    return (
        lambda u: amplitude * np.sin(w * u) + offset,
        lambda u: amplitude * w * np.cos(w * u),
        lambda u: -amplitude * w * w * np.sin(w * u),
    )


def constant_component(value: float):
    """Component triple for a constant coordinate."""
    return (
        lambda u: np.full(len(u), float(value)),
        lambda u: np.zeros(len(u)),
        lambda u: np.zeros(len(u)),
    )
