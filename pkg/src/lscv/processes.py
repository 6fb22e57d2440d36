"""Simulation of time-varying AR, MA(1), ARCH and TAR(1) triangular arrays.

All simulators are pure functions of (spec, curve, n, seed): the same
arguments reproduce the same series bit for bit.  A burn-in of 500 steps
with the coefficients frozen at theta(0) removes initialization
transients while keeping the output deterministic.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import derive_rng
from .curves import ParamCurve

__all__ = [
    "Family",
    "Innovation",
    "ModelSpec",
    "SimulatedSeries",
    "simulate_tvar",
    "simulate_tvma1",
    "simulate_tvarch",
    "simulate_tvtar1",
    "simulate_stationary",
    "simulate",
    "series_to_csv",
    "series_from_csv",
    "write_series_cache",
    "read_series_cache",
]

BURN_IN = 500
_PARETO_SHAPE = 2.5
_PARETO_CLIP = 1e8


class Family(enum.Enum):
    TVAR = "tvar"
    TVMA1 = "tvma1"
    TVARCH = "tvarch"
    TVTAR1 = "tvtar1"


class Innovation(enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    PARETO = "pareto"


#: (E eps^3, E eps^4) for the standardized innovation laws; Pareto has no
#: finite fourth moment, hence no entry.
INNOVATION_MOMENTS = {
    Innovation.GAUSSIAN: (0.0, 3.0),
    Innovation.UNIFORM: (0.0, 1.8),
    Innovation.EXPONENTIAL: (2.0, 9.0),
}


def draw_innovations(rng: np.random.Generator, dist: Innovation, size: int) -> np.ndarray:
    """Draw iid innovations standardized to mean 0, variance 1.

    Pareto(2.5) is only shifted to mean 0; its heavy tail is the point of
    the robustness runs, so the variance is left as is.  Draws are clipped
    at 1e8 in magnitude to keep squared recursions finite.
    """
    if dist is Innovation.GAUSSIAN:
        return rng.standard_normal(size)
    if dist is Innovation.UNIFORM:
        s = np.sqrt(3.0)
        return rng.uniform(-s, s, size)
    if dist is Innovation.EXPONENTIAL:
        return rng.standard_exponential(size) - 1.0
    if dist is Innovation.PARETO:
        x = 1.0 + rng.pareto(_PARETO_SHAPE, size)
        mean = _PARETO_SHAPE / (_PARETO_SHAPE - 1.0)
        return np.clip(x - mean, -_PARETO_CLIP, _PARETO_CLIP)
    raise ValueError(f"unknown innovation {dist!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Model family, parameter dimension and the parameter box Theta."""

    family: Family
    order: int
    theta_box: tuple[tuple[float, float], ...]
    innovation: Innovation = Innovation.GAUSSIAN

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.theta_box)
        object.__setattr__(self, "theta_box", box)
        if len(box) != self.p:
            raise ValueError(f"box has {len(box)} intervals, expected {self.p}")
        for lo, hi in box:
            if not lo <= hi:
                raise ValueError(f"empty box interval ({lo}, {hi})")
        if self.family is Family.TVAR:
            if box[-1][0] <= 0.0:
                raise ValueError("tvAR sigma interval must have positive lower bound")
        elif self.family is Family.TVMA1:
            if self.order != 1:
                raise ValueError("only MA order 1 is supported")
            if box[0][0] <= -1.0 or box[0][1] >= 1.0:
                raise ValueError("tvMA alpha interval must lie inside (-1, 1)")
            if box[1][0] <= 0.0:
                raise ValueError("tvMA sigma interval must have positive lower bound")
        elif self.family is Family.TVARCH:
            for lo, _ in box:
                if lo <= 0.0:
                    raise ValueError("tvARCH coefficient lower bounds must be positive")
            if sum(hi for _, hi in box[1:]) >= 1.0:
                raise ValueError("tvARCH lag coefficient upper bounds must sum below 1")
        elif self.family is Family.TVTAR1:
            if self.order != 1:
                raise ValueError("only TAR order 1 is supported")
            if max(abs(box[0][0]), abs(box[0][1]), abs(box[1][0]), abs(box[1][1])) >= 1.0:
                raise ValueError("tvTAR slope intervals must lie inside (-1, 1)")
            if box[2][0] <= 0.0:
                raise ValueError("tvTAR sigma interval must have positive lower bound")

    @property
    def p(self) -> int:
        if self.family is Family.TVAR:
            return self.order + 1
        if self.family is Family.TVMA1:
            return 2
        if self.family is Family.TVARCH:
            return self.order + 1
        if self.family is Family.TVTAR1:
            return 3
        raise ValueError(self.family)

    @property
    def box_array(self) -> np.ndarray:
        return np.asarray(self.theta_box, dtype=float)

    def contains(self, theta: np.ndarray, tol: float = 1e-12) -> bool:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        box = self.box_array
        return bool(np.all(theta >= box[:, 0] - tol) and np.all(theta <= box[:, 1] + tol))

    def spec_hash(self) -> bytes:
        text = f"{self.family.value}|{self.order}|{self.theta_box}|{self.innovation.value}"
        return hashlib.sha256(text.encode()).digest()[:16]


@dataclass(frozen=True)
class SimulatedSeries:
    """One triangular-array realization X_{1,n}, ..., X_{n,n}."""

    n: int
    values: np.ndarray
    spec: ModelSpec
    curve: ParamCurve
    seed: int
    innovations: Optional[np.ndarray] = None
    #: exact squared-recursion states for tvARCH (values are their roots)
    squared_values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.values.shape != (self.n,):
            raise ValueError("values length does not match n")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("simulated series contains non-finite values")


def _curve_values(spec: ModelSpec, curve: ParamCurve, n: int) -> np.ndarray:
    """Curve sampled at t/n for t = 1..n, validated against the box."""
    if curve.dim != spec.p:
        raise ValueError(f"curve dimension {curve.dim} != spec dimension {spec.p}")
    u = np.arange(1, n + 1, dtype=float) / n
    theta = curve.eval(u)
    theta0 = curve.eval(0.0)
    if not (spec.contains(theta) and spec.contains(theta0)):
        raise ValueError("parameter curve leaves the box Theta")
    return theta


def simulate_tvar(spec: ModelSpec, curve: ParamCurve, n: int, seed: int,
                  keep_innovations: bool = False) -> SimulatedSeries:
    """X_t = sum_j alpha_j(t/n) X_{t-j} + sigma(t/n) eps_t."""
    if spec.family is not Family.TVAR:
        raise ValueError("spec is not tvAR")
    r = spec.order
    theta = _curve_values(spec, curve, n)
    if np.any(theta[:, -1] <= 0.0):
        raise ValueError("sigma(u) must be positive")
    theta0 = curve.eval(0.0)
    eps = draw_innovations(derive_rng(seed), spec.innovation, BURN_IN + n)
    state = np.zeros(r)
    x = np.empty(n)
    for i in range(BURN_IN + n):
        th = theta0 if i < BURN_IN else theta[i - BURN_IN]
        xt = float(th[:r] @ state) + th[r] * eps[i] if r else th[r] * eps[i]
        if i >= BURN_IN:
            x[i - BURN_IN] = xt
        if r:
            state[1:] = state[:-1]
            state[0] = xt
    return SimulatedSeries(n=n, values=x, spec=spec, curve=curve, seed=seed,
                           innovations=eps[BURN_IN:].copy() if keep_innovations else None)


def simulate_tvma1(spec: ModelSpec, curve: ParamCurve, n: int, seed: int,
                   keep_innovations: bool = False) -> SimulatedSeries:
    """X_t = sigma(t/n) eps_t + alpha(t/n) sigma((t-1)/n) eps_{t-1}."""
    if spec.family is not Family.TVMA1:
        raise ValueError("spec is not tvMA(1)")
    theta = _curve_values(spec, curve, n)
    if np.any(theta[:, 1] <= 0.0) or np.any(np.abs(theta[:, 0]) >= 1.0):
        raise ValueError("need sigma(u) > 0 and |alpha(u)| < 1")
    eps = draw_innovations(derive_rng(seed), spec.innovation, BURN_IN + n)
    # sigma((t-1)/n) for t = 1..n; t = 1 uses u = 0
    u_prev = np.arange(0, n, dtype=float) / n
    sig_prev = curve.eval(u_prev)[:, 1]
    e = eps[BURN_IN:]
    e_prev = eps[BURN_IN - 1:BURN_IN + n - 1]
    x = theta[:, 1] * e + theta[:, 0] * sig_prev * e_prev
    return SimulatedSeries(n=n, values=x, spec=spec, curve=curve, seed=seed,
                           innovations=e.copy() if keep_innovations else None)


def simulate_tvarch(spec: ModelSpec, curve: ParamCurve, n: int, seed: int,
                    keep_innovations: bool = False) -> SimulatedSeries:
    """X_t = (a_0(t/n) + sum_i a_i(t/n) X_{t-i}^2)^(1/2) eps_t.

    The recursion runs on the squared states, which therefore satisfy it
    exactly in floating point; the returned values are their signed roots.
    """
    if spec.family is not Family.TVARCH:
        raise ValueError("spec is not tvARCH")
    r = spec.order
    theta = _curve_values(spec, curve, n)
    if np.any(theta < 0.0) or np.any(theta[:, 0] <= 0.0):
        raise ValueError("tvARCH coefficient curves must be nonnegative with a_0 > 0")
    if float(np.max(np.sum(theta[:, 1:], axis=1))) >= 1.0:
        raise ValueError("unstable tvARCH curve: sum of lag coefficients reaches 1")
    theta0 = curve.eval(0.0)
    eps = draw_innovations(derive_rng(seed), spec.innovation, BURN_IN + n)
    sq_state = np.zeros(r)
    sq = np.empty(n)
    for i in range(BURN_IN + n):
        th = theta0 if i < BURN_IN else theta[i - BURN_IN]
        v = th[0] + float(th[1:] @ sq_state) if r else th[0]
        s = v * (eps[i] * eps[i])
        if i >= BURN_IN:
            sq[i - BURN_IN] = s
        if r:
            sq_state[1:] = sq_state[:-1]
            sq_state[0] = s
    x = np.copysign(np.sqrt(sq), eps[BURN_IN:])
    return SimulatedSeries(n=n, values=x, spec=spec, curve=curve, seed=seed,
                           innovations=eps[BURN_IN:].copy() if keep_innovations else None,
                           squared_values=sq)


def simulate_tvtar1(spec: ModelSpec, curve: ParamCurve, n: int, seed: int,
                    keep_innovations: bool = False) -> SimulatedSeries:
    """X_t = a_1(t/n) max(X_{t-1}, 0) + a_2(t/n) max(-X_{t-1}, 0) + sigma(t/n) eps_t."""
    if spec.family is not Family.TVTAR1:
        raise ValueError("spec is not tvTAR(1)")
    theta = _curve_values(spec, curve, n)
    if float(np.max(np.abs(theta[:, :2]))) >= 1.0:
        raise ValueError("unstable tvTAR curve: a slope reaches 1 in magnitude")
    if np.any(theta[:, 2] <= 0.0):
        raise ValueError("sigma(u) must be positive")
    theta0 = curve.eval(0.0)
    eps = draw_innovations(derive_rng(seed), spec.innovation, BURN_IN + n)
    prev = 0.0
    x = np.empty(n)
    for i in range(BURN_IN + n):
        th = theta0 if i < BURN_IN else theta[i - BURN_IN]
        pos = prev if prev > 0.0 else 0.0
        neg = -prev if prev < 0.0 else 0.0
        prev = th[0] * pos + th[1] * neg + th[2] * eps[i]
        if i >= BURN_IN:
            x[i - BURN_IN] = prev
    return SimulatedSeries(n=n, values=x, spec=spec, curve=curve, seed=seed,
                           innovations=eps[BURN_IN:].copy() if keep_innovations else None)


_SIMULATORS = {
    Family.TVAR: simulate_tvar,
    Family.TVMA1: simulate_tvma1,
    Family.TVARCH: simulate_tvarch,
    Family.TVTAR1: simulate_tvtar1,
}


def simulate(spec: ModelSpec, curve: ParamCurve, n: int, seed: int,
             keep_innovations: bool = False) -> SimulatedSeries:
    """Dispatch to the family simulator."""
    return _SIMULATORS[spec.family](spec, curve, n, seed, keep_innovations)


def simulate_stationary(spec: ModelSpec, theta, n: int, seed: int,
                        keep_innovations: bool = False) -> SimulatedSeries:
    """Stationary approximation: the same recursion with frozen theta."""
    theta = np.asarray(theta, dtype=float)
    if not spec.contains(theta):
        raise ValueError("theta outside the box Theta")
    return simulate(spec, ParamCurve.constant(theta), n, seed, keep_innovations)


# ---------------------------------------------------------------------------
# serialization

def series_to_csv(series: SimulatedSeries, path) -> None:
    n = series.n
    with open(path, "w") as f:
        f.write("t,t/n,X\n")
        for t in range(1, n + 1):
            f.write(f"{t},{t / n!r},{float(series.values[t - 1])!r}\n")


def series_from_csv(path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return data[:, 2].astype(float)


_CACHE_MAGIC = b"LSCV0001"


def write_series_cache(series: SimulatedSeries, path) -> None:
    """Binary cache: magic, n, seed, spec hash, then the raw doubles."""
    with open(path, "wb") as f:
        f.write(_CACHE_MAGIC)
        f.write(struct.pack("<QQ", series.n, series.seed))
        f.write(series.spec.spec_hash())
        f.write(series.values.astype("<f8").tobytes())


def read_series_cache(path, expected_spec: ModelSpec | None = None):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _CACHE_MAGIC:
            raise ValueError("not a series cache file")
        n, seed = struct.unpack("<QQ", f.read(16))
        spec_hash = f.read(16)
        if expected_spec is not None and spec_hash != expected_spec.spec_hash():
            raise ValueError("cache was written under a different model spec")
        values = np.frombuffer(f.read(8 * n), dtype="<f8").copy()
    if values.size != n:
        raise ValueError("truncated series cache")
    return values, seed
