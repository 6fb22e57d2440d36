"""Kernels, weight functions, bandwidth grids and the seeding policy.

Everything in this module is immutable after construction and safe to
share across worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Kernel",
    "epanechnikov",
    "kernel_weights",
    "WeightFn",
    "make_weight",
    "BandwidthGrid",
    "SeedPolicy",
    "derive_rng",
    "splitmix64",
]


@dataclass(frozen=True)
class Kernel:
    """A symmetric localizing kernel supported on [-1/2, 1/2].

    Attributes
    ----------
    evaluate : callable
        Vectorized map x -> K(x), zero outside the support.
    mu_k : float
        Integral of K(x)^2 over the support.
    d_k : float
        Integral of x^2 K(x) over the support.
    lipschitz : float
        A Lipschitz constant of K on the real line.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    mu_k: float
    d_k: float
    lipschitz: float

    def __call__(self, x):
        return self.evaluate(x)


def _epanechnikov_eval(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 0.5, 1.5 * (1.0 - 4.0 * x * x), 0.0)


def epanechnikov() -> Kernel:
    """Epanechnikov kernel K(x) = (3/2)(1 - (2x)^2) on [-1/2, 1/2].

    The moment constants are analytic: int K^2 = 6/5 and int x^2 K = 1/20.
    """
    return Kernel(evaluate=_epanechnikov_eval, mu_k=1.2, d_k=0.05, lipschitz=12.0)


def kernel_weights(kernel: Kernel, n: int, u: float, h: float) -> np.ndarray:
    """Localized weights (1/h) K((t/n - u)/h) for t = 1..n.

    Entry ``t-1`` of the result corresponds to time index t.  At most
    ceil(n*h) + 1 entries are nonzero.
    """
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got h={h}")
    t = np.arange(1, n + 1, dtype=float)
    return kernel((t / n - u) / h) / h


def support_range(n: int, u: float, h: float) -> tuple[int, int]:
    """Inclusive 1-based index range [lo, hi] of times with |t/n - u| <= h/2.

    May be empty (lo > hi) when the window falls between grid points.
    """
    lo = max(1, math.ceil(n * (u - h / 2.0) - 1e-9))
    hi = min(n, math.floor(n * (u + h / 2.0) + 1e-9))
    return lo, hi


@dataclass(frozen=True)
class WeightFn:
    """Indicator weight of a closed interval [a, b] inside (0, 1)."""

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a < self.b <= 1.0):
            raise ValueError(f"invalid weight interval [{self.a}, {self.b}]")

    def eval(self, u):
        u = np.asarray(u, dtype=float)
        out = ((u >= self.a) & (u <= self.b)).astype(float)
        return out if out.ndim else float(out)

    def __call__(self, u):
        return self.eval(u)

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def measure(self) -> float:
        return self.b - self.a

    def support_indices(self, n: int) -> np.ndarray:
        """1-based time indices t with weight(t/n) = 1."""
        t = np.arange(1, n + 1)
        return t[self.eval(t / n) > 0.0]


def make_weight(a: float, b: float) -> WeightFn:
    """Indicator weight of [a, b]; both endpoints included."""
    return WeightFn(a, b)


@dataclass(frozen=True)
class BandwidthGrid:
    """Finite search grid for the bandwidth, strictly increasing in (0, 1)."""

    h_min: float
    h_max: float
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if not (0.0 < self.h_min <= self.h_max < 1.0):
            raise ValueError(f"need 0 < h_min <= h_max < 1, got [{self.h_min}, {self.h_max}]")
        if pts.size < 2:
            raise ValueError("grid needs at least 2 points")
        if np.any(np.diff(pts) <= 0.0):
            raise ValueError("grid points must be strictly increasing")
        if pts[0] < self.h_min - 1e-15 or pts[-1] > self.h_max + 1e-15:
            raise ValueError("grid points outside [h_min, h_max]")

    @classmethod
    def log_spaced(cls, h_min: float = 0.01, h_max: float = 0.99, count: int = 40) -> "BandwidthGrid":
        """Default grid: logarithmically spaced, which resolves the n^(-1/5)
        scale of the optimal bandwidth evenly in log-space."""
        pts = np.geomspace(h_min, h_max, count)
        pts[0], pts[-1] = h_min, h_max
        return cls(h_min=h_min, h_max=h_max, points=pts)

    def __len__(self):
        return self.points.size


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def derive_rng(base_seed: int, index: int = 0) -> np.random.Generator:
    """Independent counter-based stream for (base_seed, index).

    Streams are keyed, not jumped, so the mapping is injective in the
    index and independent of the order in which streams are created.
    """
    if base_seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    child = splitmix64((base_seed + index * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=[child, index]))


@dataclass(frozen=True)
class SeedPolicy:
    """Deterministic per-replication stream derivation from one base seed."""

    base_seed: int

    def derive(self, index: int) -> np.random.Generator:
        return derive_rng(self.base_seed, index)
