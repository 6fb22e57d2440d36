"""Conditional Gaussian objectives, their derivatives, and localized sums.

Each model family provides l(x, past, theta) together with hand-derived
gradient and Hessian in theta; finite differences are used only as test
oracles.  ``Objective.bind`` attaches a series once and exposes vectorized
window evaluation, which is what the estimator and the cross-validation
loop run on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .core import Kernel, kernel_weights, support_range
from .processes import Family, ModelSpec, SimulatedSeries

__all__ = [
    "DomainError",
    "TruncatedPast",
    "Objective",
    "objective_for",
    "ell_tvar",
    "ell_tvma1",
    "ell_tvarch",
    "ell_tvtar1",
    "ma1_filter_coeffs",
    "local_likelihood",
]

_LOG_2PI = math.log(2.0 * math.pi)
MA_FILTER_CUTOFF = 1e-12


class DomainError(ValueError):
    """Objective evaluated outside its parameter domain."""


class TruncatedPast:
    """The observed past (X_{t-1}, ..., X_1) zero-padded to the left.

    Lags are 1-based: ``past.lag(1)`` is X_{t-1} and any lag beyond the
    available history is exactly 0.
    """

    __slots__ = ("_values", "_t")

    def __init__(self, values: np.ndarray, t: int):
        values = np.asarray(values, dtype=float)
        if not 1 <= t <= values.size:
            raise IndexError(f"t={t} outside 1..{values.size}")
        self._values = values
        self._t = t

    @property
    def t(self) -> int:
        return self._t

    @property
    def available(self) -> int:
        return self._t - 1

    def lag(self, k: int) -> float:
        if k < 1:
            raise IndexError("lags are 1-based")
        i = self._t - k
        return float(self._values[i - 1]) if i >= 1 else 0.0

    def array(self, depth: Optional[int] = None) -> np.ndarray:
        """First ``depth`` lags, most recent first, zero-padded."""
        if depth is None:
            depth = self.available
        out = np.zeros(depth)
        m = min(depth, self.available)
        if m:
            out[:m] = self._values[self._t - 1 - m:self._t - 1][::-1]
        return out


def _as_lags(past, depth: Optional[int] = None) -> np.ndarray:
    """Normalize a past argument to a zero-padded lag array."""
    if isinstance(past, TruncatedPast):
        return past.array(depth)
    arr = np.atleast_1d(np.asarray(past, dtype=float))
    if depth is None:
        return arr
    out = np.zeros(depth)
    m = min(depth, arr.size)
    out[:m] = arr[:m]
    return out


# ---------------------------------------------------------------------------
# scalar objectives


def _gaussian_mean_terms(x: float, z: np.ndarray, beta: np.ndarray, sigma: float):
    if sigma <= 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    e = x - float(z @ beta)
    s2 = sigma * sigma
    val = 0.5 * (_LOG_2PI + math.log(s2)) + e * e / (2.0 * s2)
    q = z.size
    g = np.empty(q + 1)
    g[:q] = -e * z / s2
    g[q] = 1.0 / sigma - e * e / (s2 * sigma)
    H = np.empty((q + 1, q + 1))
    H[:q, :q] = np.outer(z, z) / s2
    H[:q, q] = H[q, :q] = 2.0 * e * z / (s2 * sigma)
    H[q, q] = -1.0 / s2 + 3.0 * e * e / (s2 * s2)
    return val, g, H


def ell_tvar(x: float, past, theta) -> float:
    """Gaussian AR(r) objective: (1/2)log(2 pi sigma^2) + residual^2/(2 sigma^2)."""
    theta = np.asarray(theta, dtype=float)
    r = theta.size - 1
    z = _as_lags(past, r)
    return _gaussian_mean_terms(x, z, theta[:r], theta[r])[0]


def _tar_regressors(y: float) -> np.ndarray:
    return np.array([y if y > 0.0 else 0.0, -y if y < 0.0 else 0.0])


def ell_tvtar1(x: float, past, theta) -> float:
    """Gaussian TAR(1) objective with split regressors (y+, y-)."""
    theta = np.asarray(theta, dtype=float)
    y = _as_lags(past, 1)[0]
    return _gaussian_mean_terms(x, _tar_regressors(y), theta[:2], theta[2])[0]


def ma1_filter_coeffs(alpha: float, sigma: float, max_terms: Optional[int] = None,
                      cutoff: float = MA_FILTER_CUTOFF) -> np.ndarray:
    """Inverse-filter coefficients gamma_k = (-alpha)^k / sigma.

    Terms are included until |alpha|^k < cutoff or k = max_terms - 1,
    whichever comes first; the geometric tail keeps the truncation error
    below the solver tolerances.
    """
    if abs(alpha) >= 1.0:
        raise DomainError(f"|alpha| must be below 1, got {alpha}")
    if sigma <= 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if abs(alpha) < cutoff:
        k = 1
    else:
        k = min(1 + math.ceil(math.log(cutoff) / math.log(abs(alpha))), 1 << 22)
    if max_terms is not None:
        k = min(k, max_terms)
    return (-alpha) ** np.arange(max(k, 1)) / sigma


def ell_tvma1(x: float, past, theta) -> float:
    """Gaussian MA(1) objective through the truncated inverse filter."""
    theta = np.asarray(theta, dtype=float)
    alpha, sigma = theta
    lags = _as_lags(past)
    gam = ma1_filter_coeffs(alpha, sigma, max_terms=lags.size + 1)
    z = np.concatenate(([x], lags[:gam.size - 1]))
    s = float(gam @ z[:gam.size])
    return 0.5 * math.log(2.0 * math.pi * sigma * sigma) + 0.5 * s * s


def _ma1_terms(x: float, lags: np.ndarray, alpha: float, sigma: float):
    n_terms = max(ma1_filter_coeffs(alpha, 1.0, max_terms=lags.size + 1).size, 3)
    n_terms = min(n_terms, lags.size + 1)
    k = np.arange(n_terms, dtype=float)
    gam = (-alpha) ** k
    # d/da (-a)^k = -k (-a)^(k-1), d2/da2 = k (k-1) (-a)^(k-2)
    pow1 = (-alpha) ** np.maximum(k - 1.0, 0.0)
    pow2 = (-alpha) ** np.maximum(k - 2.0, 0.0)
    dgam = np.where(k >= 1.0, -k * pow1, 0.0)
    d2gam = np.where(k >= 2.0, k * (k - 1.0) * pow2, 0.0)
    z = np.concatenate(([x], lags))[:n_terms]
    # m is the alpha-filtered sum; the full filtered value is m / sigma
    m, ma, maa = float(gam @ z), float(dgam @ z), float(d2gam @ z)
    s2 = sigma * sigma
    val = 0.5 * (_LOG_2PI + math.log(s2)) + m * m / (2.0 * s2)
    g = np.array([m * ma / s2, 1.0 / sigma - m * m / (s2 * sigma)])
    H = np.array([
        [(ma * ma + m * maa) / s2, -2.0 * m * ma / (s2 * sigma)],
        [-2.0 * m * ma / (s2 * sigma), -1.0 / s2 + 3.0 * m * m / (s2 * s2)],
    ])
    return val, g, H


def _arch_terms(x: float, u: np.ndarray, theta: np.ndarray):
    v = float(u @ theta)
    if v <= 0.0:
        raise DomainError(f"conditional variance must be positive, got {v}")
    x2 = x * x
    val = 0.5 * (_LOG_2PI + math.log(v)) + x2 / (2.0 * v)
    g = u * (v - x2) / (2.0 * v * v)
    H = np.outer(u, u) * (2.0 * x2 - v) / (2.0 * v ** 3)
    return val, g, H


def ell_tvarch(x: float, past, theta) -> float:
    """Gaussian ARCH(r) objective: conditional variance <theta, (1, y^2)>."""
    theta = np.asarray(theta, dtype=float)
    r = theta.size - 1
    lags = _as_lags(past, r)
    u = np.concatenate(([1.0], lags * lags))
    return _arch_terms(x, u, theta)[0]


# ---------------------------------------------------------------------------
# objectives bound to a model family


class Objective:
    """Family objective with analytic derivatives and a series-bound
    vectorized evaluation path."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.p = spec.p
        self.box = spec.box_array

    @property
    def family(self) -> Family:
        return self.spec.family

    @property
    def is_linear_mean(self) -> bool:
        return self.family in (Family.TVAR, Family.TVTAR1)

    # scalar path -----------------------------------------------------

    def _terms(self, x: float, past, theta: np.ndarray):
        fam = self.family
        if fam is Family.TVAR:
            r = self.spec.order
            return _gaussian_mean_terms(x, _as_lags(past, r), theta[:r], theta[r])
        if fam is Family.TVTAR1:
            y = _as_lags(past, 1)[0]
            return _gaussian_mean_terms(x, _tar_regressors(y), theta[:2], theta[2])
        if fam is Family.TVMA1:
            if abs(theta[0]) >= 1.0:
                raise DomainError(f"|alpha| must be below 1, got {theta[0]}")
            if theta[1] <= 0.0:
                raise DomainError(f"sigma must be positive, got {theta[1]}")
            return _ma1_terms(x, _as_lags(past), theta[0], theta[1])
        if fam is Family.TVARCH:
            r = self.spec.order
            lags = _as_lags(past, r)
            return _arch_terms(x, np.concatenate(([1.0], lags * lags)), theta)
        raise ValueError(fam)

    def ell(self, x: float, past, theta) -> float:
        return self._terms(x, past, np.asarray(theta, dtype=float))[0]

    def grad(self, x: float, past, theta) -> np.ndarray:
        return self._terms(x, past, np.asarray(theta, dtype=float))[1]

    def hess(self, x: float, past, theta) -> np.ndarray:
        return self._terms(x, past, np.asarray(theta, dtype=float))[2]

    # bound path --------------------------------------------------------

    def bind(self, series) -> "BoundObjective":
        values = series.values if isinstance(series, SimulatedSeries) else np.asarray(series, dtype=float)
        fam = self.family
        if fam is Family.TVAR:
            return _BoundMean(self, values, _lag_matrix(values, self.spec.order))
        if fam is Family.TVTAR1:
            prev = np.concatenate(([0.0], values[:-1]))
            z = np.column_stack((np.maximum(prev, 0.0), np.maximum(-prev, 0.0)))
            return _BoundMean(self, values, z)
        if fam is Family.TVMA1:
            return _BoundMa1(self, values)
        if fam is Family.TVARCH:
            sq = values * values
            u = np.column_stack([np.ones(values.size), _lag_matrix(sq, self.spec.order)])
            return _BoundArch(self, values, u)
        raise ValueError(fam)


def _lag_matrix(values: np.ndarray, r: int) -> np.ndarray:
    """Columns (X_{t-1}, ..., X_{t-r}) for t = 1..n, zero-padded."""
    n = values.size
    z = np.zeros((n, r))
    for j in range(1, r + 1):
        z[j:, j - 1] = values[:n - j]
    return z


def _rows(arr: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Row view for contiguous index ranges, fancy copy otherwise."""
    i0 = int(idx[0])
    if int(idx[-1]) - i0 + 1 == idx.size:
        return arr[i0:i0 + idx.size]
    return arr[idx]


class BoundObjective:
    """Objective attached to one series; evaluates many time indices at once.

    Indices are 0-based positions into the series here; the public
    ``local_likelihood`` does the 1-based bookkeeping.  ``window`` binds
    the index rows and kernel weights once, and the Newton iteration then
    evaluates it repeatedly with ``evaluate(theta, order)``.
    """

    def __init__(self, objective: Objective, values: np.ndarray):
        self.objective = objective
        self.values = values
        self.n = values.size

    def window(self, idx: np.ndarray, w: np.ndarray):
        raise NotImplementedError

    def ell_terms(self, idx: np.ndarray, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def weighted(self, idx: np.ndarray, w: np.ndarray, theta: np.ndarray, order: int = 0):
        """(sum_t w_t l_t / n, gradient, Hessian) over the given indices."""
        return self.window(idx, w).evaluate(theta, order)


class _MeanWindow:
    """Weighted moments make every evaluation O(p^2) in this family."""

    __slots__ = ("n", "q", "wsum", "szz", "szx", "sxx")

    def __init__(self, x, z, w, n, q):
        self.n = n
        self.q = q
        self.wsum = float(np.sum(w))
        wz = z * w[:, None]
        self.szz = z.T @ wz
        self.szx = x @ wz
        self.sxx = float((w * x) @ x)

    def evaluate(self, theta, order=0):
        q = self.q
        sigma = float(theta[q])
        if sigma <= 0.0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        beta = theta[:q]
        s2 = sigma * sigma
        szz_b = self.szz @ beta
        rss = self.sxx - 2.0 * float(beta @ self.szx) + float(beta @ szz_b)
        if rss < 0.0:
            rss = 0.0
        val = (0.5 * (_LOG_2PI + math.log(s2)) * self.wsum + rss / (2.0 * s2)) / self.n
        if order == 0:
            return val
        resid_mom = self.szx - szz_b  # sum_t w_t e_t z_t
        g = np.empty(q + 1)
        g[:q] = -resid_mom / s2
        g[q] = self.wsum / sigma - rss / (s2 * sigma)
        g /= self.n
        if order == 1:
            return val, g
        H = np.empty((q + 1, q + 1))
        H[:q, :q] = self.szz / s2
        H[:q, q] = H[q, :q] = 2.0 * resid_mom / (s2 * sigma)
        H[q, q] = -self.wsum / s2 + 3.0 * rss / (s2 * s2)
        H /= self.n
        return val, g, H


class _BoundMean(BoundObjective):
    def __init__(self, objective: Objective, values: np.ndarray, z: np.ndarray):
        super().__init__(objective, values)
        self.z = z

    def window(self, idx, w):
        return _MeanWindow(_rows(self.values, idx), _rows(self.z, idx), w, self.n, self.z.shape[1])

    def ell_terms(self, idx, theta):
        theta = np.asarray(theta, dtype=float)
        q = self.z.shape[1]
        sigma = theta[q]
        if sigma <= 0.0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        e = _rows(self.values, idx) - _rows(self.z, idx) @ theta[:q]
        return 0.5 * (_LOG_2PI + np.log(sigma * sigma)) + e * e / (2.0 * sigma * sigma)


class _ArchWindow:
    __slots__ = ("x2", "u", "w", "wx2", "n")

    def __init__(self, x2, u, w, n):
        self.x2 = x2
        self.u = u
        self.w = w
        self.wx2 = w * x2
        self.n = n

    def evaluate(self, theta, order=0):
        v = self.u @ theta
        if v[np.argmin(v)] <= 0.0:
            raise DomainError("conditional variance must stay positive")
        iv = 1.0 / v
        val = (0.5 * (float(self.w @ np.log(v)) + _LOG_2PI * float(np.sum(self.w)))
               + 0.5 * float(self.wx2 @ iv)) / self.n
        if order == 0:
            return val
        c = 0.5 * (self.w - self.wx2 * iv) * iv
        g = (c @ self.u) / self.n
        if order == 1:
            return val, g
        d = (self.wx2 * iv - 0.5 * self.w) * iv * iv
        H = (self.u.T * d) @ self.u / self.n
        return val, g, H


class _BoundArch(BoundObjective):
    def __init__(self, objective: Objective, values: np.ndarray, u: np.ndarray):
        super().__init__(objective, values)
        self.u = u
        self.x2 = values * values

    def window(self, idx, w):
        return _ArchWindow(_rows(self.x2, idx), _rows(self.u, idx), w, self.n)

    def ell_terms(self, idx, theta):
        theta = np.asarray(theta, dtype=float)
        v = _rows(self.u, idx) @ theta
        if np.any(v <= 0.0):
            raise DomainError("conditional variance must stay positive")
        x2 = _rows(self.x2, idx)
        return 0.5 * (_LOG_2PI + np.log(v)) + x2 / (2.0 * v)


class _BoundMa1(BoundObjective):
    """MA(1) window evaluation through the zero-padded inverse filter.

    q_t(alpha) = sum_k (-alpha)^k z_{k+1} over the zero-padded past obeys
    q_t = X_t - alpha q_{t-1}, so one linear filter pass produces all t at
    once; alpha-derivatives satisfy the same recursion driven by the
    lagged lower-order output.  Small windows instead take a truncated
    lag-matrix product, cut off once |alpha|^k drops below 1e-12; the two
    paths agree to well below every solver tolerance.
    """

    #: prefer the truncated product while window-size * filter-depth work
    #: stays below the (measured) cost of three full filter passes
    @staticmethod
    def _dot_budget(n: int) -> float:
        return 6500.0 + 8.0 * n

    def __init__(self, objective: Objective, values: np.ndarray):
        super().__init__(objective, values)
        n = values.size
        padded = np.concatenate([np.zeros(n - 1), values])
        # row t-1 holds (X_{t-n+1}, ..., X_t) ascending, zeros before X_1
        self._lags = np.lib.stride_tricks.sliding_window_view(padded, n)
        self._cache_alpha = None
        self._cache = None
        self._aranges: dict[int, np.ndarray] = {}

    def _filters(self, alpha: float, order: int):
        cached = self._cache if self._cache_alpha == alpha else None
        if cached is not None and len(cached) >= order + 1:
            return cached
        a = [1.0, alpha]
        out = list(cached) if cached is not None else [lfilter([1.0], a, self.values)]
        if order >= 1 and len(out) < 2:
            out.append(lfilter([1.0], a, np.concatenate(([0.0], -out[0][:-1]))))
        if order >= 2 and len(out) < 3:
            out.append(lfilter([1.0], a, np.concatenate(([0.0], -2.0 * out[1][:-1]))))
        self._cache_alpha = alpha
        self._cache = out
        return out

    def _arange(self, k_len: int) -> np.ndarray:
        k = self._aranges.get(k_len)
        if k is None:
            k = np.arange(k_len, dtype=float)
            self._aranges[k_len] = k
        return k

    def _window_filters(self, idx: np.ndarray, alpha: float, order: int):
        """(q, qa, qaa) on a contiguous window via the full lag product.

        The filter depth covers the longest row of the window, so this is
        the exact zero-padded filter, identical (up to summation order) to
        the recursive pass.  Coefficients come from one cumulative
        product: with g_k = (-a)^k, dg_k = -k g_{k-1}, d2g_k = k(k-1) g_{k-2}.
        """
        k_len = int(idx[-1]) + 1
        gam = np.empty(k_len)
        gam[0] = 1.0
        if k_len > 1:
            np.cumprod(np.full(k_len - 1, -alpha), out=gam[1:])
        coeff = np.zeros((k_len, order + 1))
        rev = coeff[::-1]
        rev[:, 0] = gam
        if order >= 1:
            k = self._arange(k_len)
            rev[1:, 1] = -k[1:] * gam[:-1]
            if order >= 2 and k_len > 2:
                rev[2:, 2] = k[2:] * (k[2:] - 1.0) * gam[:-2]
        block = self._lags[idx[0]:idx[-1] + 1, self.n - k_len:]
        prod = block @ coeff
        return [prod[:, j] for j in range(order + 1)]

    def _q_values(self, idx: np.ndarray, alpha: float, order: int):
        # the path depends on the window alone, never on alpha, so one
        # Newton solve always sees a single smooth objective
        contiguous = idx.size >= 2 and int(idx[-1]) - int(idx[0]) + 1 == idx.size
        if self._cache_alpha == alpha or not contiguous or \
                idx.size * (int(idx[-1]) + 1) > self._dot_budget(self.n):
            filt = self._filters(alpha, order)
            return [_rows(f, idx) for f in filt[:order + 1]]
        return self._window_filters(idx, alpha, order)

    def _check(self, theta):
        if abs(theta[0]) >= 1.0:
            raise DomainError(f"|alpha| must be below 1, got {theta[0]}")
        if theta[1] <= 0.0:
            raise DomainError(f"sigma must be positive, got {theta[1]}")

    def window(self, idx, w):
        return _Ma1Window(self, idx, w)

    def ell_terms(self, idx, theta):
        theta = np.asarray(theta, dtype=float)
        self._check(theta)
        q = self._q_values(idx, float(theta[0]), 0)[0]
        s2 = theta[1] * theta[1]
        return 0.5 * (_LOG_2PI + np.log(s2)) + q * q / (2.0 * s2)


class _Ma1Window:
    """The MA window re-filters per theta, so it pins indices and weights."""

    __slots__ = ("parent", "idx", "w", "wsum")

    def __init__(self, parent: _BoundMa1, idx: np.ndarray, w: np.ndarray):
        self.parent = parent
        self.idx = idx
        self.w = w
        self.wsum = float(np.sum(w))

    def profile(self, theta, lo, hi):
        """Exact conditional minimizer in sigma given alpha (clamped).

        The objective is steeply non-quadratic in sigma, which makes raw
        Newton steps overshoot; snapping sigma to the valley floor after
        each step never increases the objective and cuts the iteration
        count sharply.
        """
        if self.wsum <= 0.0:
            return theta
        alpha = float(theta[0])
        q = self.parent._q_values(self.idx, alpha, 0)[0]
        sqq = float((self.w * q) @ q)
        sigma = math.sqrt(max(sqq, 0.0) / self.wsum)
        sigma = min(max(sigma, lo[1]), hi[1])
        if sigma == theta[1]:
            return theta
        out = theta.copy()
        out[1] = sigma
        return out

    def evaluate(self, theta, order=0):
        parent = self.parent
        parent._check(theta)
        alpha, sigma = float(theta[0]), float(theta[1])
        s2 = sigma * sigma
        n = parent.n
        filt = parent._q_values(self.idx, alpha, order)
        q = filt[0]
        w = self.w
        wq = w * q
        sqq = float(wq @ q)
        val = (0.5 * (_LOG_2PI + math.log(s2)) * self.wsum + sqq / (2.0 * s2)) / n
        if order == 0:
            return val
        qa = filt[1]
        sqqa = float(wq @ qa)
        g = np.array([sqqa / s2, self.wsum / sigma - sqq / (s2 * sigma)]) / n
        if order == 1:
            return val, g
        qaa = filt[2]
        h11 = (float((w * qa) @ qa) + float(wq @ qaa)) / s2
        h12 = -2.0 * sqqa / (s2 * sigma)
        h22 = -self.wsum / s2 + 3.0 * sqq / (s2 * s2)
        H = np.array([[h11, h12], [h12, h22]]) / n
        return val, g, H


def objective_for(spec: ModelSpec) -> Objective:
    return Objective(spec)


# ---------------------------------------------------------------------------
# localized sums


def local_likelihood(obj: Objective, series, kernel: Kernel, u: float, h: float,
                     theta, leave_out: Optional[int] = None, order: int = 0,
                     bound: Optional[BoundObjective] = None):
    """Localized objective L_{n,h}(u, theta) = (1/n) sum_t K_h(t/n - u) l_t.

    Only kernel-support indices are visited.  ``leave_out`` drops the term
    of that (1-based) time index, which matches the quasi-leave-one-out sum
    exactly since removal is a zero weight.  ``order`` 1 or 2 additionally
    returns the gradient and Hessian in theta.
    """
    if bound is None:
        bound = obj.bind(series)
    n = bound.n
    if leave_out is not None and not (1 <= leave_out <= n):
        raise ValueError(f"leave_out index {leave_out} outside 1..{n}")
    if h <= 0.0:
        raise ValueError(f"bandwidth must be positive, got h={h}")
    theta = np.asarray(theta, dtype=float)
    lo, hi = support_range(n, u, h)
    if lo > hi:
        zero = np.zeros(obj.p)
        if order == 0:
            return 0.0
        return (0.0, zero) if order == 1 else (0.0, zero, np.zeros((obj.p, obj.p)))
    t = np.arange(lo, hi + 1)
    w = kernel.evaluate((t / n - u) / h) / h
    if leave_out is not None and lo <= leave_out <= hi:
        w = w.copy()
        w[leave_out - lo] = 0.0
    return bound.weighted(t - 1, w, theta, order=order)
