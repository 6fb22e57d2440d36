"""Bandwidth selection: cross validation, distances, and the plug-in optimum.

CV(h) averages left-out objective terms at the quasi-leave-one-out
estimates and is minimized over a finite grid; the grid argmin satisfies
the 1/n-tolerance selection rule by construction, with ties broken toward
the smaller bandwidth.  The deterministic risk proxy

    dm(h) = mu_K V0 / (n h) + h^4 d_K^2 B0 / 4

is minimized at h0 = (V0 mu_K / (B0 d_K^2))^(1/5) n^(-1/5), the plug-in
bandwidth, with V0 the integrated trace of V^-1 I and B0 the integrated
squared score bias under curvature of the parameter curve.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .core import BandwidthGrid, Kernel, WeightFn, derive_rng
from .curves import ParamCurve
from .estimator import (
    DegenerateWindowError,
    LocalFit,
    MeanModelSweep,
    _fit_window,
    _sweep_eligible,
    fit_curve,
    window_pattern,
    window_slice,
)
from .likelihood import DomainError, Objective
from .processes import (
    BURN_IN,
    Family,
    INNOVATION_MOMENTS,
    Innovation,
    ModelSpec,
    draw_innovations,
)

__all__ = [
    "DegenerateBiasError",
    "InfoMatrices",
    "SelectionReport",
    "cv_functional",
    "select_bandwidth",
    "distance_dA",
    "info_matrices_closed_form",
    "info_matrices",
    "info_field",
    "plugin_h0",
    "plugin_components",
    "dM_star_star",
    "misspecified_target",
    "report_to_csv",
    "report_to_json",
]

SIMPSON_POINTS = 2001
ARCH_FD_STEP = 1e-3
MC_DEFAULT_N = 200_000
MC_DEFAULT_SEED = 20170825


class DegenerateBiasError(RuntimeError):
    """B0 vanishes: the deterministic risk has no finite minimizer."""


# ---------------------------------------------------------------------------
# information matrices


@dataclass(frozen=True)
class InfoMatrices:
    """Misspecified information V(theta) and score covariance I(theta)."""

    V: Callable[[np.ndarray], np.ndarray]
    I: Callable[[np.ndarray], np.ndarray]
    source: str

    def v_at(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(thetas)
        return np.stack([self.V(th) for th in thetas])


def _moments_for(innovation: Innovation) -> tuple[float, float]:
    try:
        return INNOVATION_MOMENTS[innovation]
    except KeyError:
        raise ValueError(
            f"information matrices need finite third and fourth moments; "
            f"{innovation.value} innovations have none") from None


def info_matrices_closed_form(spec: ModelSpec, theta) -> tuple[np.ndarray, np.ndarray]:
    """(V, I) at one theta for the families with closed forms.

    tvAR(1) and tvMA(1) share V = diag(1/(1-alpha^2), 2/sigma^2); their
    score covariances differ from V only through higher innovation
    moments, so I = V under Gaussian innovations.
    """
    theta = np.asarray(theta, dtype=float)
    fam = spec.family
    if fam is Family.TVAR and spec.order == 1:
        m3, m4 = _moments_for(spec.innovation)
        alpha, sigma = theta
        v = np.diag([1.0 / (1.0 - alpha * alpha), 2.0 / (sigma * sigma)])
        i = np.diag([1.0 / (1.0 - alpha * alpha), (m4 - 1.0) / (sigma * sigma)])
        return v, i
    if fam is Family.TVMA1:
        _, m4 = _moments_for(spec.innovation)
        alpha, sigma = theta
        v = np.diag([1.0 / (1.0 - alpha * alpha), 2.0 / (sigma * sigma)])
        # I = V + kappa4 * grad(gamma_0) grad(gamma_0)' / gamma_0^2
        i = v + (m4 - 3.0) * np.diag([0.0, 1.0 / (sigma * sigma)])
        return v, i
    raise ValueError(f"no closed-form information matrices for {fam.value}(order={spec.order})")


def _arch_v_stack(spec: ModelSpec, thetas: np.ndarray, n_mc: int, seed: int) -> np.ndarray:
    """Monte Carlo V(theta) = E[mu mu' / (2 v^2)] for ARCH(1) columns.

    All columns share one innovation stream (common random numbers), so
    finite differences across nearby columns are stable.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    m = thetas.shape[0]
    a0, a1 = thetas[:, 0].copy(), thetas[:, 1].copy()
    eps = draw_innovations(derive_rng(seed, 1), spec.innovation, BURN_IN + n_mc)
    eps2 = eps * eps
    s = a0 / np.maximum(1.0 - a1, 1e-12)
    acc = np.zeros((3, m))
    for i in range(BURN_IN + n_mc):
        v = a0 + a1 * s
        if i >= BURN_IN:
            iv2 = 1.0 / (v * v)
            acc[0] += iv2
            acc[1] += s * iv2
            acc[2] += s * s * iv2
        s = v * eps2[i]
    acc /= n_mc
    out = np.empty((m, 2, 2))
    out[:, 0, 0] = acc[0]
    out[:, 0, 1] = out[:, 1, 0] = acc[1]
    out[:, 1, 1] = acc[2]
    return out / 2.0


def _tar_w_stack(spec: ModelSpec, thetas: np.ndarray, n_mc: int, seed: int):
    """Monte Carlo W = E[mu mu'] and E[mu] for TAR(1) columns, mu = (y+, y-)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    m = thetas.shape[0]
    a1, a2, sig = thetas[:, 0], thetas[:, 1], thetas[:, 2]
    eps = draw_innovations(derive_rng(seed, 2), spec.innovation, BURN_IN + n_mc)
    x = np.zeros(m)
    acc_pp = np.zeros(m)
    acc_nn = np.zeros(m)
    acc_p = np.zeros(m)
    acc_n = np.zeros(m)
    for i in range(BURN_IN + n_mc):
        pos = np.maximum(x, 0.0)
        neg = np.maximum(-x, 0.0)
        if i >= BURN_IN:
            acc_pp += pos * pos
            acc_nn += neg * neg
            acc_p += pos
            acc_n += neg
        x = a1 * pos + a2 * neg + sig * eps[i]
    w = np.zeros((m, 2, 2))
    w[:, 0, 0] = acc_pp / n_mc
    w[:, 1, 1] = acc_nn / n_mc
    emu = np.column_stack([acc_p, acc_n]) / n_mc
    return w, emu


def info_matrices(spec: ModelSpec, n_mc: int = MC_DEFAULT_N,
                  seed: int = MC_DEFAULT_SEED) -> InfoMatrices:
    """Information matrices for a family, closed form where available.

    tvARCH(1) uses the proportionality I = (E eps^4 - 1)/2 V, so only V
    needs simulation; tvTAR(1) simulates W(theta) = E[mu mu'] and E[mu].
    """
    fam = spec.family
    if fam in (Family.TVAR, Family.TVMA1):
        if fam is Family.TVAR and spec.order != 1:
            raise ValueError("closed-form information matrices support tvAR(1) only")

        def v_fn(theta):
            return info_matrices_closed_form(spec, theta)[0]

        def i_fn(theta):
            return info_matrices_closed_form(spec, theta)[1]

        return InfoMatrices(V=v_fn, I=i_fn, source="closed_form")
    if fam is Family.TVARCH:
        if spec.order != 1:
            raise ValueError("Monte Carlo information matrices support tvARCH(1) only")
        _, m4 = _moments_for(spec.innovation)

        def v_fn(theta):
            return _arch_v_stack(spec, theta, n_mc, seed)[0]

        def i_fn(theta):
            return (m4 - 1.0) / 2.0 * v_fn(theta)

        return InfoMatrices(V=v_fn, I=i_fn, source=f"monte_carlo(n_mc={n_mc},seed={seed})")
    if fam is Family.TVTAR1:
        m3, m4 = _moments_for(spec.innovation)

        def v_fn(theta):
            w, _ = _tar_w_stack(spec, theta, n_mc, seed)
            sigma = theta[2]
            out = np.zeros((3, 3))
            out[:2, :2] = w[0]
            out[2, 2] = 2.0
            return out / (sigma * sigma)

        def i_fn(theta):
            w, emu = _tar_w_stack(spec, theta, n_mc, seed)
            sigma = theta[2]
            out = np.zeros((3, 3))
            out[:2, :2] = w[0]
            out[:2, 2] = out[2, :2] = m3 * emu[0]
            out[2, 2] = m4 - 1.0
            return out / (sigma * sigma)

        return InfoMatrices(V=v_fn, I=i_fn, source=f"monte_carlo(n_mc={n_mc},seed={seed})")
    raise ValueError(f"unsupported family {fam.value}")


def info_field(spec: ModelSpec, curve: ParamCurve, points_u: np.ndarray,
               n_mc: int = MC_DEFAULT_N, seed: int = MC_DEFAULT_SEED) -> np.ndarray:
    """V(theta(u)) stacked over evaluation points, batched for the Monte
    Carlo families so one simulation pass serves every point."""
    points_u = np.asarray(points_u, dtype=float)
    thetas = curve.eval(points_u)
    fam = spec.family
    if fam in (Family.TVAR, Family.TVMA1):
        alpha, sigma = thetas[:, 0], thetas[:, 1]
        out = np.zeros((points_u.size, 2, 2))
        out[:, 0, 0] = 1.0 / (1.0 - alpha * alpha)
        out[:, 1, 1] = 2.0 / (sigma * sigma)
        return out
    if fam is Family.TVARCH:
        return _arch_v_stack(spec, thetas, n_mc, seed)
    if fam is Family.TVTAR1:
        w, _ = _tar_w_stack(spec, thetas, n_mc, seed)
        out = np.zeros((points_u.size, 3, 3))
        out[:, :2, :2] = w
        out[:, 2, 2] = 2.0
        return out / (thetas[:, 2] ** 2)[:, None, None]
    raise ValueError(f"unsupported family {fam.value}")


# ---------------------------------------------------------------------------
# distances


def distance_dA(fit: LocalFit, truth: ParamCurve, v, weight: WeightFn) -> float:
    """Averaged squared error weighted by V(theta(t/n)) over the support:
    (1/n) sum_t |theta_hat(t/n) - theta(t/n)|^2_{V} w(t/n)."""
    if len(fit) == 0:
        return 0.0
    us = fit.eval_points
    mask = weight.eval(us) > 0.0
    if not np.any(mask):
        return 0.0
    diff = fit.estimates[mask] - truth.eval(us[mask])
    if isinstance(v, InfoMatrices):
        vmats = v.v_at(truth.eval(us[mask]))
    else:
        vmats = np.asarray(v, dtype=float)
        if vmats.shape[0] == len(fit):
            vmats = vmats[mask]
    quad = np.einsum("mi,mij,mj->m", diff, vmats, diff)
    return float(np.sum(quad)) / fit.n


# ---------------------------------------------------------------------------
# cross validation


@dataclass(frozen=True)
class SelectionReport:
    """CV values over the grid together with the selected bandwidths."""

    grid: BandwidthGrid
    cv_values: np.ndarray
    h_hat: float
    n: int
    failed_points: np.ndarray
    d_A_values: Optional[np.ndarray] = None
    h_star: Optional[float] = None
    h_0: Optional[float] = None
    v0: Optional[float] = None
    b0: Optional[float] = None

    def __post_init__(self):
        finite = np.isfinite(self.cv_values)
        if np.any(finite):
            if not self.cv_values[self.grid.points == self.h_hat][0] <= np.min(
                    self.cv_values[finite]) + 1.0 / self.n + 1e-12:
                raise AssertionError("selected bandwidth violates the 1/n tolerance rule")


def _cv_single_h(obj: Objective, bound, kernel: Kernel, weight: WeightFn,
                 h: float, box: np.ndarray):
    """(cv, n_failed, fit) at one bandwidth; failures poison the value."""
    n = bound.n
    ts = weight.support_indices(n)
    if ts.size == 0:
        warnings.warn(f"no weighted points at h={h}; CV over an empty set is 0")
        empty = LocalFit(h=h, n=n, t_indices=np.zeros(0, dtype=int),
                         eval_points=np.zeros(0), estimates=np.zeros((0, obj.p)),
                         converged=np.zeros(0, dtype=bool), newton_iters=np.zeros(0, dtype=int))
        return 0.0, 0, empty
    fit = fit_curve(obj, None, kernel, h, weight, bound=bound, box=box)
    if _sweep_eligible(obj):
        sweep = MeanModelSweep(bound, kernel, h)
        loo, ok = sweep.loo_fit_at(ts, box)
        n_failed = int(np.sum(~ok))
        if n_failed:
            return math.inf, n_failed, fit
        terms = sweep.ell_at(ts, loo)
        return float(np.sum(terms)) / n, 0, fit
    m, wvec = window_pattern(kernel, n, h)
    w_loo = wvec.copy()
    w_loo[m] = 0.0  # dropping the center term is the quasi-leave-one-out sum
    total = 0.0
    n_failed = 0
    for k, s in enumerate(ts):
        idx, sl = window_slice(n, m, int(s))
        try:
            theta, diag = _fit_window(bound, idx, w_loo[sl], fit.estimates[k], box,
                                      where=f"s={s}, h={h}")
            if not diag.converged:
                n_failed += 1
                continue
            total += float(bound.ell_terms(np.array([s - 1]), theta)[0])
        except (DegenerateWindowError, DomainError):
            n_failed += 1
    if n_failed:
        return math.inf, n_failed, fit
    return total / n, 0, fit


def cv_functional(obj: Objective, series, kernel: Kernel, weight: WeightFn, h: float) -> float:
    """CV(h): the weighted average of left-out objective terms evaluated
    at the quasi-leave-one-out estimates."""
    bound = obj.bind(series)
    cv, _, _ = _cv_single_h(obj, bound, kernel, weight, h, obj.box)
    return cv


def select_bandwidth(obj: Objective, series, kernel: Kernel, weight: WeightFn,
                     grid: BandwidthGrid, truth: Optional[ParamCurve] = None,
                     v_field=None, h_0: Optional[float] = None,
                     v0: Optional[float] = None, b0: Optional[float] = None) -> SelectionReport:
    """Evaluate CV over the grid and select h_hat (ties toward smaller h).

    With the true curve and its V field supplied, also records d_A per
    grid bandwidth and the grid oracle h_star.
    """
    bound = obj.bind(series)
    box = obj.box
    n = bound.n
    cv_values = np.empty(len(grid))
    failed = np.zeros(len(grid), dtype=int)
    d_a = np.full(len(grid), np.nan) if truth is not None else None
    for i, h in enumerate(grid.points):
        cv, nf, fit = _cv_single_h(obj, bound, kernel, weight, float(h), box)
        cv_values[i] = cv
        failed[i] = nf
        if truth is not None and v_field is not None:
            d_a[i] = distance_dA(fit, truth, v_field, weight)
    finite = np.isfinite(cv_values)
    if not np.any(finite):
        raise DegenerateWindowError("CV failed at every grid bandwidth")
    masked = np.where(finite, cv_values, np.inf)
    h_hat = float(grid.points[int(np.argmin(masked))])
    h_star = None
    if d_a is not None and np.any(np.isfinite(d_a)):
        h_star = float(grid.points[int(np.nanargmin(d_a))])
    return SelectionReport(grid=grid, cv_values=cv_values, h_hat=h_hat, n=n,
                           failed_points=failed, d_A_values=d_a, h_star=h_star,
                           h_0=h_0, v0=v0, b0=b0)


# ---------------------------------------------------------------------------
# deterministic risk and plug-in bandwidth


def dM_star_star(h: float, n: int, v0: float, b0: float, kernel: Kernel) -> float:
    """Deterministic bias-variance decomposition mu_K V0/(nh) + h^4 d_K^2 B0/4."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    return kernel.mu_k * v0 / (n * h) + 0.25 * h ** 4 * kernel.d_k ** 2 * b0


def _trace_v_inv_i(spec: ModelSpec, theta: np.ndarray) -> float:
    fam = spec.family
    if fam in (Family.TVAR, Family.TVMA1):
        v, i = info_matrices_closed_form(spec, theta)
        return float(np.trace(np.linalg.solve(v, i)))
    if fam is Family.TVARCH:
        # I is proportional to V (conditional variance model), so the
        # trace is dimension times the proportionality constant.
        _, m4 = _moments_for(spec.innovation)
        return spec.p * (m4 - 1.0) / 2.0
    raise ValueError(f"no plug-in variance integrand for {fam.value}")


def _bias_integrand_closed(fam: Family, th, d1, d2) -> np.ndarray:
    """Squared score-bias integrand for tvAR(1)/tvMA(1), vectorized in u."""
    alpha, sigma = th[:, 0], th[:, 1]
    da, ds = d1[:, 0], d1[:, 1]
    dda, dds = d2[:, 0], d2[:, 1]
    one_m = 1.0 - alpha * alpha
    if fam is Family.TVAR:
        first = dda + 4.0 * (alpha * da * da / one_m + da * ds / sigma)
    else:
        first = dda + 2.0 * (-alpha * da * da / one_m + 2.0 * da * ds / sigma)
    second = dds + sigma * (da * da / one_m + (ds / sigma) ** 2)
    return first * first / one_m + 2.0 * second * second / (sigma * sigma)


@dataclass(frozen=True)
class PluginComponents:
    h0: float
    v0: float
    b0: float


def plugin_components(spec: ModelSpec, truth: ParamCurve, kernel: Kernel,
                      weight: WeightFn, n: int, info: Optional[InfoMatrices] = None,
                      n_mc: int = 50_000, seed: int = MC_DEFAULT_SEED) -> PluginComponents:
    """V0, B0 and the plug-in bandwidth h0 = (V0 mu_K/(B0 d_K^2))^(1/5) n^(-1/5).

    V0 integrates tr(V^-1 I) over the weight support; B0 integrates the
    squared score bias, whose integrand is closed form for tvAR(1) and
    tvMA(1) and is |theta'' + 2 V^-1 P theta'|^2_V for tvARCH(1) with
    P(u) = dV(theta(u))/du estimated by central differences on common
    random numbers.  Both use composite Simpson on 2001 points.
    """
    fam = spec.family
    if fam is Family.TVTAR1:
        raise ValueError("tvTAR(1) does not meet the smoothness needed for the plug-in bandwidth")
    if fam is Family.TVAR and spec.order != 1:
        raise ValueError("plug-in bandwidth supports tvAR(1) only")
    if fam is Family.TVARCH and spec.order != 1:
        raise ValueError("plug-in bandwidth supports tvARCH(1) only")
    a, b = weight.support
    u = np.linspace(a, b, SIMPSON_POINTS)
    tr = np.array([_trace_v_inv_i(spec, th) for th in truth.eval(u)])
    v0 = float(simpson(tr, x=u))
    th, d1, d2 = truth.eval(u), truth.deriv1(u), truth.deriv2(u)
    if fam in (Family.TVAR, Family.TVMA1):
        integrand = _bias_integrand_closed(fam, th, d1, d2)
    else:
        delta = ARCH_FD_STEP
        up = np.clip(u + delta, 0.0, 1.0)
        um = np.clip(u - delta, 0.0, 1.0)
        stacked = np.vstack([th, truth.eval(up), truth.eval(um)])
        vs = _arch_v_stack(spec, stacked, n_mc, seed)
        m = u.size
        v_mid, v_up, v_dn = vs[:m], vs[m:2 * m], vs[2 * m:]
        p_mat = (v_up - v_dn) / (up - um)[:, None, None]
        rhs = np.einsum("mij,mj->mi", p_mat, d1)
        w_vec = np.linalg.solve(v_mid, rhs[:, :, None])[:, :, 0]
        bias_vec = d2 + 2.0 * w_vec
        integrand = np.einsum("mi,mij,mj->m", bias_vec, v_mid, bias_vec)
    b0 = float(simpson(integrand, x=u))
    if b0 <= 1e-12:
        raise DegenerateBiasError(
            "bias term B0 is degenerate (flat parameter curve); no finite optimal bandwidth")
    h0 = (v0 * kernel.mu_k / (b0 * kernel.d_k ** 2)) ** 0.2 * n ** -0.2
    return PluginComponents(h0=h0, v0=v0, b0=b0)


def plugin_h0(spec: ModelSpec, truth: ParamCurve, kernel: Kernel, weight: WeightFn,
              n: int, info: Optional[InfoMatrices] = None, **kwargs) -> float:
    """Asymptotically optimal bandwidth; see ``plugin_components``."""
    return plugin_components(spec, truth, kernel, weight, n, info=info, **kwargs).h0


# ---------------------------------------------------------------------------
# misspecification targets


def misspecified_target(source_family: Family, source_curve: ParamCurve) -> ParamCurve:
    """Pseudo-true tvAR(1) curve (alpha_ms, sigma_ms) when fitting an AR(1)
    objective to tvMA(1) or tvARCH(1) data."""
    if source_family is Family.TVMA1:
        def fn(u):
            th = source_curve.eval(u)
            alpha, sigma = th[:, 0], th[:, 1]
            a2 = alpha * alpha
            alpha_ms = alpha / (1.0 + a2)
            sigma_ms = np.sqrt((1.0 + a2 + a2 * a2) / (1.0 + a2)) * sigma
            return np.column_stack([alpha_ms, sigma_ms])

        return ParamCurve(dim=2, fn=fn)
    if source_family is Family.TVARCH:
        def fn(u):
            th = source_curve.eval(u)
            a0, a1 = th[:, 0], th[:, 1]
            return np.column_stack([np.zeros_like(a0), np.sqrt(a0 / (1.0 - a1))])

        return ParamCurve(dim=2, fn=fn)
    raise ValueError(f"misspecified target defined for tvMA(1) and tvARCH(1) sources, not {source_family.value}")


# ---------------------------------------------------------------------------
# serialization


def report_to_csv(report: SelectionReport, path) -> None:
    with open(path, "w") as f:
        f.write("h,cv,d_A\n")
        for i, h in enumerate(report.grid.points):
            da = "" if report.d_A_values is None or not np.isfinite(report.d_A_values[i]) \
                else repr(float(report.d_A_values[i]))
            cv = repr(float(report.cv_values[i])) if np.isfinite(report.cv_values[i]) else "inf"
            f.write(f"{float(h)!r},{cv},{da}\n")


def report_to_json(report: SelectionReport, path) -> None:
    payload = {
        "h_hat": report.h_hat,
        "h_star": report.h_star,
        "h_0": report.h_0,
        "V0": report.v0,
        "B0": report.b0,
        "n": report.n,
        "failed_points": [int(x) for x in report.failed_points],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
