"""Local M-estimation: theta_hat_h(u) = argmin over Theta of L_{n,h}(u, .).

The generic solver is a projected Newton iteration with Levenberg-style
Hessian regularization, Armijo backtracking and box projection, plus a
coordinate-wise golden-section fallback.  tvAR models additionally have a
closed form through kernel-weighted normal equations, and AR(1)/TAR(1)
fits over all evaluation points run through a single convolution sweep
that reproduces the closed form exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Kernel, WeightFn, support_range
from .likelihood import BoundObjective, DomainError, Objective
from .processes import Family, SimulatedSeries

__all__ = [
    "DegenerateWindowError",
    "FitDiagnostics",
    "LocalFit",
    "fit_tvar_closed_form",
    "fit_local",
    "fit_curve",
    "fit_leave_one_out",
    "localfit_to_csv",
]

GRAD_TOL = 1e-8
MAX_NEWTON_ITER = 100
ARMIJO_C = 1e-4
LEVENBERG_LAMBDA0 = 1e-10
LATTICE_PER_DIM = 8
LATTICE_CAP = 4096


class DegenerateWindowError(RuntimeError):
    """The localized window carries no usable information."""


@dataclass(frozen=True)
class FitDiagnostics:
    converged: bool
    iterations: int
    grad_norm: float
    fallback_used: bool = False
    message: str = ""


@dataclass(frozen=True)
class LocalFit:
    """Per-time-point estimates for one bandwidth."""

    h: float
    n: int
    t_indices: np.ndarray
    eval_points: np.ndarray
    estimates: np.ndarray
    converged: np.ndarray
    newton_iters: np.ndarray

    def __len__(self):
        return self.eval_points.size


def _values_of(series) -> np.ndarray:
    return series.values if isinstance(series, SimulatedSeries) else np.asarray(series, dtype=float)


def _window(kernel: Kernel, n: int, u: float, h: float):
    lo, hi = support_range(n, u, h)
    if lo > hi:
        return None
    t = np.arange(lo, hi + 1)
    w = kernel.evaluate((t / n - u) / h) / h
    return t - 1, w


def window_pattern(kernel: Kernel, n: int, h: float):
    """Half-width m and symmetric weights for windows centered on t/n points.

    Centered windows share one weight vector, so sweeps over many centers
    slice this pattern instead of re-evaluating the kernel.
    """
    m = int(math.floor(n * h / 2.0 + 1e-9))
    j = np.arange(-m, m + 1, dtype=float)
    return m, kernel.evaluate((j / n) / h) / h


def window_slice(n: int, m: int, s: int):
    """0-based index array and pattern slice for a window centered at t=s."""
    lo = max(1, s - m)
    hi = min(n, s + m)
    return np.arange(lo - 1, hi), slice(lo - s + m, hi - s + m + 1)


def fit_tvar_closed_form(series, kernel: Kernel, u: float, h: float, r: int) -> np.ndarray:
    """Closed-form tvAR(r) estimate (alpha_1..alpha_r, sigma) at u.

    alpha solves the kernel-weighted normal equations; sigma^2 is the
    weighted mean squared residual normalized by the kernel-weight mass,
    which is exactly the argmin of the localized Gaussian objective over
    the zero-padded sum.
    """
    x = _values_of(series)
    n = x.size
    win = _window(kernel, n, u, h)
    if win is None:
        raise DegenerateWindowError(f"no observations in the window at u={u}, h={h}")
    idx, w = win
    z = np.zeros((idx.size, r))
    for j in range(1, r + 1):
        m = idx >= j
        z[m, j - 1] = x[idx[m] - j]
    xw = x[idx]
    szz = (z.T * w) @ z
    szx = (w * xw) @ z
    mass = float(np.sum(w))
    if mass <= 0.0:
        raise DegenerateWindowError(f"zero kernel mass at u={u}, h={h}")
    if r:
        if np.linalg.cond(szz) >= 1e12:
            raise DegenerateWindowError(f"singular weighted design at u={u}, h={h}")
        alpha = np.linalg.solve(szz, szx)
    else:
        alpha = np.zeros(0)
    resid = xw - z @ alpha
    sigma2 = max(float(np.sum(w * resid * resid)) / mass, 0.0)
    return np.concatenate([alpha, [math.sqrt(sigma2)]])


# ---------------------------------------------------------------------------
# projected Newton


def _project(theta: np.ndarray, box: np.ndarray) -> np.ndarray:
    return np.clip(theta, box[:, 0], box[:, 1])


def _kkt_violation(g: np.ndarray, theta: np.ndarray, box: np.ndarray) -> float:
    """Infinity norm of the projected gradient (0 when KKT holds)."""
    worst = 0.0
    for i in range(theta.shape[0]):
        gi = float(g[i])
        at_lo = theta[i] <= box[i, 0]
        at_hi = theta[i] >= box[i, 1]
        if at_lo and at_hi:
            continue
        if at_lo:
            v = -gi if gi < 0.0 else 0.0
        elif at_hi:
            v = gi if gi > 0.0 else 0.0
        else:
            v = abs(gi)
        if v > worst:
            worst = v
    return worst


def _regularized_direction(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Newton direction with Levenberg-style lambda*I added until the
    (small, p <= 3) Hessian is positive definite."""
    p = hess.shape[0]
    lam = LEVENBERG_LAMBDA0
    if p == 1:
        h = float(hess[0, 0])
        while h + lam <= 0.0:
            lam *= 2.0
        return np.array([-float(grad[0]) / (h + lam)])
    if p == 2:
        a, b, d = float(hess[0, 0]), float(hess[0, 1]), float(hess[1, 1])
        g0, g1 = float(grad[0]), float(grad[1])
        for _ in range(160):
            aa, dd = a + lam, d + lam
            det = aa * dd - b * b
            if aa > 0.0 and det > 0.0:
                return np.array([-(dd * g0 - b * g1) / det, -(aa * g1 - b * g0) / det])
            lam *= 2.0
        raise DegenerateWindowError("Hessian regularization failed")
    eye = np.eye(p)
    for _ in range(160):
        try:
            c = np.linalg.cholesky(hess + lam * eye)
        except np.linalg.LinAlgError:
            lam *= 2.0
            continue
        y = np.linalg.solve(c, -grad)
        return np.linalg.solve(c.T, y)
    raise DegenerateWindowError("Hessian regularization failed")


def _golden_refine(fun, theta: np.ndarray, value: float, box: np.ndarray,
                   sweeps: int = 2, tol: float = 1e-10):
    """Coordinate-wise golden-section refinement inside the box."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    th = theta.copy()
    val = value
    for _ in range(sweeps):
        for i in range(th.size):
            lo, hi = box[i]
            if hi - lo <= tol:
                continue

            def f1(s):
                cand = th.copy()
                cand[i] = s
                try:
                    return fun(cand)
                except DomainError:
                    return np.inf

            a, b = lo, hi
            c = b - inv_phi * (b - a)
            d = a + inv_phi * (b - a)
            fc, fd = f1(c), f1(d)
            while b - a > tol:
                if fc <= fd:
                    b, d, fd = d, c, fc
                    c = b - inv_phi * (b - a)
                    fc = f1(c)
                else:
                    a, c, fc = c, d, fd
                    d = a + inv_phi * (b - a)
                    fd = f1(d)
            s = c if fc <= fd else d
            fs = fc if fc <= fd else fd
            if fs < val:
                th[i] = s
                val = fs
    return th, val


def fit_local(obj: Objective, series, kernel: Kernel, u: float, h: float,
              theta_init, box=None, leave_out: Optional[int] = None,
              bound: Optional[BoundObjective] = None,
              max_iter: int = MAX_NEWTON_ITER, tol: float = GRAD_TOL):
    """Projected-Newton minimization of the localized objective at u.

    Returns (theta_hat, FitDiagnostics).  Non-convergence is reported in
    the diagnostics, never silently accepted; the returned point is always
    at least as good as the (projected) initial point.
    """
    if bound is None:
        bound = obj.bind(series)
    box = obj.box if box is None else np.asarray(box, dtype=float)
    n = bound.n
    win = _window(kernel, n, u, h)
    if win is None:
        raise DegenerateWindowError(f"no observations in the window at u={u}, h={h}")
    idx, w = win
    if leave_out is not None and idx[0] <= leave_out - 1 <= idx[-1]:
        w = w.copy()
        w[leave_out - 1 - idx[0]] = 0.0
    return _fit_window(bound, idx, w, theta_init, box, max_iter=max_iter, tol=tol,
                       where=f"u={u}, h={h}")


def _fit_window(bound: BoundObjective, idx: np.ndarray, w: np.ndarray, theta_init,
                box: np.ndarray, max_iter: int = MAX_NEWTON_ITER, tol: float = GRAD_TOL,
                where: str = ""):
    """The Newton iteration on one prepared window (indices and weights)."""
    if idx.size == 0 or float(np.sum(w)) <= 0.0:
        raise DegenerateWindowError(f"zero kernel mass ({where})")
    wnd = bound.window(idx, w)
    lo, hi = box[:, 0], box[:, 1]
    snap = 1e-9 * np.maximum(hi - lo, 1.0)
    p = lo.size
    profile = getattr(wnd, "profile", None)
    theta = np.clip(np.asarray(theta_init, dtype=float), lo, hi)
    if profile is not None:
        theta = profile(theta, lo, hi)
    try:
        value = wnd.evaluate(theta, 0)
    except DomainError as exc:
        raise DegenerateWindowError(f"initial point infeasible: {exc}") from exc
    init_value = value
    fallback_used = False
    grad_norm = np.inf
    iters = 0
    converged = False
    for iters in range(1, max_iter + 1):
        # snap stragglers onto a face so the active set is identified exactly
        for i in range(p):
            if theta[i] - lo[i] <= snap[i]:
                theta[i] = lo[i]
            elif hi[i] - theta[i] <= snap[i]:
                theta[i] = hi[i]
        value, grad, hess = wnd.evaluate(theta, 2)
        grad_norm = _kkt_violation(grad, theta, box)
        if grad_norm <= tol:
            converged = True
            break
        # coordinates pressed against a face stay fixed this iteration
        fixed = ((theta <= lo) & (grad >= 0.0)) | ((theta >= hi) & (grad <= 0.0))
        if fixed.any():
            free = ~fixed
            direction = np.zeros(p)
            direction[free] = _regularized_direction(hess[np.ix_(free, free)], grad[free])
        else:
            direction = _regularized_direction(hess, grad)
        step = 1.0
        accepted = False
        while step >= 1e-14:
            cand = np.clip(theta + step * direction, lo, hi)
            delta = cand - theta
            if not delta.any():
                break
            try:
                cval = wnd.evaluate(cand, 0)
            except DomainError:
                step *= 0.5
                continue
            if cval <= value + ARMIJO_C * float(grad @ delta):
                theta, value = cand, cval
                if profile is not None:
                    theta = profile(theta, lo, hi)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # near the optimum the predicted decrease drops below the
            # floating-point noise of the objective, but full Newton steps
            # still contract the gradient quadratically; keep taking them
            # while the KKT norm strictly shrinks, capped at the running
            # best value plus the documented 1e-12 slack
            pol_theta, pol_grad, pol_hess, pol_norm = theta, grad, hess, grad_norm
            pol_value = value
            for _ in range(6):
                fixed = ((pol_theta <= lo) & (pol_grad >= 0.0)) \
                    | ((pol_theta >= hi) & (pol_grad <= 0.0))
                if fixed.any():
                    d = np.zeros(p)
                    frees = ~fixed
                    d[frees] = _regularized_direction(pol_hess[np.ix_(frees, frees)],
                                                      pol_grad[frees])
                else:
                    d = _regularized_direction(pol_hess, pol_grad)
                cand = np.clip(pol_theta + d, lo, hi)
                if not (cand != pol_theta).any():
                    break
                try:
                    cval, cgrad, chess = wnd.evaluate(cand, 2)
                except DomainError:
                    break
                cnorm = _kkt_violation(cgrad, cand, box)
                if cval > value + 1e-12 or cnorm >= pol_norm:
                    break
                pol_theta, pol_value, pol_grad, pol_hess, pol_norm = cand, cval, cgrad, chess, cnorm
                if cnorm <= tol:
                    break
            if pol_norm < grad_norm:
                theta, value, grad_norm = pol_theta, pol_value, pol_norm
                if pol_norm <= tol:
                    converged = True
                    break
            fallback_used = True
            theta2, value2 = _golden_refine(lambda th: wnd.evaluate(th, 0), theta, value, box)
            if value2 < value - 1e-14:
                theta, value = theta2, value2
                continue
            value, grad, _ = wnd.evaluate(theta, 2)
            grad_norm = _kkt_violation(grad, theta, box)
            converged = grad_norm <= tol
            break
    if not converged and grad_norm > tol:
        value, grad, _ = wnd.evaluate(theta, 2)
        grad_norm = _kkt_violation(grad, theta, box)
        converged = grad_norm <= tol
    if value > init_value + 1e-12:
        raise AssertionError("Newton increased the objective; this is a bug")
    diag = FitDiagnostics(converged=converged, iterations=iters, grad_norm=grad_norm,
                          fallback_used=fallback_used,
                          message="" if converged else "gradient tolerance not reached")
    return theta, diag


def _lattice_candidates(box: np.ndarray) -> np.ndarray:
    p = box.shape[0]
    per_dim = LATTICE_PER_DIM
    while per_dim ** p > LATTICE_CAP and per_dim > 2:
        per_dim -= 1
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in box]
    return np.array(list(itertools.product(*axes)))


def lattice_search(obj: Objective, bound: BoundObjective, kernel: Kernel,
                   u: float, h: float, box: np.ndarray) -> np.ndarray:
    """Deterministic coarse search over a box lattice.

    Ties break toward the lexicographically smallest candidate; the
    lattice enumeration is lexicographic, so strict improvement suffices.
    """
    win = _window(kernel, bound.n, u, h)
    if win is None:
        raise DegenerateWindowError(f"no observations in the window at u={u}, h={h}")
    idx, w = win
    wnd = bound.window(idx, w)
    best_val = np.inf
    best = None
    for cand in _lattice_candidates(box):
        try:
            val = wnd.evaluate(cand, 0)
        except DomainError:
            continue
        if val < best_val:
            best_val, best = val, cand
    if best is None:
        raise DegenerateWindowError("no feasible lattice candidate")
    return best


# ---------------------------------------------------------------------------
# all-points sweeps


class MeanModelSweep:
    """Closed-form fits at every time point for AR(1)/TAR(1) at one h.

    The kernel-weighted moment sums at all points u = t/n are discrete
    correlations of per-time moment columns with the sampled kernel, so a
    handful of convolutions replaces the per-point loops.  Because the
    TAR regressors satisfy y+ * y- = 0, the weighted design is diagonal in
    both supported families and the box-constrained argmin is the
    coordinate-wise clamp of the unconstrained solution.
    """

    def __init__(self, bound, kernel: Kernel, h: float):
        z = bound.z
        if z.shape[1] not in (1, 2):
            raise ValueError("sweep supports 1 or 2 regressors")
        if z.shape[1] == 2 and float(np.max(np.abs(z[:, 0] * z[:, 1]))) > 0.0:
            raise ValueError("sweep requires orthogonal (threshold) regressors")
        self.bound = bound
        self.h = h
        x = bound.values
        n = x.size
        self.n = n
        m = int(math.floor(n * h / 2.0 + 1e-9))
        j = np.arange(-m, m + 1, dtype=float)
        kvec = kernel.evaluate((j / n) / h) / h
        self.w0 = float(kernel.evaluate(np.zeros(1))[0]) / h

        def corr(col):
            return np.convolve(col, kvec, mode="same")

        self.q = z.shape[1]
        self.s_zz = np.column_stack([corr(z[:, i] * z[:, i]) for i in range(self.q)])
        self.s_zx = np.column_stack([corr(z[:, i] * x) for i in range(self.q)])
        self.s_xx = corr(x * x)
        self.mass = corr(np.ones(n))
        self.z = z
        self.x = x

    def _solve(self, s_zz, s_zx, s_xx, mass, box):
        """Exact box argmin from moment arrays (rows = time points)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(s_zz > 0.0, s_zx / np.where(s_zz > 0.0, s_zz, 1.0), 0.0)
        for i in range(self.q):
            alpha[:, i] = np.clip(alpha[:, i], box[i, 0], box[i, 1])
        rss = s_xx - 2.0 * np.sum(alpha * s_zx, axis=1) + np.sum(alpha * alpha * s_zz, axis=1)
        rss = np.maximum(rss, 0.0)
        ok = mass > 0.0
        sigma = np.sqrt(np.where(ok, rss / np.where(ok, mass, 1.0), np.nan))
        sigma = np.clip(sigma, box[self.q, 0], box[self.q, 1])
        return np.column_stack([alpha, sigma]), ok

    def fit_at(self, t_idx: np.ndarray, box: np.ndarray):
        """Estimates theta_hat_h(t/n) for the given 1-based indices."""
        i = t_idx - 1
        est, ok = self._solve(self.s_zz[i], self.s_zx[i], self.s_xx[i], self.mass[i], box)
        return est, ok

    def loo_fit_at(self, t_idx: np.ndarray, box: np.ndarray):
        """Leave-one-out estimates theta_hat_{h,-s}(s/n) by moment downdate."""
        i = t_idx - 1
        zi = self.z[i]
        xi = self.x[i]
        s_zz = self.s_zz[i] - self.w0 * zi * zi
        s_zx = self.s_zx[i] - self.w0 * zi * xi[:, None]
        s_xx = self.s_xx[i] - self.w0 * xi * xi
        mass = self.mass[i] - self.w0
        est, ok = self._solve(np.maximum(s_zz, 0.0), s_zx, np.maximum(s_xx, 0.0), mass, box)
        return est, ok

    def ell_at(self, t_idx: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Per-point objective terms l_s(theta_s) for rows of theta."""
        i = t_idx - 1
        e = self.x[i] - np.sum(self.z[i] * theta[:, :self.q], axis=1)
        s2 = theta[:, self.q] ** 2
        return 0.5 * np.log(2.0 * np.pi * s2) + e * e / (2.0 * s2)


def _sweep_eligible(obj: Objective) -> bool:
    if obj.family is Family.TVTAR1:
        return True
    return obj.family is Family.TVAR and obj.spec.order == 1


def fit_curve(obj: Objective, series, kernel: Kernel, h: float, weight: WeightFn,
              bound: Optional[BoundObjective] = None, box=None) -> LocalFit:
    """Fit theta_hat_h at every u = t/n inside the weight support.

    The generic path warm-starts each point from the previous solution and
    initializes the first point from a coarse lattice search; AR(1) and
    TAR(1) use the exact convolution sweep instead.
    """
    if bound is None:
        bound = obj.bind(series)
    box = obj.box if box is None else np.asarray(box, dtype=float)
    n = bound.n
    ts = weight.support_indices(n)
    if ts.size == 0:
        empty = np.zeros((0,))
        return LocalFit(h=h, n=n, t_indices=np.zeros(0, dtype=int), eval_points=empty,
                        estimates=np.zeros((0, obj.p)), converged=np.zeros(0, dtype=bool),
                        newton_iters=np.zeros(0, dtype=int))
    us = ts / n
    if _sweep_eligible(obj):
        sweep = MeanModelSweep(bound, kernel, h)
        est, ok = sweep.fit_at(ts, box)
        return LocalFit(h=h, n=n, t_indices=ts, eval_points=us, estimates=est,
                        converged=ok, newton_iters=np.zeros(ts.size, dtype=int))
    estimates = np.empty((ts.size, obj.p))
    converged = np.zeros(ts.size, dtype=bool)
    iters = np.zeros(ts.size, dtype=int)
    m, wvec = window_pattern(kernel, h=h, n=n)
    theta_prev = None
    for k, (t, u) in enumerate(zip(ts, us)):
        init = theta_prev if theta_prev is not None else lattice_search(obj, bound, kernel, u, h, box)
        idx, sl = window_slice(n, m, int(t))
        try:
            theta, diag = _fit_window(bound, idx, wvec[sl], init, box, where=f"u={u}, h={h}")
        except DegenerateWindowError:
            estimates[k] = _project(np.asarray(init, dtype=float), box)
            converged[k] = False
            iters[k] = 0
            continue
        estimates[k] = theta
        converged[k] = diag.converged
        iters[k] = diag.iterations
        theta_prev = theta
    return LocalFit(h=h, n=n, t_indices=ts, eval_points=us, estimates=estimates,
                    converged=converged, newton_iters=iters)


def fit_leave_one_out(obj: Objective, series, kernel: Kernel, h: float, s: int,
                      theta_init=None, bound: Optional[BoundObjective] = None, box=None):
    """theta_hat_{h,-s}(s/n): the same solver on the quasi-leave-one-out sum.

    Warm-started at the full estimate theta_hat_h(s/n) unless an initial
    point is supplied.
    """
    if bound is None:
        bound = obj.bind(series)
    box = obj.box if box is None else np.asarray(box, dtype=float)
    n = bound.n
    if not 1 <= s <= n:
        raise ValueError(f"s={s} outside 1..{n}")
    u = s / n
    if theta_init is None:
        init = lattice_search(obj, bound, kernel, u, h, box)
        theta_init, _ = fit_local(obj, series, kernel, u, h, init, box=box, bound=bound)
    return fit_local(obj, series, kernel, u, h, theta_init, box=box, bound=bound, leave_out=s)


def localfit_to_csv(fit: LocalFit, path) -> None:
    p = fit.estimates.shape[1] if fit.estimates.size else 0
    cols = ",".join(f"theta{i + 1}" for i in range(p))
    with open(path, "w") as f:
        f.write(f"u,{cols},converged,iters\n" if p else "u,converged,iters\n")
        for k in range(len(fit)):
            vals = ",".join(repr(float(v)) for v in fit.estimates[k])
            f.write(f"{float(fit.eval_points[k])!r},{vals},{int(fit.converged[k])},{int(fit.newton_iters[k])}\n")
