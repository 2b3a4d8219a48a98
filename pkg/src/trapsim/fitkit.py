"""Small fitting toolkit: Bessel/Laguerre evaluations, weighted linear fits,
and a Levenberg-Marquardt least-squares driver with box bounds.

The LM driver is deliberately self-contained (multiplicative damping with
Marquardt diagonal scaling, forward-difference Jacobian) so its behavior is
reproducible and fully specified by this file.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .core import FitError, ValidationError


def bessel_j(order: int, x):
    """Bessel function of the first kind J_order(x). Vectorized in x."""
    return special.jv(order, x)


def laguerre_sweep(alpha: float, x: float, n_max: int) -> np.ndarray:
    """Generalized Laguerre values L_n^(alpha)(x) for n = 0..n_max.

    Three-term recurrence, O(n_max) time, returned as a float array. The
    recurrence is forward-stable for x >= 0 which is the only regime used
    here (x = eta^2).
    """
    if n_max < 0:
        raise ValidationError("n_max must be >= 0", n_max=n_max)
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max == 0:
        return out
    out[1] = 1.0 + alpha - x
    for n in range(1, n_max):
        out[n + 1] = ((2.0 * n + 1.0 + alpha - x) * out[n]
                      - (n + alpha) * out[n - 1]) / (n + 1.0)
    return out


def seeded_rng(seed, *subkeys) -> np.random.Generator:
    """Deterministic generator for (seed, site) pairs.

    Distinct subkey tuples give independent streams, so records drawn in a
    loop stay reproducible regardless of evaluation order. String subkeys
    are hashed with crc32, which is stable across processes.
    """
    key = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k)
                for k in subkeys)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.default_rng(ss)


@dataclass
class LineFit:
    slope: float
    intercept: float
    slope_sigma: float
    intercept_sigma: float
    covariance: np.ndarray
    chi2_red: float


def linear_fit(x, y, sigma=None) -> LineFit:
    """Weighted straight-line fit y = slope * x + intercept.

    sigma defaults to unit weights. Raises FitError when the abscissae are
    degenerate (fewer than two distinct x values).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-d arrays of equal length")
    if x.size < 2 or np.ptp(x) == 0.0:
        raise FitError("degenerate abscissae for a line fit", n_points=int(x.size))
    if sigma is None:
        w = np.ones_like(x)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ValidationError("sigma values must be positive")
        w = 1.0 / sigma
    # weighted design matrix, solved by lstsq for numerical robustness
    A = np.column_stack([x * w, w])
    coef, _, rank, _ = np.linalg.lstsq(A, y * w, rcond=None)
    if rank < 2:
        raise FitError("rank-deficient line fit")
    resid = (y - (coef[0] * x + coef[1])) * w
    chi2 = float(np.dot(resid, resid))
    dof = x.size - 2
    chi2_red = chi2 / dof if dof > 0 else float("nan")
    cov = np.linalg.inv(A.T @ A)
    if dof > 0:
        cov = cov * chi2_red
    sig = np.sqrt(np.diag(cov))
    return LineFit(float(coef[0]), float(coef[1]), float(sig[0]), float(sig[1]),
                   cov, chi2_red)


@dataclass
class FitResult:
    """Result of a nonlinear least-squares fit.

    params/sigmas are in the fit's own parameter order; covariance is the
    chi2_red-scaled Gauss-Newton estimate at the optimum.
    """

    params: np.ndarray
    sigmas: np.ndarray
    covariance: np.ndarray
    chi2: float
    chi2_red: float
    n_iter: int
    converged: bool
    n_points: int
    message: str = ""
    extras: dict = field(default_factory=dict)

    def summary(self, names=None) -> str:
        names = names or [f"p{i}" for i in range(self.params.size)]
        lines = [
            f"{n} = {v:.9g} +- {s:.3g}"
            for n, v, s in zip(names, self.params, self.sigmas)
        ]
        lines.append(f"chi2_red = {self.chi2_red:.4g}  ({self.n_points} points, "
                     f"{self.n_iter} iterations, converged={self.converged})")
        return "\n".join(lines)


def lm_fit(model, xdata, ydata, p0, sigma=None, bounds=None,
           max_iter=200, ftol=1e-10, xtol=1e-10,
           absolute_sigma=False) -> FitResult:
    """Levenberg-Marquardt fit of model(params, xdata) -> ydata.

    Parameters
    ----------
    model : callable
        model(params, xdata) returning an array shaped like ydata. Must be
        deterministic.
    p0 : array_like
        Starting parameters.
    sigma : array_like, optional
        Per-point standard deviations; unit weights when omitted.
    bounds : (lo, hi), optional
        Box constraints, enforced by clipping trial steps.
    absolute_sigma : bool
        Treat sigma as known standard errors and skip the chi2_red
        covariance rescaling. Use when sigma comes from counting
        statistics; the default rescaling would shrink the reported
        uncertainties whenever smoothing pushes chi2_red below one.

    Notes
    -----
    Damping lambda starts at 1e-3, multiplied by 10 on rejection and divided
    by 10 on acceptance, applied to the diagonal of J^T J (Marquardt
    scaling). The Jacobian is forward finite differences with relative step
    1e-6. The covariance is (J^T J)^-1, scaled by chi2_red unless
    absolute_sigma is set.
    """
    p = np.asarray(p0, dtype=float).copy()
    y = np.asarray(ydata, dtype=float)
    if sigma is None:
        inv_sigma = np.ones_like(y)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ValidationError("sigma values must be positive")
        inv_sigma = 1.0 / sigma
    if bounds is None:
        lo = np.full(p.size, -np.inf)
        hi = np.full(p.size, np.inf)
    else:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
        p = np.clip(p, lo, hi)

    scale = np.maximum(np.abs(p), 1.0)  # frozen scale for FD steps

    def residuals(params):
        f = np.asarray(model(params, xdata), dtype=float)
        return (f - y) * inv_sigma

    def jacobian(params, r0):
        J = np.empty((y.size, params.size))
        for j in range(params.size):
            h = 1e-6 * max(abs(params[j]), scale[j] * 1e-3, 1e-12)
            pj = params.copy()
            pj[j] = min(pj[j] + h, hi[j]) if np.isfinite(hi[j]) else pj[j] + h
            if pj[j] == params[j]:  # pinned at the upper bound: step down
                pj[j] = params[j] - h
            J[:, j] = (residuals(pj) - r0) / (pj[j] - params[j])
        return J

    r = residuals(p)
    if not np.all(np.isfinite(r)):
        raise FitError("model returned non-finite values at the start point")
    chi2 = float(np.dot(r, r))
    lam = 1e-3
    n_iter = 0
    converged = False
    message = "max_iter reached"
    J = None
    for n_iter in range(1, max_iter + 1):
        J = jacobian(p, r)
        if not np.all(np.isfinite(J)):
            raise FitError("non-finite Jacobian", iteration=n_iter)
        A = J.T @ J
        g = J.T @ r
        accepted = False
        for _ in range(60):
            damp = A + lam * np.diag(np.maximum(np.diag(A), 1e-300))
            try:
                dp = np.linalg.solve(damp, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try = np.clip(p + dp, lo, hi)
            r_try = residuals(p_try)
            chi2_try = float(np.dot(r_try, r_try)) if np.all(np.isfinite(r_try)) else np.inf
            if chi2_try < chi2:
                step = p_try - p
                p, r, chi2_prev, chi2 = p_try, r_try, chi2, chi2_try
                lam = max(lam / 10.0, 1e-14)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not accepted:
            converged = True
            message = "no downhill step found (stationary within damping range)"
            break
        if chi2_prev - chi2 <= ftol * max(chi2, 1e-300):
            converged = True
            message = "chi2 converged"
            break
        if np.all(np.abs(step) <= xtol * np.maximum(np.abs(p), scale * 1e-3)):
            converged = True
            message = "step converged"
            break

    J = jacobian(p, r) if J is None else J
    A = J.T @ J
    dof = y.size - p.size
    chi2_red = chi2 / dof if dof > 0 else float("nan")
    try:
        cov = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(A)
        message += "; singular normal matrix, pseudo-inverse covariance"
    if dof > 0 and not absolute_sigma:
        cov = cov * chi2_red
    sigmas = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(params=p, sigmas=sigmas, covariance=cov, chi2=chi2,
                     chi2_red=chi2_red, n_iter=n_iter, converged=converged,
                     n_points=int(y.size), message=message)
