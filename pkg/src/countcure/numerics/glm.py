"""Least squares and IRLS fitting for log-link (quasi-)Poisson models.

All solves go through a Householder QR with column pivoting so that rank
deficiency surfaces as a deterministic error naming the offending design
column instead of a silent pseudo-inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceError, DomainError, RankDeficiencyError

RANK_TOL = 1e-10
ETA_CLIP = 30.0
FAMILIES = ("poisson_log", "quasipoisson_log", "gaussian_identity")


@dataclass
class GlmFit:
    """Result of an OLS or IRLS fit."""

    coefficients: np.ndarray
    covariance: np.ndarray
    deviance: float
    iterations: int
    converged: bool
    dispersion: float
    family: str
    boundary: bool = False
    fitted: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_obs: int = 0

    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def pivoted_qr(design: np.ndarray, rhs: np.ndarray, tol: float = RANK_TOL):
    """Least-squares solve via Householder QR with column pivoting.

    Returns (beta, r_matrix, pivot).  Raises RankDeficiencyError naming the
    original column index whose pivot falls below tol times the largest.
    """
    a = np.array(design, dtype=float)
    b = np.array(rhs, dtype=float)
    if a.ndim != 2:
        raise DomainError("design must be a matrix")
    n, p = a.shape
    if b.shape != (n,):
        raise DomainError("response length does not match design rows")
    if n < p:
        raise DomainError(f"need at least as many rows as columns ({n} < {p})")
    piv = np.arange(p)
    norms = np.sum(a * a, axis=0)
    largest = 0.0
    for k in range(p):
        j = k + int(np.argmax(norms[k:]))
        if j != k:
            a[:, [k, j]] = a[:, [j, k]]
            norms[[k, j]] = norms[[j, k]]
            piv[[k, j]] = piv[[j, k]]
        x = a[k:, k]
        normx = float(np.linalg.norm(x))
        if k == 0:
            largest = normx
        if normx <= tol * largest or normx == 0.0:
            raise RankDeficiencyError(column=int(piv[k]))
        alpha = -math.copysign(normx, x[0]) if x[0] != 0.0 else -normx
        v = x.copy()
        v[0] -= alpha
        vnorm2 = float(v @ v)
        if vnorm2 > 0.0:
            if k + 1 < p:
                w = (v @ a[k:, k + 1:]) * (2.0 / vnorm2)
                a[k:, k + 1:] -= np.outer(v, w)
            b[k:] -= v * (2.0 * float(v @ b[k:]) / vnorm2)
        a[k, k] = alpha
        a[k + 1:, k] = 0.0
        if k + 1 < p:
            norms[k + 1:] -= a[k, k + 1:] ** 2
            np.maximum(norms[k + 1:], 0.0, out=norms[k + 1:])
    r = np.triu(a[:p, :p])
    beta_pivots = np.empty(p)
    for i in range(p - 1, -1, -1):
        beta_pivots[i] = (b[i] - r[i, i + 1:] @ beta_pivots[i + 1:]) / r[i, i]
    beta = np.empty(p)
    beta[piv] = beta_pivots
    return beta, r, piv


def _unscaled_covariance(r: np.ndarray, piv: np.ndarray) -> np.ndarray:
    """(X'X)^-1 from the pivoted R factor."""
    p = r.shape[0]
    rinv = np.linalg.solve(r, np.eye(p))
    m = rinv @ rinv.T
    cov = np.empty((p, p))
    cov[np.ix_(piv, piv)] = m
    return cov


def ols_fit(design, response) -> GlmFit:
    """Ordinary least squares; residuals orthogonal to the column space."""
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    beta, r, piv = pivoted_qr(x, y)
    fitted = x @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    n, p = x.shape
    dof = n - p
    dispersion = rss / dof if dof > 0 else math.nan
    cov = _unscaled_covariance(r, piv) * (dispersion if dof > 0 else 0.0)
    return GlmFit(
        coefficients=beta, covariance=cov, deviance=rss, iterations=1,
        converged=True, dispersion=dispersion, family="gaussian_identity",
        fitted=fitted, n_obs=n,
    )


def _poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def irls_glm(design, response, family: str = "quasipoisson_log",
             max_iter: int = 50, tol: float = 1e-8, offset=None) -> GlmFit:
    """Fit a GLM by iteratively reweighted least squares.

    poisson_log / quasipoisson_log share point estimates; they differ only
    in the covariance scale (1 vs the Pearson dispersion).  gaussian_identity
    reduces to a single OLS solve and exists for cross-checks.  Non-
    convergence returns the last iterate with converged=False; exhausted
    step-halving raises ConvergenceError carrying the last iterate.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}")
    n, p = x.shape if x.ndim == 2 else (len(x), 1)
    if x.ndim != 2:
        raise DomainError("design must be a matrix")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)

    if family == "gaussian_identity":
        fit = ols_fit(x, y - off)
        fit.fitted = fit.fitted + off
        return fit

    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise DomainError("count responses must be finite and nonnegative")

    eta = np.clip(np.log(y + 0.1), -ETA_CLIP, ETA_CLIP)  # init on mu = y + 0.1
    mu = np.exp(eta)
    deviance = _poisson_deviance(y, mu)
    beta = np.zeros(p)
    r = piv = None
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        w = np.sqrt(mu)
        z = eta + (y - mu) / mu - off
        beta_new, r, piv = pivoted_qr(x * w[:, None], z * w)
        step = 1.0
        for _ in range(31):
            cand = beta + step * (beta_new - beta) if it > 1 else beta_new
            eta_c = np.clip(x @ cand + off, -ETA_CLIP, ETA_CLIP)
            mu_c = np.exp(eta_c)
            dev_c = _poisson_deviance(y, mu_c)
            if math.isfinite(dev_c) and (dev_c <= deviance + 1e-10 * (1.0 + abs(deviance)) or it == 1):
                break
            step /= 2.0
        else:
            last = _assemble(x, y, beta, r, piv, deviance, iterations, False, family, eta, mu, n, p)
            raise ConvergenceError("step-halving exhausted without reducing deviance", last_fit=last)
        beta = cand
        eta, mu = eta_c, mu_c
        rel = abs(dev_c - deviance) / (abs(dev_c) + 0.1)
        deviance = dev_c
        if rel < tol:
            converged = True
            break
    return _assemble(x, y, beta, r, piv, deviance, iterations, converged, family, eta, mu, n, p)


def _assemble(x, y, beta, r, piv, deviance, iterations, converged, family, eta, mu, n, p) -> GlmFit:
    dof = n - p
    pearson = float(np.sum((y - mu) ** 2 / mu))
    dispersion = pearson / dof if dof > 0 else math.nan
    scale = 1.0 if family == "poisson_log" else (dispersion if dof > 0 else 1.0)
    cov = _unscaled_covariance(r, piv) * scale if r is not None else np.full((p, p), math.nan)
    # at the clip, or with fitted means collapsing to 0, the MLE sits on the
    # parameter-space boundary (e.g. an all-zero response)
    boundary = bool(np.any(np.abs(eta) >= ETA_CLIP - 1e-9) or np.any(mu <= 1e-8))
    return GlmFit(
        coefficients=beta, covariance=cov, deviance=deviance, iterations=iterations,
        converged=converged, dispersion=dispersion, family=family,
        boundary=boundary, fitted=mu, n_obs=n,
    )
