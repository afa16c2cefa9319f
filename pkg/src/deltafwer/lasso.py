"""Coordinate-descent Lasso on a precomputed Gram matrix, plus noise estimation.

Objective: ``(1/2n) ||y - Z b||^2 + lam ||b||_1``. Every quantity the solver
needs is a function of ``G = Z'Z/n``, ``c = Z'y/n`` and ``yy = y'y/n``, so a
single Gram matrix serves the main fit and all nodewise regressions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np


class ConvergenceWarning(UserWarning):
    pass


class NoiseEstimationError(ValueError):
    """Residual degrees of freedom exhausted."""


@dataclass(frozen=True)
class LassoSolution:
    coef: np.ndarray
    lam: float
    n_iter: int
    dual_gap: float
    converged: bool = True

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.coef)


@numba.njit(cache=True)
def _gap(G, c, yy, lam, beta, grad, skip):
    # grad holds G beta - c; Z'r/n = -grad
    bc = 0.0
    bgrad = 0.0
    l1 = 0.0
    dual_norm = 0.0
    for k in range(beta.shape[0]):
        if k == skip:
            continue
        bc += beta[k] * c[k]
        bgrad += beta[k] * grad[k]
        l1 += abs(beta[k])
        a = abs(grad[k])
        if a > dual_norm:
            dual_norm = a
    # ||r||^2/n = yy - 2 c'b + b'Gb, with b'Gb = b'grad + b'c
    r2 = yy - 2.0 * bc + bgrad + bc
    if r2 < 0.0:
        r2 = 0.0
    yr = yy - bc
    const = 1.0
    if dual_norm > lam:
        const = lam / dual_norm
    gap = 0.5 * r2 * (1.0 + const * const) + lam * l1 - const * yr
    if gap < 0.0:
        gap = 0.0
    obj = 0.5 * r2 + lam * l1
    return gap, obj


@numba.njit(cache=True)
def _cd_loop(G, c, yy, lam, beta, grad, tol_abs, max_iter, skip, objs):
    """Cyclic coordinate descent in covariance mode.

    ``beta`` and ``grad`` (= G beta - c) are updated in place. Coordinate
    ``skip`` (if >= 0) is frozen at zero. ``objs`` receives the objective
    after every sweep (up to its length). Returns (n_iter, gap).
    """
    C = beta.shape[0]
    gap, obj = _gap(G, c, yy, lam, beta, grad, skip)
    if gap <= tol_abs:
        return 0, gap
    it = 0
    while it < max_iter:
        for k in range(C):
            if k == skip:
                continue
            gkk = G[k, k]
            if gkk <= 0.0:
                continue
            old = beta[k]
            z = old * gkk - grad[k]
            if z > lam:
                new = (z - lam) / gkk
            elif z < -lam:
                new = (z + lam) / gkk
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                beta[k] = new
                row = G[k]
                for i in range(C):
                    grad[i] += row[i] * delta
        gap, obj = _gap(G, c, yy, lam, beta, grad, skip)
        if it < objs.shape[0]:
            objs[it] = obj
        it += 1
        if gap <= tol_abs:
            break
    return it, gap


@numba.njit(cache=True)
def _cd_gram(G, c, yy, lam, beta, tol_abs, max_iter, skip, objs):
    C = beta.shape[0]
    grad = np.empty(C)
    for i in range(C):
        acc = -c[i]
        for k in range(C):
            if beta[k] != 0.0:
                acc += G[i, k] * beta[k]
        grad[i] = acc
    return _cd_loop(G, c, yy, lam, beta, grad, tol_abs, max_iter, skip, objs)


@numba.njit(cache=True)
def nodewise_gram(G, lam, tol, max_iter):
    """All nodewise Lasso regressions of a standardised design, from its Gram matrix.

    Column ``j`` is regressed on the others with penalty ``lam``. Returns
    ``(Gamma, tau_sq, resid_sq, gaps)`` where row ``j`` of ``Gamma`` holds
    the coefficients (``Gamma[j, j] = 0``), ``tau_sq[j] = z_j'(z_j - Z gamma_j)/n``
    and ``resid_sq[j] = ||z_j - Z gamma_j||^2 / n``.
    """
    C = G.shape[0]
    Gamma = np.zeros((C, C))
    tau_sq = np.empty(C)
    resid_sq = np.empty(C)
    gaps = np.empty(C)
    objs = np.empty(0)
    for j in range(C):
        beta = Gamma[j]
        c = G[:, j].copy()
        grad = -c
        yy = G[j, j]
        _, gap = _cd_loop(G, c, yy, lam, beta, grad, tol * yy / 2.0, max_iter, j, objs)
        gaps[j] = gap
        # G beta = grad + c
        bc = 0.0
        bgb = 0.0
        for k in range(C):
            if beta[k] != 0.0:
                bc += beta[k] * c[k]
                bgb += beta[k] * (grad[k] + c[k])
        tau_sq[j] = yy - bc
        r2 = yy - 2.0 * bc + bgb
        resid_sq[j] = r2 if r2 > 0.0 else 0.0
    return Gamma, tau_sq, resid_sq, gaps


def gram_stats(Z, y=None):
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    G = np.ascontiguousarray(Z.T @ Z / n)
    if y is None:
        return G
    y = np.asarray(y, dtype=float)
    return G, Z.T @ y / n, float(y @ y / n)


def lasso_gram(G, c, yy, lam, tol=1e-6, max_iter=10_000, skip=-1, coef0=None,
               trace=None) -> LassoSolution:
    """Solve the Lasso from sufficient statistics.

    ``tol`` is relative: iterations stop once the duality gap drops below
    ``tol * yy / 2`` (i.e. ``tol * ||y||^2 / 2n``).
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    C = G.shape[0]
    beta = np.zeros(C) if coef0 is None else np.array(coef0, dtype=float)
    if skip >= 0:
        beta[skip] = 0.0
    objs = np.empty(max_iter if trace is not None else 0)
    tol_abs = tol * yy / 2.0
    n_iter, gap = _cd_gram(np.ascontiguousarray(G, dtype=float), np.asarray(c, dtype=float),
                           float(yy), float(lam), beta, float(tol_abs), int(max_iter),
                           int(skip), objs)
    if trace is not None:
        trace.extend(objs[:n_iter].tolist())
    converged = gap <= tol_abs
    if not converged:
        warnings.warn(
            f"lasso did not converge after {n_iter} sweeps (gap={gap:.3e})",
            ConvergenceWarning, stacklevel=2)
    return LassoSolution(coef=beta, lam=float(lam), n_iter=int(n_iter),
                         dual_gap=float(gap), converged=bool(converged))


def lasso_cd(Z, y, lam, tol=1e-6, max_iter=10_000, coef0=None, trace=None) -> LassoSolution:
    """Lasso fit of ``y`` on ``Z`` by cyclic coordinate descent.

    Parameters
    ----------
    Z : ndarray (n, C)
    y : ndarray (n,)
    lam : float
        Penalty on the per-sample objective ``(1/2n)||y - Zb||^2 + lam ||b||_1``.
    tol : float
        Relative duality-gap tolerance.
    trace : list, optional
        If given, the objective after each sweep is appended to it.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if Z.ndim != 2 or y.shape != (Z.shape[0],):
        raise ValueError(f"shape mismatch: Z {Z.shape}, y {y.shape}")
    if not np.isfinite(Z).all():
        raise ValueError("Z has non-finite entries")
    G, c, yy = gram_stats(Z, y)
    return lasso_gram(G, c, yy, lam, tol=tol, max_iter=max_iter, coef0=coef0, trace=trace)


def lambda_max(Z, y) -> float:
    Z = np.asarray(Z, dtype=float)
    return float(np.max(np.abs(Z.T @ y)) / Z.shape[0])


def lambda_universal(Z, y_scale: float = 1.0, kappa: float = 1.0) -> float:
    """``kappa * y_scale * sqrt(2 log C / n)``."""
    n, C = np.shape(Z)
    return float(kappa * y_scale * math.sqrt(2.0 * math.log(C) / n))


def kkt_violation(Z, y, sol: LassoSolution) -> float:
    """Largest KKT residual of a solution (0 at an exact optimum)."""
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    corr = Z.T @ (y - Z @ sol.coef) / n
    active = sol.coef != 0
    viol = np.zeros_like(corr)
    viol[active] = np.abs(corr[active] - sol.lam * np.sign(sol.coef[active]))
    viol[~active] = np.maximum(np.abs(corr[~active]) - sol.lam, 0.0)
    return float(viol.max(initial=0.0))


def lasso_objective(Z, y, coef, lam) -> float:
    Z = np.asarray(Z, dtype=float)
    r = y - Z @ coef
    return float(r @ r / (2 * Z.shape[0]) + lam * np.abs(coef).sum())


def noise_std_reid(Z, y, solution: LassoSolution) -> float:
    """Residual noise estimate with a degrees-of-freedom correction.

    ``sqrt(||y - Z b||^2 / (n - s_hat))`` where ``s_hat`` is the size of the
    Lasso active set.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    s_hat = int(np.count_nonzero(solution.coef))
    if s_hat >= n:
        raise NoiseEstimationError(f"saturated fit: {s_hat} active coefficients for n={n}")
    r = np.asarray(y, dtype=float) - Z @ solution.coef
    return float(np.sqrt(r @ r / (n - s_hat)))
