"""Desparsified Lasso inference on a (compressed) design, and an OLS backend.

The estimator follows the nodewise-regression construction: the debiasing
matrix is assembled row by row from Lasso regressions of each column on the
others. Columns of the design are centred and scaled to unit empirical
variance internally; returned estimates are mapped back to the original
column scale, so p-values are invariant to column rescaling.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import stats

from .lasso import (
    ConvergenceWarning,
    lambda_universal,
    lasso_gram,
    noise_std_reid,
    nodewise_gram,
)


class DegenerateDesignError(ValueError):
    """Collinear or constant columns make the requested inference undefined."""


@dataclass(frozen=True)
class InferenceBackendConfig:
    backend: Literal["desparsified-lasso", "ols"] = "desparsified-lasso"
    lambda_main: float | None = None
    lambda_nodewise: float | None = None
    adjustment_a: float = 0.0
    # multiplier on the universal rate for the main fit (two-stage rule)
    kappa_main: float = 0.25
    kappa_nodewise: float = 1.0
    tol: float = 1e-6
    max_iter: int = 10_000

    def __post_init__(self):
        if self.backend not in ("desparsified-lasso", "ols"):
            raise ValueError(f"unknown inference backend {self.backend!r}")
        if self.adjustment_a < 0:
            raise ValueError("adjustment_a must be nonnegative")


@dataclass(frozen=True)
class DesparsifiedFit:
    theta_hat: np.ndarray
    omega_diag: np.ndarray
    sigma_eta_hat: float
    n: int
    C: int
    lambda_main: float = float("nan")
    lambda_nodewise: float = float("nan")
    tau_sq: np.ndarray = field(default=None, repr=False)

    def stderr(self) -> np.ndarray:
        return self.sigma_eta_hat * np.sqrt(self.omega_diag / self.n)

    def confidence_intervals(self, level: float = 0.95) -> np.ndarray:
        q = stats.norm.ppf(0.5 + level / 2)
        half = q * self.stderr()
        return np.column_stack([self.theta_hat - half, self.theta_hat + half])


def _standardize(Z):
    Z = np.asarray(Z, dtype=float)
    mean = Z.mean(axis=0)
    scale = Z.std(axis=0)
    if np.any(scale <= 1e-12 * max(1.0, float(np.abs(Z).max(initial=0.0)))):
        bad = np.flatnonzero(scale <= 1e-12)
        raise DegenerateDesignError(f"constant column(s) {bad.tolist()} in design")
    return (Z - mean) / scale, scale


def _collinear_pair(G, cols=None):
    """First ``(j, k)`` whose columns are exactly collinear, from a Gram matrix."""
    d = np.sqrt(np.diag(G))
    d = np.where(d > 0, d, 1.0)
    R = np.abs(G / np.outer(d, d))
    np.fill_diagonal(R, 0.0)
    rows = np.arange(G.shape[0]) if cols is None else np.asarray(cols)
    hit = rows[R[rows].max(axis=1) >= 1 - 1e-10]
    if hit.size == 0:
        return None
    return int(hit[0]), int(np.argmax(R[hit[0]]))


def _nodewise_from_gram(G, c, lam, tol, max_iter):
    sol = lasso_gram(G, G[:, c], G[c, c], lam, tol=tol, max_iter=max_iter, skip=c)
    gamma = sol.coef
    # z_c'(z_c - Z_{-c} gamma)/n
    tau_sq = float(G[c, c] - G[c] @ gamma)
    # ||z_c - Z_{-c} gamma||^2 / n
    nz = np.flatnonzero(gamma)
    g = gamma[nz]
    resid_sq = float(G[c, c] - 2 * G[c, nz] @ g + g @ G[np.ix_(nz, nz)] @ g)
    return gamma, tau_sq, max(resid_sq, 0.0)


def nodewise_lasso(Z, c: int, lambda_c: float | None = None, tol=1e-6, max_iter=10_000):
    """Lasso regression of column ``c`` on the remaining columns.

    Returns ``(gamma_c, tau_sq_c)`` with ``gamma_c`` of length ``C - 1``
    (column ``c`` removed). Columns are used as given (no standardisation).
    """
    Z = np.asarray(Z, dtype=float)
    n, C = Z.shape
    if C < 2:
        raise ValueError("nodewise regression needs at least two columns")
    if lambda_c is None:
        lambda_c = lambda_universal(Z, 1.0, 1.0)
    G = Z.T @ Z / n
    pair = _collinear_pair(G - np.outer(Z.mean(0), Z.mean(0)), [c])
    if pair is not None:
        raise DegenerateDesignError(f"column {c} duplicates column {pair[1]}")
    gamma, tau_sq, _ = _nodewise_from_gram(G, c, lambda_c, tol, max_iter)
    if tau_sq <= 1e-12:
        raise DegenerateDesignError(f"column {c} is (nearly) collinear with the others")
    return np.delete(gamma, c), tau_sq


def desparsified_lasso(Z, y, config: InferenceBackendConfig | None = None) -> DesparsifiedFit:
    """Debiased Lasso estimates, precision diagonal and noise scale."""
    config = config or InferenceBackendConfig()
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, C = Z.shape
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if n < 8:
        raise ValueError("desparsified Lasso needs n >= 8")
    Zs, scale = _standardize(Z)
    yc = y - y.mean()
    yy = float(yc @ yc / n)

    if yy <= 1e-300:
        # noiseless constant target: nothing to explain
        return DesparsifiedFit(theta_hat=np.zeros(C), omega_diag=np.ones(C) / scale**2,
                               sigma_eta_hat=0.0, n=n, C=C, tau_sq=np.ones(C))

    G = np.ascontiguousarray(Zs.T @ Zs / n)
    cy = Zs.T @ yc / n
    pair = _collinear_pair(G)
    if pair is not None:
        raise DegenerateDesignError(f"columns {pair[0]} and {pair[1]} are collinear")

    if C == 1:
        lam_node = float("nan")
        tau_sq = np.array([1.0])
        omega = np.array([1.0])
        Theta = np.ones((1, 1))
    else:
        lam_node = config.lambda_nodewise
        if lam_node is None:
            lam_node = lambda_universal(Zs, 1.0, config.kappa_nodewise)
        Gamma, tau_sq, resid_sq, gaps = nodewise_gram(G, float(lam_node), config.tol,
                                                      config.max_iter)
        if np.any(gaps > config.tol * np.diag(G) / 2):
            warnings.warn("nodewise Lasso did not converge for some columns", ConvergenceWarning)
        if tau_sq.min() <= 1e-12:
            bad = int(np.argmin(tau_sq))
            raise DegenerateDesignError(f"cluster {bad} is (nearly) collinear with the others")
        Theta = (np.eye(C) - Gamma) / tau_sq[:, None]
        # diagonal of Theta Sigma_hat Theta'
        omega = resid_sq / tau_sq**2

    lam = config.lambda_main
    if lam is None:
        # preliminary fit at the universal rate scaled by sd(y), then rescale
        # by the estimated noise level
        lam0 = lambda_universal(Zs, np.sqrt(yy), 1.0) if C > 1 else 0.1 * np.sqrt(yy)
        pre = lasso_gram(G, cy, yy, lam0, tol=config.tol, max_iter=config.max_iter)
        sigma0 = noise_std_reid(Zs, yc, pre)
        if C > 1:
            lam = lambda_universal(Zs, sigma0, config.kappa_main)
        else:
            lam = lam0
        lam = max(lam, 1e-12 * np.sqrt(yy))
    main = lasso_gram(G, cy, yy, lam, tol=config.tol, max_iter=config.max_iter)
    sigma = noise_std_reid(Zs, yc, main)

    correction = Theta @ (cy - G @ main.coef)
    theta_std = main.coef + correction
    return DesparsifiedFit(
        theta_hat=theta_std / scale,
        omega_diag=omega / scale**2,
        sigma_eta_hat=sigma,
        n=n,
        C=C,
        lambda_main=float(lam),
        lambda_nodewise=float(lam_node),
        tau_sq=tau_sq,
    )


def _z_stat(fit: DesparsifiedFit) -> np.ndarray:
    if fit.sigma_eta_hat <= 0:
        # noiseless sentinel: any nonzero estimate is infinitely significant
        return np.where(fit.theta_hat == 0, 0.0, np.inf)
    return np.abs(fit.theta_hat) / (fit.sigma_eta_hat * np.sqrt(fit.omega_diag))


def cluster_pvalues(fit: DesparsifiedFit) -> np.ndarray:
    """Two-sided p-values ``2(1 - Phi(sqrt(n)|theta_c| / (sigma sqrt(omega_cc))))``."""
    return np.clip(2 * stats.norm.sf(np.sqrt(fit.n) * _z_stat(fit)), 0.0, 1.0)


def adjusted_cluster_pvalues(fit: DesparsifiedFit, a: float = 0.0) -> np.ndarray:
    """P-values with the standardised statistic shrunk by ``a`` before testing."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    t = np.maximum(_z_stat(fit) - a, 0.0)
    return np.clip(2 * stats.norm.sf(np.sqrt(fit.n) * t), 0.0, 1.0)


def ols_inference(Z, y) -> np.ndarray:
    """Two-sided t-test p-values for each coefficient of the least-squares fit."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, C = Z.shape
    if C >= n:
        raise DegenerateDesignError(f"OLS needs C < n (C={C}, n={n})")
    G = Z.T @ Z
    if np.linalg.matrix_rank(G) < C or np.linalg.cond(G) > 1e12:
        raise DegenerateDesignError("Z'Z is singular")
    G_inv = np.linalg.inv(G)
    coef = G_inv @ (Z.T @ y)
    r = y - Z @ coef
    df = n - C
    s2 = float(r @ r / df)
    se = np.sqrt(s2 * np.diag(G_inv))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, np.abs(coef) / se, np.where(coef == 0, 0.0, np.inf))
    return np.clip(2 * stats.t.sf(t, df), 0.0, 1.0)


def diagnostics(Z) -> dict:
    """Eigen-summary of the empirical Gram ``Z'Z/n`` for assumption auditing."""
    Z = np.asarray(Z, dtype=float)
    U = Z.T @ Z / Z.shape[0]
    eig = np.linalg.eigvalsh(U)
    phi_min = float(max(eig[0], 0.0))
    return {
        "phi_min_hat": phi_min,
        "max_upsilon_diag": float(np.diag(U).max()),
        "condition_number": float(eig[-1] / phi_min) if phi_min > 0 else float("inf"),
    }


def cluster_pvalues_from_backend(Z, y, config: InferenceBackendConfig) -> np.ndarray:
    if config.backend == "ols":
        return ols_inference(Z, y)
    fit = desparsified_lasso(Z, y, config)
    return adjusted_cluster_pvalues(fit, config.adjustment_a)
