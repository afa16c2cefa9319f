"""Synthetic 2D scenario: block weight maps, smoothed Gaussian designs, noisy targets."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import SpatialDomain, WeightMap

TRUNCATE = 4.0
# Overall signal scale, fitted by least squares to the reference SNR table
# (SNR of 6.5, 3.5, 2.2, 1.5 at sigma_eps = 1, 2, 3, 4 on the central design):
# K = sum(snr/sigma) / sum(1/sigma^2) = 6.574, against a raw-unit signal sd of
# 6.002 for unit weights at the calibrated smoothing width.
SIGNAL_SCALE = 1.095


class ConfigurationError(ValueError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    H: int = 40
    n: int = 100
    h: int = 4
    rho: float = 0.75
    sigma_eps: float = 2.0
    seed: int = 0
    amplitude: float = 1.0
    signed: bool = False

    def __post_init__(self):
        if not (0 < self.h < self.H / 2):
            raise ConfigurationError(f"need 0 < h < H/2, got h={self.h}, H={self.H}")
        if self.n < 2:
            raise ConfigurationError("n must be at least 2")
        if not (0 < self.rho < 1):
            raise ConfigurationError("rho must lie in (0, 1)")
        if self.sigma_eps < 0:
            raise ConfigurationError("sigma_eps must be nonnegative")

    @property
    def p(self) -> int:
        return self.H * self.H

    def domain(self) -> SpatialDomain:
        return SpatialDomain.square(self.H)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    weight_map: WeightMap
    eps: np.ndarray
    snr: float
    achieved_rho: float = float("nan")
    smoothing: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def domain(self) -> SpatialDomain:
        return self.weight_map.domain


def region_centers(H: int) -> list[tuple[int, int]]:
    q, t = H // 4, (3 * H) // 4
    return [(q, q), (q, t), (t, q), (t, t)]


def make_weight_map(H: int, h: int, amplitude: float = 1.0, signed: bool = False) -> WeightMap:
    """Four ``h x h`` squares of value ``amplitude`` at the quarter-grid centres.

    With ``signed=True`` the two off-diagonal squares carry ``-amplitude``.
    """
    if not (0 < h < H / 2):
        raise ConfigurationError(f"need 0 < h < H/2, got h={h}, H={H}")
    beta = np.zeros((H, H))
    for i, (r, c) in enumerate(region_centers(H)):
        r0, c0 = r - h // 2, c - h // 2
        sign = -1.0 if signed and i in (1, 2) else 1.0
        beta[r0:r0 + h, c0:c0 + h] = sign * amplitude
    return WeightMap(beta.ravel(), SpatialDomain.square(H))


def _smooth(noise: np.ndarray, width: float) -> np.ndarray:
    return ndimage.gaussian_filter(noise, sigma=(0, width, width), mode="reflect",
                                   truncate=TRUNCATE)


def _standardize_columns(X: np.ndarray) -> np.ndarray:
    X = X - X.mean(axis=0)
    return X / X.std(axis=0, ddof=1)


def adjacent_correlation(X: np.ndarray, H: int) -> float:
    """Mean empirical correlation over all 4-adjacent covariate pairs."""
    Xs = _standardize_columns(np.asarray(X, dtype=float)).reshape(-1, H, H)
    n = Xs.shape[0]
    horiz = (Xs[:, :, :-1] * Xs[:, :, 1:]).sum(axis=0) / (n - 1)
    vert = (Xs[:, :-1, :] * Xs[:, 1:, :]).sum(axis=0) / (n - 1)
    return float(np.concatenate([horiz.ravel(), vert.ravel()]).mean())


def kernel_norm(width: float) -> float:
    """l2 norm of the discrete 2D smoothing kernel: the std of a smoothed unit white-noise field."""
    r = int(TRUNCATE * width + 0.5)
    impulse = np.zeros(2 * r + 1)
    impulse[r] = 1.0
    k1 = ndimage.gaussian_filter1d(impulse, width, mode="constant", truncate=TRUNCATE)
    return float(np.sum(k1**2))  # separable: ||k2||_2 = ||k1||_2^2


def population_covariance(H: int, width: float) -> np.ndarray:
    """Correlation matrix of the smoothed field (before sample standardisation).

    Built exactly from the linear smoothing operator ``K``: ``K K'`` scaled
    to unit diagonal.
    """
    p = H * H
    basis = np.eye(p).reshape(p, H, H)
    K = _smooth(basis, width).reshape(p, p)  # row j = response to impulse j
    S = K.T @ K
    d = np.sqrt(np.diag(S))
    return S / np.outer(d, d)


def make_design(n: int, H: int, rho: float, seed, tol: float = 0.002,
                bracket=(0.1, 10.0), max_iter: int = 100):
    """Smoothed Gaussian design calibrated to an adjacent-column correlation.

    Returns ``(X, achieved_rho, width)`` with ``X`` of shape ``(n, H*H)`` and
    unit sample variance columns. The smoothing width is bisected on the
    same noise draw until the mean adjacent correlation is within ``tol``
    of ``rho``.
    """
    if not (0 < rho < 1):
        raise ConfigurationError("rho must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, H, H))

    def corr(width):
        return adjacent_correlation(_smooth(noise, width).reshape(n, -1), H)

    lo, hi = bracket
    f_lo, f_hi = corr(lo), corr(hi)
    if not (f_lo <= rho <= f_hi):
        raise CalibrationError(
            f"target rho={rho} not bracketed: corr({lo})={f_lo:.3f}, corr({hi})={f_hi:.3f}")
    width, achieved = lo, f_lo
    for _ in range(max_iter):
        width = 0.5 * (lo + hi)
        achieved = corr(width)
        if abs(achieved - rho) <= tol:
            break
        if achieved < rho:
            lo = width
        else:
            hi = width
    if abs(achieved - rho) > 0.01:
        raise CalibrationError(f"bisection stalled at rho={achieved:.4f} (target {rho})")
    X = _standardize_columns(_smooth(noise, width).reshape(n, -1))
    return X, achieved, width


def make_target(X, w: WeightMap, sigma_eps: float, seed) -> Dataset:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != w.p:
        raise ValueError(f"X has {X.shape[1]} columns but beta has length {w.p}")
    rng = np.random.default_rng(seed)
    eps = sigma_eps * rng.standard_normal(X.shape[0])
    signal = X @ w.beta
    y = signal + eps
    noise_norm = float(np.linalg.norm(eps))
    snr = float(np.linalg.norm(signal) / noise_norm) if noise_norm > 0 else float("inf")
    return Dataset(X=X, y=y, weight_map=w, eps=eps, snr=snr)


def scenario_seeds(seed) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    design, noise = np.random.SeedSequence(seed).spawn(2)
    return design, noise


def make_scenario(config: ScenarioConfig) -> Dataset:
    """Generate one dataset of the simulation scenario.

    Weights are expressed on the scale of the raw smoothed field: the
    standardised design gets coefficients ``amplitude * SIGNAL_SCALE *
    kernel_norm``, which reproduces ``y = X_raw beta + eps`` with ``beta``
    equal to ``amplitude * SIGNAL_SCALE`` on the active squares.
    """
    s_design, s_noise = scenario_seeds(config.seed)
    X, achieved, width = make_design(config.n, config.H, config.rho, s_design)
    scale = SIGNAL_SCALE * kernel_norm(width)
    w = make_weight_map(config.H, config.h, config.amplitude * scale, config.signed)
    ds = make_target(X, w, config.sigma_eps, s_noise)
    return Dataset(X=ds.X, y=ds.y, weight_map=w, eps=ds.eps, snr=ds.snr,
                   achieved_rho=achieved, smoothing=width,
                   meta={"config": asdict(config), "raw_scale": scale})


def export_dataset(ds: Dataset, directory) -> Path:
    """Write X (little-endian float64, row-major) + JSON sidecar, y and beta CSVs."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(ds.X, dtype="<f8").tofile(d / "X.bin")
    sidecar = {
        "n": int(ds.X.shape[0]),
        "p": int(ds.X.shape[1]),
        "dtype": "float64",
        "byteorder": "little",
        "order": "row-major",
        "grid_shape": list(ds.domain.shape),
        "snr": ds.snr if np.isfinite(ds.snr) else None,
        "achieved_rho": ds.achieved_rho,
        "smoothing": ds.smoothing,
        **ds.meta,
    }
    (d / "X.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    np.savetxt(d / "y.csv", ds.y, fmt="%.17g", header="y", comments="")
    np.savetxt(d / "beta.csv", ds.weight_map.beta, fmt="%.17g", header="beta", comments="")
    return d


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    try:
        side = json.loads((d / "X.json").read_text())
        n, p = int(side["n"]), int(side["p"])
        X = np.fromfile(d / "X.bin", dtype="<f8")
        if X.size != n * p:
            raise ValueError(f"X.bin holds {X.size} values, sidecar declares {n}x{p}")
        X = X.reshape(n, p)
        y = np.loadtxt(d / "y.csv", skiprows=1, ndmin=1)
        beta = np.loadtxt(d / "beta.csv", skiprows=1, ndmin=1)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read dataset in {d}: {exc}") from exc
    if y.shape != (n,) or beta.shape != (p,):
        raise ValueError(f"{d}: y has {y.size} rows (expected {n}), beta {beta.size} (expected {p})")
    shape = tuple(side.get("grid_shape") or (int(round(np.sqrt(p))),) * 2)
    w = WeightMap(beta, SpatialDomain(shape))
    eps = y - X @ beta
    nn = float(np.linalg.norm(eps))
    snr = float(np.linalg.norm(X @ beta) / nn) if nn > 0 else float("inf")
    return Dataset(X=X, y=y, weight_map=w, eps=eps, snr=snr,
                   achieved_rho=float(side.get("achieved_rho", float("nan"))),
                   smoothing=float(side.get("smoothing", float("nan"))),
                   meta={k: side[k] for k in ("config",) if k in side})
