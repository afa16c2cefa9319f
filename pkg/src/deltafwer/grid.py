"""Discrete spatial domains, weight maps and delta-indexed regions.

Covariates live on an integer lattice. Distances are l1 on lattice
coordinates. All index sets are returned as sorted ``np.ndarray`` of
0-based covariate indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class DomainError(ValueError):
    """Covariate index or geometry outside the domain."""


@dataclass(frozen=True, eq=False)
class SpatialDomain:
    """Row-major lattice of covariates with the l1 metric.

    ``coords[j]`` is the lattice coordinate of covariate ``j``; flattening
    follows C order, so for a 2D ``(H, W)`` grid covariate ``j`` sits at
    ``(j // W, j % W)``.
    """

    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if not shape or any(s < 1 for s in shape):
            raise DomainError(f"invalid grid shape {self.shape!r}")
        object.__setattr__(self, "shape", shape)

    @property
    def p(self) -> int:
        return int(np.prod(self.shape))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @cached_property
    def coords(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.ndim, -1).T
        idx.setflags(write=False)
        return idx

    @property
    def diameter(self) -> int:
        return int(sum(s - 1 for s in self.shape))

    def _check(self, *indices):
        for j in indices:
            if not (0 <= j < self.p):
                raise DomainError(f"covariate index {j} out of range [0, {self.p})")

    def distance(self, j: int, k: int) -> int:
        self._check(j, k)
        return int(np.abs(self.coords[j] - self.coords[k]).sum())

    def distances_from(self, j: int) -> np.ndarray:
        """l1 distance from covariate ``j`` to every covariate."""
        self._check(j)
        return np.abs(self.coords - self.coords[j]).sum(axis=1)

    def distance_matrix(self) -> np.ndarray:
        c = self.coords
        return np.abs(c[:, None, :] - c[None, :, :]).sum(axis=2)

    @cached_property
    def edges(self) -> np.ndarray:
        """Pairs ``(j, k)``, ``j < k``, of lattice neighbours at l1 distance 1."""
        ids = np.arange(self.p).reshape(self.shape)
        out = []
        for ax in range(self.ndim):
            lo = np.take(ids, np.arange(self.shape[ax] - 1), axis=ax).ravel()
            hi = np.take(ids, np.arange(1, self.shape[ax]), axis=ax).ravel()
            out.append(np.stack([lo, hi], axis=1))
        e = np.concatenate(out, axis=0) if out else np.empty((0, 2), dtype=int)
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
        e.setflags(write=False)
        return e

    @classmethod
    def line(cls, p: int) -> "SpatialDomain":
        return cls((p,))

    @classmethod
    def square(cls, H: int) -> "SpatialDomain":
        return cls((H, H))


def distance(domain: SpatialDomain, j: int, k: int) -> int:
    return domain.distance(j, k)


@dataclass(frozen=True, eq=False)
class WeightMap:
    """True coefficient vector attached to its spatial domain."""

    beta: np.ndarray
    domain: SpatialDomain = field(repr=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel().copy()
        if beta.size != self.domain.p:
            raise DomainError(
                f"weight vector has length {beta.size}, domain has p={self.domain.p}"
            )
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def p(self) -> int:
        return self.domain.p

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta != 0)

    def null_region(self) -> np.ndarray:
        return np.flatnonzero(self.beta == 0)

    def delta_null_region(self, delta: float) -> np.ndarray:
        return delta_null_region(self, delta)


def _within(domain: SpatialDomain, sources: np.ndarray, delta: float) -> np.ndarray:
    """Boolean mask of covariates at distance <= delta from any source."""
    mask = np.zeros(domain.p, dtype=bool)
    if sources.size == 0:
        return mask
    coords = domain.coords
    src = coords[sources]
    # chunk over sources to bound memory on large grids
    step = max(1, 2_000_000 // max(domain.p, 1))
    for lo in range(0, len(src), step):
        d = np.abs(coords[:, None, :] - src[None, lo:lo + step, :]).sum(axis=2)
        mask |= (d <= delta).any(axis=1)
    return mask


def delta_null_region(w: WeightMap, delta: float) -> np.ndarray:
    """Covariates whose whole closed delta-ball carries zero weight."""
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    near = _within(w.domain, w.support(), delta)
    return np.flatnonzero(~near)


def check_sparse_smooth(w: WeightMap, delta: float) -> bool:
    """True when no strictly opposite-signed weights lie within ``delta``."""
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    pos = np.flatnonzero(w.beta > 0)
    neg = np.flatnonzero(w.beta < 0)
    if pos.size == 0 or neg.size == 0:
        return True
    return not _within(w.domain, neg, delta)[pos].any()


def check_spatial_homogeneity(sigma, domain: SpatialDomain, delta: float) -> bool:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (domain.p, domain.p):
        raise DomainError(f"covariance must be {domain.p}x{domain.p}, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12):
        raise ValueError("covariance matrix is not symmetric")
    close = domain.distance_matrix() <= delta
    return bool((sigma[close] >= 0).all())
