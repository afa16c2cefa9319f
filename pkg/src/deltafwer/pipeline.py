"""Clustered inference (CluDL) and its ensembled variant (EnCluDL)."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .cluster import (
    Clustering,
    clustering_diameter,
    compress,
    subsample_rows,
    transformation_matrix,
    ward_partitions,
)
from .dlasso import InferenceBackendConfig, cluster_pvalues_from_backend
from .grid import SpatialDomain


@dataclass(frozen=True, eq=False)
class PValueFamily:
    values: np.ndarray
    level: Literal["cluster", "covariate"] = "covariate"
    kind: Literal["raw", "corrected", "aggregated"] = "raw"
    provenance: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel().copy()
        if v.size and (np.isnan(v).any() or v.min() < 0 or v.max() > 1):
            raise ValueError("p-values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class EnsembleConfig:
    C: int
    B: int = 25
    gamma: float = 0.5
    subsample_fraction: float = 0.7
    backend: InferenceBackendConfig = field(default_factory=InferenceBackendConfig)
    seed: int | tuple[int, ...] = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if not (0 < self.gamma < 1):
            raise ValueError("gamma must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    family: PValueFamily
    bootstrap_families: list[PValueFamily]
    clusterings: list[Clustering]
    diameters: list[int]

    @property
    def delta(self) -> int:
        return max(self.diameters)


def bonferroni(raw: PValueFamily) -> PValueFamily:
    if raw.level != "cluster":
        raise ValueError("Bonferroni correction applies to cluster-level families")
    C = len(raw)
    return PValueFamily(np.minimum(1.0, C * raw.values), "cluster", "corrected", raw.provenance)


def degroup(family: PValueFamily, c: Clustering) -> PValueFamily:
    """Give every covariate the p-value of its cluster."""
    if len(family) != c.C:
        raise ValueError(f"family has {len(family)} entries for {c.C} clusters")
    return PValueFamily(family.values[c.labels], "covariate", family.kind, family.provenance)


def cludl(X, y, A, c: Clustering, backend: InferenceBackendConfig | None = None,
          provenance: str = "") -> PValueFamily:
    """Corrected covariate-wise p-values from one clustering."""
    backend = backend or InferenceBackendConfig()
    Z = compress(X, A)
    raw = PValueFamily(cluster_pvalues_from_backend(Z, y, backend), "cluster", "raw", provenance)
    return degroup(bonferroni(raw), c)


def empirical_quantile(values, gamma: float, axis: int = 0) -> np.ndarray:
    """Smallest ``v`` in the sample whose empirical CDF reaches ``gamma``.

    ``min{v in V : #{w <= v} / |V| >= gamma}``, the order statistic of
    rank ``ceil(gamma |V|)``.
    """
    V = np.sort(np.asarray(values, dtype=float), axis=axis)
    m = V.shape[axis]
    if m == 0:
        raise ValueError("empty sample")
    return np.take(V, _quantile_rank(gamma, m) - 1, axis=axis)


def _quantile_rank(gamma: float, m: int) -> int:
    # smallest k in [1, m] with k/m >= gamma, evaluated as the definition does
    k = min(max(1, math.ceil(gamma * m)), m)
    while k > 1 and (k - 1) / m >= gamma:
        k -= 1
    while k < m and k / m < gamma:
        k += 1
    return k


def quantile_aggregate(families: Sequence[PValueFamily], gamma: float) -> PValueFamily:
    """``min(1, gamma-quantile_b(q_j^(b) / gamma))`` per covariate."""
    if not (0 < gamma < 1):
        raise ValueError("gamma must lie in (0, 1)")
    lengths = {len(f) for f in families}
    if len(lengths) != 1:
        raise ValueError(f"families have mismatched lengths {sorted(lengths)}")
    Q = np.stack([f.values for f in families]) / gamma
    agg = np.minimum(1.0, empirical_quantile(Q, gamma, axis=0))
    return PValueFamily(agg, "covariate", "aggregated", "ensembled")


def select(family: PValueFamily, alpha: float) -> np.ndarray:
    """Rejection region ``{j : q_j <= alpha}``."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    return np.flatnonzero(family.values <= alpha)


def bootstrap_seeds(seed, B: int) -> list[np.random.SeedSequence]:
    """Per-bootstrap seed sequences; ``seed`` is an int or a sequence of ints (entropy)."""
    # counter-based split: bootstrap b always gets spawn key (b,)
    return [np.random.SeedSequence(seed, spawn_key=(b,)) for b in range(B)]


def bootstrap_clusterings(X, domain: SpatialDomain, Cs, B: int, fraction: float,
                          seed, workers: int = 1) -> list[dict[int, Clustering]]:
    """One Ward agglomeration per bootstrap subsample, cut at every count in ``Cs``."""
    seeds = bootstrap_seeds(seed, B)

    def one(b):
        return ward_partitions(subsample_rows(X, fraction, seeds[b]), domain, Cs)

    if workers > 1 and B > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(B)))
    return [one(b) for b in range(B)]


def encludl_from_clusterings(X, y, clusterings: Sequence[Clustering], gamma: float,
                             backend: InferenceBackendConfig | None = None,
                             workers: int = 1) -> EnsembleResult:
    backend = backend or InferenceBackendConfig()

    def one(b):
        c = clusterings[b]
        return cludl(X, y, transformation_matrix(c), c, backend, provenance=f"bootstrap:{b}")

    if workers > 1 and len(clusterings) > 1:
        with ThreadPoolExecutor(workers) as pool:
            fams = list(pool.map(one, range(len(clusterings))))
    else:
        fams = [one(b) for b in range(len(clusterings))]
    return EnsembleResult(
        family=quantile_aggregate(fams, gamma),
        bootstrap_families=fams,
        clusterings=list(clusterings),
        diameters=[clustering_diameter(c) for c in clusterings],
    )


def encludl(X, y, domain: SpatialDomain, config: EnsembleConfig, workers: int = 1) -> EnsembleResult:
    """Ensemble of clustered inferences over subsample-driven Ward clusterings.

    Each bootstrap clusters a row subsample but runs inference on the full
    ``(X, y)``. The declared spatial tolerance is ``result.delta``, the
    largest clustering diameter over bootstraps.
    """
    parts = bootstrap_clusterings(X, domain, [config.C], config.B,
                                  config.subsample_fraction, config.seed, workers)
    return encludl_from_clusterings(X, y, [pp[config.C] for pp in parts], config.gamma,
                                    config.backend, workers)
