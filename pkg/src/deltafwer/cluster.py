"""Spatially constrained Ward clustering and the cluster-mean compression map."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .grid import SpatialDomain, WeightMap


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Clustering:
    """Partition of the covariates into ``C`` groups, labels in ``[0, C)``.

    Labels are canonical: clusters are numbered by their smallest member.
    """

    labels: np.ndarray
    domain: SpatialDomain = field(repr=False)
    merge_costs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels).astype(np.int64).ravel()
        if labels.size != self.domain.p:
            raise ClusteringError(f"{labels.size} labels for p={self.domain.p}")
        labels = canonical_labels(labels)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def C(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @cached_property
    def groups(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(np.bincount(self.labels, minlength=self.C))[:-1]
        return np.split(order, bounds)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.C)

    def diameters(self) -> np.ndarray:
        """l1 diameter of every group.

        The l1 spread of a point set is the largest range of its projections
        on the sign vectors (1, +-1, ..., +-1).
        """
        order = np.argsort(self.labels, kind="stable")
        starts = np.r_[0, np.cumsum(self.sizes)[:-1]]
        pts = self.domain.coords[order]
        out = np.zeros(self.C, dtype=np.int64)
        for signs in _sign_patterns(self.domain.ndim):
            proj = pts @ signs
            spread = np.maximum.reduceat(proj, starts) - np.minimum.reduceat(proj, starts)
            np.maximum(out, spread, out=out)
        return out

    def is_connected(self) -> bool:
        return all(_connected(g, self.domain) for g in self.groups)

    @classmethod
    def from_groups(cls, groups, domain: SpatialDomain) -> "Clustering":
        labels = np.full(domain.p, -1, dtype=np.int64)
        for c, g in enumerate(groups):
            g = np.asarray(g, dtype=np.int64)
            if (labels[g] >= 0).any():
                raise ClusteringError("groups overlap")
            labels[g] = c
        if (labels < 0).any():
            raise ClusteringError("groups do not cover all covariates")
        return cls(labels, domain)

    @classmethod
    def singletons(cls, domain: SpatialDomain) -> "Clustering":
        return cls(np.arange(domain.p), domain)


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inv.ravel()]


def _sign_patterns(ndim):
    # fixing the first sign halves the work; spread is symmetric
    for bits in range(2 ** max(ndim - 1, 0)):
        yield np.array([1] + [1 - 2 * ((bits >> i) & 1) for i in range(ndim - 1)])


def _connected(group: np.ndarray, domain: SpatialDomain) -> bool:
    if group.size <= 1:
        return True
    members = set(group.tolist())
    coords = domain.coords
    index = {tuple(coords[j]): j for j in group.tolist()}
    seen = {int(group[0])}
    stack = [int(group[0])]
    while stack:
        j = stack.pop()
        cj = coords[j]
        for ax in range(domain.ndim):
            for step in (-1, 1):
                nb = list(cj)
                nb[ax] += step
                k = index.get(tuple(nb))
                if k is not None and k not in seen:
                    seen.add(k)
                    stack.append(k)
    return len(seen) == len(members)


def subsample_rows(X, fraction: float, seed) -> np.ndarray:
    """Uniform row subsample without replacement, rows kept in original order."""
    X = np.asarray(X)
    n = X.shape[0]
    if not (0 < fraction <= 1):
        raise ClusteringError("fraction must lie in (0, 1]")
    m = int(np.floor(fraction * n + 1e-9))
    if m < 2:
        raise ClusteringError(f"subsample of {m} rows is too small (n={n}, fraction={fraction})")
    if m == n:
        return X.copy()
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(n, size=m, replace=False))
    return X[rows]


def _ward_features(Xsub) -> np.ndarray:
    """Covariate feature vectors: standardised columns of the subsample, one row per covariate."""
    Xsub = np.asarray(Xsub, dtype=float)
    F = Xsub - Xsub.mean(axis=0)
    sd = F.std(axis=0)
    sd[sd == 0] = 1.0
    return np.ascontiguousarray((F / sd).T)


def ward_merges(Xsub, domain: SpatialDomain, C_min: int = 1):
    """Greedy connectivity-constrained Ward agglomeration.

    Starting from singletons, repeatedly merge the adjacent pair with the
    smallest Ward cost ``|A||B|/(|A|+|B|) * ||mu_A - mu_B||^2`` until
    ``C_min`` clusters remain (or no adjacent pair is left). Ties go to the
    smallest ``(id, id)`` pair; merged clusters get fresh increasing ids.

    Returns ``(merges, costs)``: ``merges[t] = (a, b, new_id)``.
    """
    F = _ward_features(Xsub)
    p = domain.p
    if F.shape[0] != p:
        raise ClusteringError(f"design has {F.shape[0]} columns, domain has p={p}")
    cap = 2 * p
    cent = np.zeros((cap, F.shape[1]))
    cent[:p] = F
    size = np.zeros(cap, dtype=np.int64)
    size[:p] = 1
    alive = np.zeros(cap, dtype=bool)
    alive[:p] = True
    nbrs: list[set] = [set() for _ in range(p)]
    e = domain.edges
    for a, b in e.tolist():
        nbrs[a].add(b)
        nbrs[b].add(a)
    d = F[e[:, 0]] - F[e[:, 1]]
    heap = list(zip((0.5 * np.einsum("ij,ij->i", d, d)).tolist(), e[:, 0].tolist(), e[:, 1].tolist()))
    heapq.heapify(heap)

    merges, costs = [], []
    n_alive = p
    nxt = p
    push = heapq.heappush
    while n_alive > C_min and heap:
        cost, a, b = heapq.heappop(heap)
        if not (alive[a] and alive[b]):
            continue
        new = nxt
        nxt += 1
        alive[a] = alive[b] = False
        alive[new] = True
        sn = size[a] + size[b]
        size[new] = sn
        cent[new] = (size[a] * cent[a] + size[b] * cent[b]) / sn
        merged = (nbrs[a] | nbrs[b]) - {a, b}
        nbrs.append(merged)
        nbrs[a] = nbrs[b] = set()
        if merged:
            ks = np.fromiter(merged, dtype=np.int64, count=len(merged))
            diff = cent[ks] - cent[new]
            sk = size[ks]
            wcost = (sn * sk / (sn + sk)) * np.einsum("ij,ij->i", diff, diff)
            for k, ck in zip(ks.tolist(), wcost.tolist()):
                nk = nbrs[k]
                nk.discard(a)
                nk.discard(b)
                nk.add(new)
                push(heap, (ck, k, new))
        merges.append((a, b, new))
        costs.append(cost)
        n_alive -= 1
    return merges, np.asarray(costs)


def _cut(merges, p: int, n_merges: int) -> np.ndarray:
    parent = np.arange(p + len(merges))
    for a, b, new in merges[:n_merges]:
        parent[a] = new
        parent[b] = new
    root = parent.copy()
    # merge ids are increasing, so one backward pass resolves roots
    for i in range(len(root) - 1, -1, -1):
        if parent[i] != i:
            root[i] = root[parent[i]]
    return root[:p]


def ward_partitions(Xsub, domain: SpatialDomain, Cs) -> dict[int, Clustering]:
    """Constrained Ward clusterings at several cluster counts from one agglomeration."""
    Cs = sorted({int(c) for c in Cs})
    p = domain.p
    for C in Cs:
        if not (1 <= C <= p):
            raise ClusteringError(f"cluster count {C} outside [1, {p}]")
    merges, costs = ward_merges(Xsub, domain, C_min=Cs[0])
    out = {}
    for C in Cs:
        need = p - C
        if need > len(merges):
            raise ClusteringError(
                f"adjacency graph has {p - len(merges)} components, cannot reach C={C}")
        out[C] = Clustering(_cut(merges, p, need), domain, merge_costs=costs[:need])
    return out


def ward_constrained(Xsub, domain: SpatialDomain, C: int) -> Clustering:
    """Spatially constrained Ward clustering of the covariates into ``C`` groups."""
    return ward_partitions(Xsub, domain, [C])[int(C)]


def clustering_diameter(c: Clustering) -> int:
    return int(c.diameters().max(initial=0))


@dataclass(frozen=True, eq=False)
class TransformationMatrix:
    A: sparse.csr_matrix

    @property
    def shape(self):
        return self.A.shape

    def toarray(self) -> np.ndarray:
        return self.A.toarray()


def transformation_matrix(c: Clustering) -> TransformationMatrix:
    p = c.labels.size
    vals = 1.0 / c.sizes[c.labels]
    A = sparse.csr_matrix((vals, (np.arange(p), c.labels)), shape=(p, c.C))
    return TransformationMatrix(A)


def compress(X, A) -> np.ndarray:
    """``Z = X A``: column ``c`` is the mean of the columns of group ``c``."""
    A = A.A if isinstance(A, TransformationMatrix) else A
    X = np.asarray(X, dtype=float)
    if X.shape[1] != A.shape[0]:
        raise ValueError(f"X has {X.shape[1]} columns, A has {A.shape[0]} rows")
    return np.asarray((A.T @ X.T).T) if sparse.issparse(A) else X @ A


def compressed_weights_oracle(sigma, c: Clustering, beta: WeightMap) -> np.ndarray:
    """Compressed-model weights from within-group covariance weights.

    ``theta_c = |G_c| * sum_j w_j beta_j`` with
    ``w_j = sum_{k in G_c} Sigma_jk / sum_{k,k' in G_c} Sigma_kk'``.
    Valid when groups are mutually uncorrelated.
    """
    sigma = np.asarray(sigma, dtype=float)
    b = beta.beta
    theta = np.zeros(c.C)
    for g_id, g in enumerate(c.groups):
        block = sigma[np.ix_(g, g)]
        mass = block.sum()
        if mass <= 0:
            raise ClusteringError(f"group {g_id} has no positive covariance mass")
        w = block.sum(axis=1) / mass
        theta[g_id] = g.size * float(w @ b[g])
    return theta


def population_projection(sigma, c: Clustering, beta: WeightMap) -> np.ndarray:
    """Population regression of ``X beta`` on ``Z = X A``: ``Upsilon^{-1} A' Sigma beta``."""
    A = transformation_matrix(c).toarray()
    sigma = np.asarray(sigma, dtype=float)
    ups = A.T @ sigma @ A
    return np.linalg.solve(ups, A.T @ sigma @ beta.beta)
