import numpy as np
import pytest
from hypothesis import given, strategies as st

from deltafwer.grid import (
    DomainError,
    SpatialDomain,
    WeightMap,
    check_sparse_smooth,
    check_spatial_homogeneity,
    delta_null_region,
    distance,
)


def line_map(beta):
    return WeightMap(np.asarray(beta, dtype=float), SpatialDomain.line(len(beta)))


class TestDistance:
    def test_line(self):
        assert distance(SpatialDomain.line(10), 2, 5) == 3

    def test_grid(self):
        dom = SpatialDomain.square(8)
        j, k = 0, 3 * 8 + 4  # (0,0) and (3,4)
        assert distance(dom, j, k) == 7

    def test_identity(self):
        dom = SpatialDomain.square(5)
        assert all(distance(dom, j, j) == 0 for j in range(dom.p))

    def test_out_of_range(self):
        dom = SpatialDomain.line(4)
        with pytest.raises(DomainError):
            distance(dom, 0, 4)
        with pytest.raises(DomainError):
            distance(dom, -1, 2)

    def test_coords_bijection(self):
        dom = SpatialDomain((3, 4, 2))
        assert dom.p == 24
        assert len({tuple(c) for c in dom.coords}) == dom.p
        j = 17
        assert tuple(dom.coords[j]) == np.unravel_index(j, dom.shape)

    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    def test_metric_axioms(self, a, b, data):
        dom = SpatialDomain((a, b))
        idx = st.integers(0, dom.p - 1)
        i, j, k = data.draw(idx), data.draw(idx), data.draw(idx)
        assert dom.distance(i, j) == dom.distance(j, i) >= 0
        assert dom.distance(i, k) <= dom.distance(i, j) + dom.distance(j, k)
        assert np.array_equal(dom.distance_matrix()[i], dom.distances_from(i))

    def test_edges_are_unit_distance(self):
        dom = SpatialDomain.square(4)
        e = dom.edges
        assert len(e) == 2 * 4 * 3
        assert all(dom.distance(a, b) == 1 and a < b for a, b in e)


class TestDeltaNullRegion:
    def test_delta_zero(self):
        # 0-based: beta = (0,0,1,0,0)
        assert delta_null_region(line_map([0, 0, 1, 0, 0]), 0).tolist() == [0, 1, 3, 4]

    def test_delta_one(self):
        assert delta_null_region(line_map([0, 0, 1, 0, 0]), 1).tolist() == [0, 4]

    def test_real_delta(self):
        w = line_map([0, 0, 1, 0, 0])
        assert delta_null_region(w, 0.5).tolist() == [0, 1, 3, 4]
        assert delta_null_region(w, 1.99).tolist() == [0, 4]

    def test_zero_map(self):
        w = WeightMap(np.zeros(25), SpatialDomain.square(5))
        assert delta_null_region(w, 7).tolist() == list(range(25))

    def test_negative_delta(self):
        with pytest.raises(DomainError):
            delta_null_region(line_map([1, 0]), -1)

    def test_partition(self):
        w = line_map([0, 2, 0, -1, 0, 0])
        s, nr = set(w.support()), set(w.null_region())
        assert s.isdisjoint(nr) and s | nr == set(range(6))

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            WeightMap(np.zeros(5), SpatialDomain.square(3))

    @given(st.integers(2, 7), st.integers(2, 7),
           st.lists(st.integers(-1, 1), min_size=49, max_size=49),
           st.floats(0, 12), st.floats(0, 12))
    def test_nesting(self, a, b, vals, d1, d2):
        dom = SpatialDomain((a, b))
        w = WeightMap(np.array(vals[: dom.p], dtype=float), dom)
        d1, d2 = sorted((d1, d2))
        n1, n2 = set(delta_null_region(w, d1)), set(delta_null_region(w, d2))
        assert n2 <= n1 <= set(w.null_region())
        assert delta_null_region(w, 0).tolist() == w.null_region().tolist()

    @given(st.integers(1, 5), st.integers(1, 5),
           st.lists(st.integers(-1, 1), min_size=25, max_size=25), st.integers(0, 8))
    def test_brute_force(self, a, b, vals, delta):
        dom = SpatialDomain((a, b))
        beta = np.array(vals[: dom.p], dtype=float)
        w = WeightMap(beta, dom)
        D = dom.distance_matrix()
        expect = [j for j in range(dom.p) if np.all(beta[D[j] <= delta] == 0)]
        assert delta_null_region(w, delta).tolist() == expect


class TestSparseSmooth:
    def test_examples(self):
        w = line_map([1, 0, -1])
        assert not check_sparse_smooth(w, 2)
        assert check_sparse_smooth(w, 1)

    def test_one_signed(self):
        w = WeightMap(np.abs(np.random.default_rng(0).normal(size=36)), SpatialDomain.square(6))
        assert check_sparse_smooth(w, 100)

    @given(st.lists(st.integers(-1, 1), min_size=2, max_size=12), st.integers(0, 12), st.integers(0, 12))
    def test_monotone_in_delta(self, vals, d1, d2):
        w = line_map(vals)
        lo, hi = sorted((d1, d2))
        if check_sparse_smooth(w, hi):
            assert check_sparse_smooth(w, lo)


class TestSpatialHomogeneity:
    def test_identity(self):
        dom = SpatialDomain.square(3)
        assert check_spatial_homogeneity(np.eye(9), dom, 4)

    def test_negative_neighbour(self):
        dom = SpatialDomain.line(3)
        S = np.eye(3)
        S[0, 1] = S[1, 0] = -0.1
        assert not check_spatial_homogeneity(S, dom, 1)
        assert check_spatial_homogeneity(S, dom, 0)

    def test_delta_zero_any_covariance(self, rng):
        A = rng.normal(size=(6, 6))
        assert check_spatial_homogeneity(A @ A.T, SpatialDomain.line(6), 0)

    def test_asymmetric(self):
        S = np.eye(3)
        S[0, 1] = 0.3
        with pytest.raises(ValueError):
            check_spatial_homogeneity(S, SpatialDomain.line(3), 1)
