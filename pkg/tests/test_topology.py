import math

import numpy as np
import pytest

from swapsampler.errors import ParameterError
from swapsampler.topology import (Permutation, Topology, generate_regular,
                                  load_topology, normalized_adjacency,
                                  permuted_edge_set, save_topology,
                                  search_by_gap, spectral_gap)


def petersen() -> Topology:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Topology(10, outer + spokes + inner)


def jacobi_eigenvalues(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Cyclic Jacobi rotations; independent oracle for the spectral code."""
    a = a.astype(float).copy()
    n = a.shape[0]
    while math.sqrt((np.triu(a, 1) ** 2).sum()) > tol:
        for p in range(n):
            for q in range(p + 1, n):
                if abs(a[p, q]) <= tol / n:
                    continue
                phi = 0.5 * math.atan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = math.cos(phi), math.sin(phi)
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


class TestGenerateRegular:
    def test_k4_is_forced(self):
        for seed in (1, 2, 99):
            t = generate_regular(4, 3, seed)
            assert t.edge_set() == {(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)}

    def test_degree_and_connectivity_audit(self):
        t = generate_regular(64, 4, 1)
        assert len(t.edges) == 128
        assert all(deg == 4 for deg in t.degrees)
        assert t.degree == 4  # connectivity is checked at construction

    def test_parity_rejection(self):
        with pytest.raises(ParameterError):
            generate_regular(5, 3, 1)

    def test_degree_bound_rejection(self):
        with pytest.raises(ParameterError):
            generate_regular(4, 4, 1)

    def test_deterministic(self):
        assert generate_regular(20, 3, 5).edges == generate_regular(20, 3, 5).edges

    @pytest.mark.parametrize("n,d", [(10, 3), (16, 4), (9, 2), (12, 5)])
    def test_invariants_over_seeds(self, n, d):
        for seed in range(10):
            t = generate_regular(n, d, seed)
            assert len(t.edges) == n * d // 2
            assert all(deg == d for deg in t.degrees)
            assert all(i < j for i, j in t.edges)


class TestTopologyConstruction:
    def test_rejects_self_loop(self):
        with pytest.raises(ParameterError):
            Topology(3, [(0, 0), (0, 1), (1, 2)])

    def test_rejects_duplicate(self):
        with pytest.raises(ParameterError):
            Topology(3, [(0, 1), (1, 0), (1, 2)])

    def test_rejects_disconnected(self):
        with pytest.raises(ParameterError):
            Topology(4, [(0, 1), (2, 3)])

    def test_irregular_graphs_allowed_directly(self):
        t = Topology(4, [(0, 1), (0, 2), (1, 3)])
        assert t.degrees == [2, 2, 1, 1]
        assert not t.is_regular()
        with pytest.raises(ParameterError):
            _ = t.degree


class TestSpectralGap:
    def test_complete_graph(self):
        t = generate_regular(4, 3, 1)
        assert spectral_gap(t) == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_bipartite_cycle(self):
        c4 = Topology(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
        assert spectral_gap(c4) == pytest.approx(0.0, abs=1e-9)

    def test_petersen_known_spectrum(self):
        # adjacency spectrum {3, 1^5, -2^4} -> gap of A/3 is 1/3
        assert spectral_gap(petersen()) == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_matches_jacobi_oracle(self):
        for seed in range(3):
            t = generate_regular(12, 3, seed)
            w = normalized_adjacency(t)
            assert np.allclose(np.sort(np.linalg.eigvalsh(w)),
                               jacobi_eigenvalues(w), atol=1e-9)

    def test_permutation_invariance(self):
        t = generate_regular(16, 4, 3)
        base = spectral_gap(t)
        rng = np.random.default_rng(0)
        for _ in range(5):
            p = Permutation(tuple(int(v) for v in rng.permutation(16)))
            relabeled = Topology(16, sorted(permuted_edge_set(t, p)))
            assert spectral_gap(relabeled) == pytest.approx(base, abs=1e-9)

    def test_all_ones_eigenvector(self):
        t = generate_regular(18, 4, 9)
        w = normalized_adjacency(t)
        ones = np.ones(18) / math.sqrt(18)
        assert np.allclose(w @ ones, ones, atol=1e-9)


class TestPermutation:
    def test_rejects_non_bijection(self):
        with pytest.raises(ParameterError):
            Permutation((0, 0, 1))

    def test_inverse_roundtrip(self):
        p = Permutation((2, 0, 3, 1))
        inv = p.inverse()
        assert all(inv(p(v)) == v for v in range(4))

    def test_identity(self):
        assert Permutation.identity(5).is_identity()


class TestPermutedEdgeSet:
    def test_identity_fixes_edges(self):
        t = generate_regular(10, 3, 2)
        assert permuted_edge_set(t, Permutation.identity(10)) == t.edge_set()

    def test_complete_graph_any_transposition(self):
        t = generate_regular(4, 3, 1)
        swap01 = Permutation((1, 0, 2, 3))
        assert permuted_edge_set(t, swap01) == t.edge_set()

    def test_path_relabel(self):
        path = Topology(3, [(0, 1), (1, 2)])
        swap_ends = Permutation((2, 1, 0))
        assert permuted_edge_set(path, swap_ends) == {(1, 2), (0, 1)}


class TestSearchByGap:
    def test_singleton(self):
        out = search_by_gap(8, 3, 1, seed=4)
        assert len(out) == 1

    def test_sorted_ascending(self):
        out = search_by_gap(16, 3, 25, seed=4)
        gaps = [g for _, g in out]
        assert gaps == sorted(gaps)

    @pytest.mark.slow
    def test_observed_range_at_reference_scale(self):
        # gaps of 4-regular 64-node graphs concentrate in a band reaching
        # roughly [0.07, 0.22] in large searches; a 10^4 sample must overlap
        # that band from inside
        out = search_by_gap(64, 4, 10 ** 4, seed=1)
        gaps = [g for _, g in out]
        assert gaps[0] >= 0.0 and gaps[-1] <= 0.30
        assert gaps[0] <= 0.11
        assert gaps[-1] >= 0.17


class TestTopologyFile:
    def test_roundtrip(self, tmp_path):
        t = generate_regular(12, 3, 6)
        path = tmp_path / "topo.txt"
        save_topology(t, path)
        loaded = load_topology(path)
        assert loaded.n == t.n and loaded.edges == t.edges

    def test_format_shape(self, tmp_path):
        t = generate_regular(6, 2, 3)
        path = tmp_path / "topo.txt"
        save_topology(t, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "6 2"
        assert len(lines) == 1 + 6
        for line in lines[1:]:
            i, j = (int(x) for x in line.split())
            assert 0 <= i < j < 6

    def test_loader_validates_degree(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 2\n0 1\n1 2\n")  # path graph claimed 2-regular
        with pytest.raises(ParameterError):
            load_topology(path)

    def test_loader_validates_edge_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("4 3\n0 1\n")
        with pytest.raises(ParameterError):
            load_topology(path)
