import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cycle_graph, path_graph
from graph_wpt_hos.graph_spectral import (
    ContractViolation,
    GraphConstructionError,
    RewiringError,
    SensorGraph,
    build_random_geometric_graph,
    eigendecompose,
    gft,
    igft,
    laplacian,
    load_graph,
    rewire_edges,
    save_graph,
    spectrum_of,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


class TestSensorGraph:
    def test_rejects_asymmetric(self):
        a = np.zeros((3, 3))
        a[0, 1] = 1.0
        with pytest.raises(ContractViolation):
            SensorGraph(a)

    def test_rejects_negative_and_self_loops(self):
        with pytest.raises(ContractViolation):
            SensorGraph(-np.ones((2, 2)) + np.eye(2))
        with pytest.raises(ContractViolation):
            SensorGraph(np.eye(3))

    def test_edges_and_degree(self):
        g = cycle_graph(5)
        assert g.edge_count == 5
        assert g.edges[0] == (0, 1)
        assert g.mean_degree == 2.0
        assert g.is_connected()

    def test_adjacency_is_frozen(self):
        g = cycle_graph(4)
        with pytest.raises(ValueError):
            g.adjacency[0, 1] = 5.0


class TestLaplacianSpectrum:
    def test_cycle_c4_eigenvalues(self):
        # C4 spectrum is 2 - 2 cos(2 pi k / 4): 0, 2, 2, 4
        spec = spectrum_of(cycle_graph(4))
        np.testing.assert_allclose(spec.eigenvalues, [0.0, 2.0, 2.0, 4.0], atol=1e-12)

    def test_path_eigenvalues(self):
        n = 7
        spec = spectrum_of(path_graph(n))
        expected = 2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)
        np.testing.assert_allclose(spec.eigenvalues, expected, atol=1e-12)

    def test_complete_graph(self):
        n = 6
        spec = spectrum_of(SensorGraph(np.ones((n, n)) - np.eye(n)))
        np.testing.assert_allclose(spec.eigenvalues, [0.0] + [n] * (n - 1), atol=1e-12)

    def test_laplacian_rows_sum_to_zero(self, table_graph):
        lap = laplacian(table_graph)
        np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_array_equal(np.diag(lap), table_graph.adjacency.sum(axis=1))

    def test_constant_vector_spans_nullspace(self, table_spectrum):
        u0 = table_spectrum.eigenvectors[:, 0]
        m = u0.size
        np.testing.assert_allclose(u0, np.full(m, 1 / np.sqrt(m)), atol=1e-9)
        assert table_spectrum.eigenvalues[0] == 0.0

    def test_sign_convention(self, table_spectrum):
        u = table_spectrum.eigenvectors
        for k in range(u.shape[1]):
            first = u[np.flatnonzero(np.abs(u[:, k]) > 1e-12)[0], k]
            assert first > 0

    def test_rejects_asymmetric_laplacian(self):
        lap = laplacian(cycle_graph(4))
        lap[0, 1] += 1e-6
        with pytest.raises(ContractViolation):
            eigendecompose(lap)

    @settings(max_examples=25, deadline=None)
    @given(seed=seeds)
    def test_orthonormal_and_residual(self, seed):
        spec = spectrum_of(build_random_geometric_graph(24, 4.0, seed))
        u, lam = spec.eigenvectors, spec.eigenvalues
        assert np.max(np.abs(u.T @ u - np.eye(24))) < 1e-9
        assert np.max(np.abs(spec.laplacian @ u - u * lam)) < 1e-8
        assert np.all(np.diff(lam) >= 0)

    @settings(max_examples=25, deadline=None)
    @given(seed=seeds)
    def test_parseval_and_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        spec = spectrum_of(build_random_geometric_graph(24, 4.0, seed))
        y = rng.standard_normal((24, 64))
        s = gft(spec, y)
        assert abs(np.sum(s**2) - np.sum(y**2)) <= 1e-9 * np.sum(y**2)
        assert np.max(np.abs(igft(spec, s) - y)) < 1e-9

    def test_gft_of_constant_signal_is_dc(self, table_spectrum):
        s = gft(table_spectrum, np.ones((24, 5)))
        np.testing.assert_allclose(s[0], np.sqrt(24.0))
        assert np.max(np.abs(s[1:])) < 1e-9

    def test_gft_batch_matches_single(self, table_spectrum):
        y = np.random.default_rng(0).standard_normal((3, 24, 16))
        batch = gft(table_spectrum, y)
        for i in range(3):
            np.testing.assert_allclose(batch[i], gft(table_spectrum, y[i]), atol=1e-13)

    def test_row_count_mismatch(self, table_spectrum):
        with pytest.raises(ContractViolation):
            gft(table_spectrum, np.zeros((5, 8)))


class TestRandomGeometricGraph:
    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_connected_with_target_degree(self, seed):
        g = build_random_geometric_graph(24, 4.0, seed)
        assert g.is_connected()
        assert abs(g.mean_degree - 4.0) <= 0.5
        assert np.all((g.adjacency == 0) | (g.adjacency == 1))

    def test_deterministic(self):
        a = build_random_geometric_graph(24, 4.0, 123)
        b = build_random_geometric_graph(24, 4.0, 123)
        np.testing.assert_array_equal(a.adjacency, b.adjacency)
        np.testing.assert_array_equal(a.node_positions, b.node_positions)

    def test_edges_follow_radius(self):
        g = build_random_geometric_graph(24, 4.0, 5)
        p = g.node_positions
        d = np.sqrt(((p[:, None] - p[None]) ** 2).sum(-1))
        linked = d[g.adjacency > 0]
        unlinked = d[(g.adjacency == 0) & ~np.eye(24, dtype=bool)]
        assert linked.max() < unlinked.min()

    def test_two_nodes(self):
        g = build_random_geometric_graph(2, 1.0, 0)
        np.testing.assert_array_equal(g.adjacency, [[0, 1], [1, 0]])

    def test_invalid_arguments(self):
        with pytest.raises(ContractViolation):
            build_random_geometric_graph(1, 1.0, 0)
        with pytest.raises(ContractViolation):
            build_random_geometric_graph(10, 9.5, 0)

    def test_unreachable_degree_fails(self):
        # degree 1.2 on 60 nodes is essentially never connected
        with pytest.raises(GraphConstructionError):
            build_random_geometric_graph(60, 1.2, 0)


class TestRewiring:
    @settings(max_examples=20, deadline=None)
    @given(seed=seeds, fraction=st.sampled_from([0.1, 0.25, 0.5]))
    def test_moves_exact_count_and_stays_connected(self, seed, fraction):
        g = build_random_geometric_graph(24, 4.0, seed)
        r = rewire_edges(g, fraction, seed + 1)
        n_move = int(np.ceil(fraction * g.edge_count))
        assert r.edge_count == g.edge_count
        assert r.is_connected()
        removed = set(g.edges) - set(r.edges)
        added = set(r.edges) - set(g.edges)
        assert len(removed) == len(added) == n_move

    def test_zero_fraction_is_identity(self, table_graph):
        assert rewire_edges(table_graph, 0.0, 1) is table_graph

    def test_complete_graph_cannot_rewire(self):
        with pytest.raises(RewiringError):
            rewire_edges(SensorGraph(np.ones((4, 4)) - np.eye(4)), 0.5, 0)

    def test_rejects_bad_fraction(self, table_graph):
        with pytest.raises(ContractViolation):
            rewire_edges(table_graph, 1.5, 0)


class TestGraphFile:
    def test_round_trip(self, tmp_path, table_graph):
        path = tmp_path / "g.txt"
        save_graph(table_graph, path)
        loaded = load_graph(path)
        np.testing.assert_array_equal(loaded.adjacency, table_graph.adjacency)
        np.testing.assert_array_equal(loaded.node_positions, table_graph.node_positions)
        assert path.read_text().startswith("M 24\n")

    def test_hand_written_file(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("# triangle\nM 3\n0 1 1.0\n1 2 2.5\n0 2 1\n")
        g = load_graph(path)
        assert g.adjacency[1, 2] == g.adjacency[2, 1] == 2.5
        assert g.node_positions is None

    def test_malformed(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("0 1 1.0\n")
        with pytest.raises(ValueError, match="header"):
            load_graph(path)
        path.write_text("M 3\n0 x 1.0\n")
        with pytest.raises(ValueError, match="malformed"):
            load_graph(path)
