import numpy as np
import pytest
import scipy.sparse as sp

from nocd.graph import (
    FeatureMatrix,
    GroundTruth,
    ParseError,
    SparseGraph,
    adjacency_as_features,
    induced_subgraph,
    load_communities,
    load_edge_list,
    load_features,
    normalize_adjacency,
    row_normalize,
    save_communities,
    save_edge_list,
    save_features,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadEdgeList:
    def test_basic_path_graph(self, tmp_path):
        g = load_edge_list(write(tmp_path, "g.tsv", "0\t1\n1\t2\n"))
        assert g.num_nodes == 3
        assert g.num_edges == 2
        assert g.degrees.tolist() == [1, 2, 1]

    def test_duplicates_and_reversals_collapse(self, tmp_path):
        g = load_edge_list(write(tmp_path, "g.tsv", "0\t1\n1\t0\n0\t1\n"))
        assert g.num_edges == 1

    def test_only_self_loops_is_error(self, tmp_path):
        path = write(tmp_path, "g.tsv", "5\t5\n")
        with pytest.raises(ValueError):
            with pytest.warns(UserWarning):
                load_edge_list(path)

    def test_self_loops_dropped_with_warning(self, tmp_path):
        path = write(tmp_path, "g.tsv", "0\t1\n2\t2\n")
        with pytest.warns(UserWarning, match="self-loop"):
            g = load_edge_list(path)
        assert g.num_edges == 1
        assert g.num_nodes == 3

    def test_malformed_line_reports_number(self, tmp_path):
        path = write(tmp_path, "g.tsv", "0\t1\nbroken line here\n")
        with pytest.raises(ParseError, match=":2"):
            load_edge_list(path)

    def test_non_integer_is_parse_error(self, tmp_path):
        with pytest.raises(ParseError):
            load_edge_list(write(tmp_path, "g.tsv", "0\t1.5\n"))

    def test_header_overrides_node_count(self, tmp_path):
        g = load_edge_list(write(tmp_path, "g.tsv", "N=5\n# comment\n0\t1\n"))
        assert g.num_nodes == 5
        assert g.degrees.tolist() == [1, 1, 0, 0, 0]

    def test_empty_file_is_error(self, tmp_path):
        with pytest.raises(ValueError):
            load_edge_list(write(tmp_path, "g.tsv", "# nothing\n"))

    def test_round_trip_identical_csr(self, tmp_path):
        rng = np.random.default_rng(0)
        us = rng.integers(0, 30, size=80)
        vs = rng.integers(0, 30, size=80)
        keep = us != vs
        g = SparseGraph.from_edges(30, us[keep], vs[keep])
        path = tmp_path / "rt.tsv"
        save_edge_list(g, path)
        g2 = load_edge_list(path)
        assert g2 == g


class TestSparseGraph:
    def test_symmetry_invariant(self):
        g = SparseGraph.from_edges(4, [0, 1, 2], [1, 2, 3])
        for u in range(4):
            for v in g.neighbors(u):
                assert g.has_edge(v, u)

    def test_contains_pairs_matches_has_edge(self):
        rng = np.random.default_rng(3)
        g = SparseGraph.from_edges(20, rng.integers(0, 20, 50), rng.integers(0, 20, 50),
                                   warn_self_loops=False)
        us = rng.integers(0, 20, 200)
        vs = rng.integers(0, 20, 200)
        got = g.contains_pairs(us, vs)
        want = np.array([g.has_edge(int(u), int(v)) for u, v in zip(us, vs)])
        assert np.array_equal(got, want)

    def test_edge_arrays_are_canonical(self):
        g = SparseGraph.from_edges(5, [3, 0, 4], [1, 2, 0])
        eu, ev = g.edge_arrays()
        assert np.all(eu < ev)
        assert eu.size == g.num_edges

    def test_adjacency_matmul_matches_dense(self):
        rng = np.random.default_rng(5)
        g = SparseGraph.from_edges(15, rng.integers(0, 15, 40), rng.integers(0, 15, 40),
                                   warn_self_loops=False)
        x = rng.random((15, 3))
        dense = g.to_scipy().toarray()
        assert np.allclose(g.adjacency_matmul(x), dense @ x, rtol=1e-12)


class TestNormalizeAdjacency:
    def test_single_isolated_node(self):
        g = SparseGraph.from_edges(1, [], [], allow_empty=True)
        a = normalize_adjacency(g).values.toarray()
        assert a == pytest.approx([[1.0]])

    def test_two_node_clique(self):
        g = SparseGraph.from_edges(2, [0], [1])
        a = normalize_adjacency(g).values.toarray()
        assert np.allclose(a, [[0.5, 0.5], [0.5, 0.5]])

    def test_path_graph_off_diagonal(self):
        g = SparseGraph.from_edges(3, [0, 1], [1, 2])
        a = normalize_adjacency(g).values.toarray()
        assert a[0, 1] == pytest.approx(1.0 / np.sqrt(2 * 3), abs=1e-12)
        assert a[0, 1] == pytest.approx(0.40825, abs=1e-5)

    def test_symmetry_and_row_sums(self):
        rng = np.random.default_rng(7)
        g = SparseGraph.from_edges(25, rng.integers(0, 25, 60), rng.integers(0, 25, 60),
                                   warn_self_loops=False)
        a = normalize_adjacency(g).values
        dense = a.toarray()
        assert np.max(np.abs(dense - dense.T)) < 1e-12
        d = g.degrees + 1.0
        for u in range(g.num_nodes):
            neigh = np.append(g.neighbors(u), u)
            expected = np.sum(1.0 / np.sqrt(d[u] * d[neigh]))
            assert dense[u].sum() == pytest.approx(expected, rel=1e-12)
        assert dense.min() >= 0.0
        assert dense.max() <= 1.0


class TestRowNormalize:
    def test_three_four_five(self):
        out = row_normalize(FeatureMatrix(np.array([[3.0, 4.0]])))
        assert np.allclose(out.values, [[0.6, 0.8]])

    def test_zero_row_stays_zero(self):
        out = row_normalize(FeatureMatrix(np.array([[0.0, 0.0], [1.0, 0.0]])))
        assert np.allclose(out.values, [[0.0, 0.0], [1.0, 0.0]])

    def test_identity_unchanged(self):
        eye = np.eye(4)
        out = row_normalize(FeatureMatrix(eye.copy()))
        assert np.allclose(out.values, eye)

    def test_sparse_matches_dense(self):
        rng = np.random.default_rng(1)
        dense = rng.random((10, 6)) * (rng.random((10, 6)) < 0.4)
        dense[3] = 0.0
        a = row_normalize(FeatureMatrix(dense.copy())).values
        b = row_normalize(FeatureMatrix(sp.csr_matrix(dense))).values.toarray()
        assert np.allclose(a, b, atol=1e-12)

    def test_unit_norms(self):
        rng = np.random.default_rng(2)
        out = row_normalize(FeatureMatrix(rng.random((20, 5)))).values
        assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)


class TestAdjacencyAsFeatures:
    def test_two_nodes(self):
        g = SparseGraph.from_edges(2, [0], [1])
        assert np.array_equal(adjacency_as_features(g).toarray(), [[0, 1], [1, 0]])

    def test_isolated_row_all_zero(self):
        g = SparseGraph.from_edges(3, [0], [1])
        x = adjacency_as_features(g).toarray()
        assert x[2].sum() == 0

    def test_triangle_rows(self):
        g = SparseGraph.from_edges(3, [0, 1, 2], [1, 2, 0])
        x = adjacency_as_features(g).toarray()
        assert np.all(x.sum(axis=1) == 2)


class TestInducedSubgraph:
    def test_triangle_keep_two(self):
        g = SparseGraph.from_edges(3, [0, 1, 2], [1, 2, 0])
        sub, idmap = induced_subgraph(g, [0, 1])
        assert sub.num_edges == 1
        assert idmap.tolist() == [0, 1]

    def test_keep_all_is_identity(self):
        g = SparseGraph.from_edges(4, [0, 1, 2], [1, 2, 3])
        sub, idmap = induced_subgraph(g, range(4))
        assert sub == g
        assert idmap.tolist() == [0, 1, 2, 3]

    def test_star_center_removed_leaves_no_edges(self):
        g = SparseGraph.from_edges(4, [0, 0, 0], [1, 2, 3])
        sub, _ = induced_subgraph(g, [1, 2, 3])
        assert sub.num_edges == 0

    def test_out_of_range_errors(self):
        g = SparseGraph.from_edges(3, [0], [1])
        with pytest.raises(ValueError):
            induced_subgraph(g, [0, 5])


class TestFeatureFiles:
    def test_dense_round_trip(self, tmp_path):
        fm = FeatureMatrix(np.array([[0.5, 1.5], [2.0, 0.0]]))
        path = tmp_path / "f.txt"
        save_features(fm, path)
        back = load_features(path)
        assert not back.is_sparse
        assert np.allclose(back.values, fm.values)

    def test_sparse_round_trip(self, tmp_path):
        mat = sp.csr_matrix(np.array([[0.0, 2.0, 0.0], [0.0, 0.0, 0.25]]))
        path = tmp_path / "f.txt"
        save_features(FeatureMatrix(mat), path)
        back = load_features(path)
        assert back.is_sparse
        assert np.allclose(back.toarray(), mat.toarray())

    def test_missing_header_is_error(self, tmp_path):
        path = write(tmp_path, "f.txt", "1 2 3\n")
        with pytest.raises(ParseError):
            load_features(path)

    def test_ragged_dense_is_error(self, tmp_path):
        path = write(tmp_path, "f.txt", "dense\n1 2\n3\n")
        with pytest.raises(ParseError):
            load_features(path)


class TestCommunityFiles:
    def test_round_trip(self, tmp_path):
        membership = np.zeros((6, 2), dtype=bool)
        membership[[0, 1, 2], 0] = True
        membership[[2, 3], 1] = True
        path = tmp_path / "c.txt"
        save_communities(membership, path)
        truth = load_communities(path)
        assert truth.num_nodes == 6
        assert np.array_equal(truth.membership, membership)

    def test_all_empty_is_error(self, tmp_path):
        path = write(tmp_path, "c.txt", "\n\n")
        with pytest.raises(ParseError):
            load_communities(path)

    def test_ground_truth_requires_nonempty(self):
        with pytest.raises(ValueError):
            GroundTruth(np.zeros((3, 2), dtype=bool))

    def test_node_id_out_of_range(self, tmp_path):
        path = write(tmp_path, "c.txt", "0 1 9\n")
        with pytest.raises(ValueError):
            load_communities(path, num_nodes=5)
