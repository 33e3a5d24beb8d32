import json

import numpy as np
import pytest

from dsbn.graphs import (DegenerateGraphError, SignedGraph, Subject,
                         UnsignedGraph, balance_oracle, load_dataset,
                         load_graph_csv, neighbor_sets,
                         node_features_from_series, normalize_functional,
                         normalize_structural, save_dataset,
                         signed_graph_from_dict, split_signed, subject_to_dict)
from oracles import balance_sets_matrix_power, quantile_five_naive, random_signed_graph


def signed(adj, features=None):
    return SignedGraph.create(np.array(adj, dtype=float), features)


class TestNormalizeFunctional:
    def test_max_abs_scaling(self):
        # weights {2, -4} -> {0.5, -1.0}
        g = signed([[0, 2, -4], [2, 0, 0], [-4, 0, 0]])
        out = normalize_functional(g)
        assert out.adj[0, 1] == pytest.approx(0.5)
        assert out.adj[0, 2] == pytest.approx(-1.0)

    def test_identity_when_already_normalized(self):
        g = signed([[0, 1.0, -0.25], [1.0, 0, 0], [-0.25, 0, 0]])
        out = normalize_functional(g)
        assert np.array_equal(out.adj, g.adj)

    def test_random_matches_entrywise_division(self):
        rng = np.random.default_rng(0)
        adj, _ = random_signed_graph(rng, 5, density=0.8)
        g = signed(adj)
        out = normalize_functional(g)
        peak = max(abs(adj[i, j]) for i in range(5) for j in range(5))
        expected = adj / peak
        assert np.allclose(out.adj, expected, atol=0, rtol=0)
        assert np.abs(out.adj).max() == pytest.approx(1.0)
        assert np.array_equal(np.sign(out.adj), np.sign(adj))

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateGraphError, match="degenerate graph"):
            normalize_functional(signed(np.zeros((3, 3))))

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        adj, _ = random_signed_graph(rng, 6)
        once = normalize_functional(signed(adj))
        twice = normalize_functional(once)
        assert np.array_equal(once.adj, twice.adj)


class TestNormalizeStructural:
    def test_max_scaling(self):
        g = UnsignedGraph.create(np.array([[0, 3, 6], [3, 0, 0], [6, 0, 0]], dtype=float))
        out = normalize_structural(g)
        assert out.adj[0, 1] == pytest.approx(0.5)
        assert out.adj[0, 2] == pytest.approx(1.0)

    def test_identity(self):
        g = UnsignedGraph.create(np.array([[0, 1.0], [1.0, 0]]))
        assert np.array_equal(normalize_structural(g).adj, g.adj)

    def test_random_peak_is_one(self):
        rng = np.random.default_rng(2)
        adj = np.abs(random_signed_graph(rng, 10, density=0.6)[0])
        out = normalize_structural(UnsignedGraph.create(adj))
        assert out.adj.max() == pytest.approx(1.0)
        assert out.adj.min() >= 0.0

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateGraphError):
            normalize_structural(UnsignedGraph.create(np.zeros((4, 4))))


class TestSplitSigned:
    def test_definition(self):
        g = signed([[0, 0.5, -1.0], [0.5, 0, 0], [-1.0, 0, 0]])
        pos, neg = split_signed(g)
        assert pos.adj[0, 1] == 0.5 and pos.adj[0, 2] == 0.0
        assert neg.adj[0, 2] == 1.0 and neg.adj[0, 1] == 0.0

    def test_all_positive_gives_empty_negative(self):
        g = signed([[0, 0.3], [0.3, 0]])
        _, neg = split_signed(g)
        assert not neg.adj.any()

    def test_reconstruction_identity(self):
        rng = np.random.default_rng(3)
        adj, _ = random_signed_graph(rng, 6, density=0.7)
        pos, neg = split_signed(signed(adj))
        assert np.array_equal(pos.adj - neg.adj, adj)


class TestNeighborSets:
    def test_signed_path(self):
        g = signed([[0, 0.5, 0], [0.5, 0, -0.5], [0, -0.5, 0]])
        ns = neighbor_sets(g)
        assert ns.pos[1] == (0,)
        assert ns.neg[1] == (2,)

    def test_isolated_node(self):
        g = signed([[0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]])
        ns = neighbor_sets(g)
        assert ns.pos[0] == () and ns.neg[0] == ()

    def test_random_matches_sign_scan(self):
        rng = np.random.default_rng(4)
        adj, _ = random_signed_graph(rng, 7)
        ns = neighbor_sets(signed(adj))
        for i in range(7):
            assert list(ns.pos[i]) == [j for j in range(7) if adj[i, j] > 0]
            assert list(ns.neg[i]) == [j for j in range(7) if adj[i, j] < 0]
            assert not set(ns.pos[i]) & set(ns.neg[i])


class TestBalanceOracle:
    def test_triangle_two_negative_edges(self):
        # edges: 0-1 negative, 1-2 negative, 0-2 absent
        g = signed([[0, -1, 0], [-1, 0, -1], [0, -1, 0]])
        balanced, unbalanced = balance_oracle(g, 0, 2)
        assert 2 in balanced  # reached across two negative edges
        assert 1 in unbalanced

    def test_all_positive_graph_has_no_unbalanced(self):
        g = signed([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
        for t in (1, 2, 3):
            _, unbalanced = balance_oracle(g, 0, t)
            assert unbalanced == []

    def test_t1_equals_neighbor_sets(self):
        rng = np.random.default_rng(5)
        adj, _ = random_signed_graph(rng, 6)
        g = signed(adj)
        ns = neighbor_sets(g)
        for i in range(6):
            balanced, unbalanced = balance_oracle(g, i, 1)
            assert balanced == list(ns.pos[i])
            assert unbalanced == list(ns.neg[i])

    def test_matches_matrix_power_parity(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            adj, _ = random_signed_graph(rng, 5, density=0.5)
            g = signed(adj)
            for i in range(5):
                assert balance_oracle(g, i, 3) == balance_sets_matrix_power(adj, i, 3)

    def test_hop_guard(self):
        g = signed([[0, 1], [1, 0]])
        with pytest.raises(ValueError):
            balance_oracle(g, 0, 7)
        with pytest.raises(ValueError):
            balance_oracle(g, 0, 0)


class TestNodeFeatures:
    def test_exact_positions(self):
        out = node_features_from_series(np.array([[1, 2, 3, 4, 5]]))
        assert np.allclose(out[0], [1, 2, 3, 4, 5])

    def test_constant_row(self):
        out = node_features_from_series(np.array([[7.0, 7.0, 7.0, 7.0]]))
        assert np.allclose(out[0], [7, 7, 7, 7, 7])

    def test_matches_sort_interpolate(self):
        row = np.array([3, 1, 4, 1, 5, 9, 2, 6], dtype=float)
        out = node_features_from_series(row[None, :])
        assert np.allclose(out[0], quantile_five_naive(row))

    def test_rows_sorted_with_true_extrema(self):
        rng = np.random.default_rng(7)
        series = rng.normal(size=(6, 33))
        out = node_features_from_series(series)
        assert np.all(np.diff(out, axis=1) >= 0)
        assert np.allclose(out[:, 0], series.min(axis=1))
        assert np.allclose(out[:, 4], series.max(axis=1))

    def test_short_series_rejected(self):
        with pytest.raises(ValueError):
            node_features_from_series(np.array([[1.0]]))


class TestConstructionAndIO:
    def test_asymmetric_input_symmetrized_with_warning(self):
        adj = np.array([[0, 1.0], [0.5, 0]])
        with pytest.warns(UserWarning, match="symmetrized"):
            g = SignedGraph.create(adj)
        assert g.adj[0, 1] == pytest.approx(0.75)
        assert g.adj[0, 1] == g.adj[1, 0]

    def test_diagonal_zeroed(self):
        g = SignedGraph.create(np.array([[1.0, 0.5], [0.5, 1.0]]))
        assert g.adj[0, 0] == 0.0 and g.adj[1, 1] == 0.0

    def test_unsigned_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            UnsignedGraph.create(np.array([[0, -0.1], [-0.1, 0]]))

    def test_subject_node_count_mismatch(self):
        f = signed([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        s = UnsignedGraph.create(np.array([[0, 1.0], [1.0, 0]]))
        with pytest.raises(ValueError, match="node counts"):
            Subject(functional=f, structural=s, label=0)

    def test_dataset_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        adj, feats = random_signed_graph(rng, 5)
        subject = Subject(
            functional=SignedGraph.create(adj, feats),
            structural=UnsignedGraph.create(np.abs(adj)),
            label=1,
            score=21.5,
        )
        path = tmp_path / "data.json"
        save_dataset([subject], path)
        loaded = load_dataset(path)
        assert len(loaded) == 1
        assert np.allclose(loaded[0].functional.adj, adj)
        assert np.allclose(loaded[0].functional.features, feats)
        assert loaded[0].label == 1 and loaded[0].score == 21.5

    def test_graph_json_schema(self):
        g = signed([[0, 1.0], [1.0, 0]], np.ones((2, 5)))
        d = subject_to_dict(Subject(functional=g,
                                    structural=UnsignedGraph.create(np.abs(g.adj)),
                                    label=0, score=None))
        assert set(d) == {"functional", "structural", "label", "score"}
        assert d["functional"]["n"] == 2
        assert len(d["functional"]["adj"]) == 4
        assert len(d["functional"]["features"]) == 10
        json.dumps(d)  # serializable

    def test_features_dim_roundtrip(self):
        d = {"n": 2, "adj": [0, 1, 1, 0], "features": [1, 2, 3, 4, 5, 6]}
        g = signed_graph_from_dict(d)
        assert g.features.shape == (2, 3)

    def test_csv_edge_list(self, tmp_path):
        path = tmp_path / "edges.csv"
        path.write_text("src,dst,weight\n0,1,0.5\n1,2,-0.25\n")
        g = load_graph_csv(path)
        assert g.n == 3
        assert g.adj[0, 1] == 0.5
        assert g.adj[2, 1] == -0.25
