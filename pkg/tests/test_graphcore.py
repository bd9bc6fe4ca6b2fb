import io
import math

import numpy as np
import pytest

from privemb.graphcore import (
    AttributeSchema,
    Graph,
    InputError,
    adjacency_with_self_loops,
    build_features,
    canonical_edges,
    load_graph,
    normalize_adjacency,
    onehot_labels,
    save_graph,
    split_edges,
    split_nodes,
)
from conftest import assert_close

SCHEMA = AttributeSchema(
    names=("status", "dept"),
    classes={"status": 2, "dept": 3},
    roles={"status": "private", "dept": "utility"},
)


def _load(edge_text, attr_text, schema=SCHEMA):
    return load_graph(io.StringIO(edge_text), io.StringIO(attr_text), schema)


ATTRS = "node_id,status,dept\n10,1,2\n11,2,0\n12,1,3\n"


def test_loader_basic_and_remap():
    g = _load("10\t11\n11\t12\n", ATTRS)
    assert g.n == 3
    assert g.node_ids == (10, 11, 12)
    assert g.edge_set() == {(0, 1), (1, 2)}
    assert list(g.attributes["status"]) == [1, 2, 1]
    assert list(g.attributes["dept"]) == [2, 0, 3]


def test_loader_dedups_and_drops_self_loops():
    g = _load("10\t11\n11\t10\n10\t10\n# comment\n\n11\t12\n", ATTRS)
    assert g.edge_set() == {(0, 1), (1, 2)}


def test_loader_unknown_node():
    with pytest.raises(InputError, match="unknown node id 99"):
        _load("10\t99\n", ATTRS)


def test_loader_duplicate_node_id():
    bad = "node_id,status,dept\n10,1,2\n10,2,1\n"
    with pytest.raises(InputError, match="duplicate node id"):
        _load("", bad)


def test_loader_code_out_of_range():
    bad = "node_id,status,dept\n10,3,2\n"
    with pytest.raises(InputError, match="out of range"):
        _load("", bad)
    # code == M is valid, code 0 is missing
    ok = "node_id,status,dept\n10,2,0\n11,1,3\n"
    g = _load("10\t11\n", ok)
    assert list(g.attributes["dept"]) == [0, 3]


def test_loader_header_and_columns():
    with pytest.raises(InputError, match="node_id"):
        _load("", "id,status,dept\n10,1,2\n")
    with pytest.raises(InputError, match="columns"):
        _load("", "node_id,status\n10,1\n")


def test_loader_malformed_edge_line():
    with pytest.raises(InputError, match="two tab-separated"):
        _load("10 11\n", ATTRS)


def test_schema_validation():
    with pytest.raises(InputError, match="exactly one private"):
        AttributeSchema(names=("a",), classes={"a": 2}, roles={"a": "utility"})
    with pytest.raises(InputError, match="at least one utility"):
        AttributeSchema(names=("a",), classes={"a": 2}, roles={"a": "private"})
    with pytest.raises(InputError, match="at least 2 classes"):
        AttributeSchema(names=("a", "b"), classes={"a": 1, "b": 2},
                        roles={"a": "private", "b": "utility"})


def test_canonical_edges():
    out = canonical_edges([(2, 1), (1, 2), (0, 0), (3, 0)], 4)
    assert out.tolist() == [[0, 3], [1, 2]]
    with pytest.raises(InputError):
        canonical_edges([(0, 9)], 4)


def test_laplacian_path_hand_values():
    # path 0-1-2: degrees with self-loops are 2, 3, 2
    g = Graph(n=3, edges=[(0, 1), (1, 2)],
              attributes={"status": [1, 1, 2], "dept": [1, 2, 3]})
    lap = normalize_adjacency(g).toarray()
    assert_close(lap[0, 0], 0.5)
    assert_close(lap[0, 1], 1.0 / math.sqrt(6.0))
    assert_close(lap[1, 1], 1.0 / 3.0)
    assert_close(lap[0, 2], 0.0)
    assert_close(lap, lap.T)


def test_laplacian_matches_dense_oracle(small_synth):
    g, schema = small_synth
    lap = normalize_adjacency(g).toarray()
    a = adjacency_with_self_loops(g.n, g.edges).toarray()
    deg = a.sum(axis=1)
    oracle = a / np.sqrt(np.outer(deg, deg))
    assert_close(lap, oracle, tol=1e-12)


def test_laplacian_rejects_foreign_edges():
    g = Graph(n=3, edges=[(0, 1)],
              attributes={"status": [1, 1, 2], "dept": [1, 2, 3]})
    with pytest.raises(ValueError, match="not in the graph"):
        normalize_adjacency(g, np.array([[0, 2]]))


def test_build_features_layout():
    g = Graph(n=3, edges=[(0, 1)],
              attributes={"status": [1, 2, 0], "dept": [3, 0, 1]})
    x = build_features(g, SCHEMA)
    expected = np.array([
        [1, 0, 0, 0, 1],
        [0, 1, 0, 0, 0],
        [0, 0, 1, 0, 0],
    ], dtype=np.float64)
    assert_close(x, expected)
    x_rm = build_features(g, SCHEMA, exclude=("status",))
    assert x_rm.shape == (3, 3)
    assert_close(x_rm, expected[:, 2:])


def test_onehot_labels_and_mask():
    g = Graph(n=3, edges=[(0, 1)],
              attributes={"status": [1, 0, 2], "dept": [1, 1, 1]})
    y, mask = onehot_labels(g, SCHEMA, "status")
    assert mask.tolist() == [0, 2]
    assert_close(y, [[1, 0], [0, 0], [0, 1]])


def test_split_nodes_sizes_and_disjoint():
    mask = np.arange(10)
    s = split_nodes(mask, 0.5, seed=4)
    assert len(s.train) == 5 and len(s.test) == 5
    assert set(s.train).isdisjoint(s.test)
    assert set(s.train) | set(s.test) == set(range(10))
    # deterministic
    s2 = split_nodes(mask, 0.5, seed=4)
    assert np.array_equal(s.train, s2.train)


def test_split_nodes_rejects_degenerate():
    with pytest.raises(ValueError):
        split_nodes(np.arange(10), 0.01, seed=0)
    with pytest.raises(ValueError):
        split_nodes(np.array([3]), 0.5, seed=0)


def test_split_edges_counts(default_synth):
    g, _ = default_synth
    m = len(g.edges)
    s = split_edges(g, 0.15, seed=9)
    k = int(round(0.15 * m))
    assert len(s.heldout_pos) == k
    assert len(s.heldout_neg) == k
    assert len(s.train_edges) == m - k


def test_split_edges_disjoint_and_valid(default_synth):
    g, _ = default_synth
    s = split_edges(g, 0.15, seed=9)
    train = {tuple(e) for e in s.train_edges}
    held = {tuple(e) for e in s.heldout_pos}
    negs = {tuple(e) for e in s.heldout_neg}
    assert train.isdisjoint(held)
    assert negs.isdisjoint(g.edge_set())
    assert all(u < v for u, v in negs)
    # deterministic
    s2 = split_edges(g, 0.15, seed=9)
    assert np.array_equal(s.heldout_neg, s2.heldout_neg)


def test_graph_roundtrip_through_files(tmp_path, small_synth):
    g, schema = small_synth
    ep = tmp_path / "edges.tsv"
    ap = tmp_path / "attrs.csv"
    save_graph(g, schema, ep, ap)
    g2 = load_graph(ep, ap, schema)
    assert g2.n == g.n
    assert np.array_equal(g2.edges, g.edges)
    for name in schema.names:
        assert np.array_equal(g2.attributes[name], g.attributes[name])
