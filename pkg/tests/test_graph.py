import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seal.graph import (BundleError, GraphBundle, InfeasibleSplit, generate_synthetic,
                        load_bundle, make_bundle, make_splits, normalize_adjacency,
                        parse_synthetic_spec, save_bundle)


def write_bundle(path, n=3, k=2, m=2, edges="0\t1\n", labels=None, features=None, name="t"):
    path.mkdir(parents=True, exist_ok=True)
    (path / "meta.json").write_text(json.dumps(
        {"name": name, "num_nodes": n, "num_features": m, "num_classes": k}))
    (path / "edges.tsv").write_text(edges)
    if features is None:
        features = "".join(f"{i}\t{i % m}:1\n" for i in range(n))
    (path / "features.srm").write_text(features)
    if labels is None:
        labels = "0\t0\n1\t0\n2\t1\n"
    (path / "labels.tsv").write_text(labels)
    return path


def test_load_small_bundle(tmp_path):
    b = load_bundle(write_bundle(tmp_path / "b"))
    assert (b.num_nodes, b.num_classes, b.num_features) == (3, 2, 2)
    assert b.edges.tolist() == [[0, 1]]
    assert b.labels.tolist() == [0, 0, 1]


def test_duplicate_undirected_edge_rejected(tmp_path):
    with pytest.raises(BundleError, match="edges.tsv:2"):
        load_bundle(write_bundle(tmp_path / "b", edges="0\t1\n1\t0\n"))


def test_label_out_of_range(tmp_path):
    with pytest.raises(BundleError, match="labels.tsv:3"):
        load_bundle(write_bundle(tmp_path / "b", k=3, labels="0\t0\n1\t1\n2\t5\n"))


def test_empty_class_rejected(tmp_path):
    with pytest.raises(BundleError, match="class"):
        load_bundle(write_bundle(tmp_path / "b", k=3))


def test_missing_file(tmp_path):
    p = write_bundle(tmp_path / "b")
    (p / "labels.tsv").unlink()
    with pytest.raises(BundleError, match="labels.tsv"):
        load_bundle(p)


@pytest.mark.parametrize("edges,msg", [("0\t7\n", "out of range"), ("1\t1\n", "self-loop"),
                                       ("0 1 2\n", "expected"), ("a\tb\n", "non-integer")])
def test_malformed_edges(tmp_path, edges, msg):
    with pytest.raises(BundleError, match=msg):
        load_bundle(write_bundle(tmp_path / "b", edges=edges))


@pytest.mark.parametrize("features,msg", [
    ("0\t1:1\t0:1\n1\t0:1\n2\t1:1\n", "increasing"),
    ("0\n1\t0:1\n2\t1:1\n", "no feature pairs"),
    ("0\t0:-1\n1\t0:1\n2\t1:1\n", "non-negative"),
    ("0\t0:1\n2\t1:1\n", "node 1"),
    ("0\t0=1\n1\t0:1\n2\t1:1\n", "malformed"),
])
def test_malformed_features(tmp_path, features, msg):
    with pytest.raises(BundleError, match=msg):
        load_bundle(write_bundle(tmp_path / "b", features=features))


def test_reversed_edge_warns_and_is_symmetrised(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        b = load_bundle(write_bundle(tmp_path / "b", edges="1\t0\n"))
    assert b.edges.tolist() == [[0, 1]]
    assert "u > v" in caplog.text


def test_zero_feature_row_warns(tmp_path, caplog):
    feats = "0\t0:0\n1\t0:1\n2\t1:1\n"
    with caplog.at_level(logging.WARNING):
        load_bundle(write_bundle(tmp_path / "b", features=feats))
    assert "all-zero" in caplog.text


def test_normalize_examples():
    one = make_bundle("one", 1, 1, 1, [], np.ones((1, 1)), [0])
    assert normalize_adjacency(one).toarray().tolist() == [[1.0]]
    two = make_bundle("two", 2, 1, 1, [(0, 1)], np.ones((2, 1)), [0, 0])
    assert np.allclose(normalize_adjacency(two).toarray(), 0.5)
    tri = make_bundle("tri", 3, 1, 1, [(0, 1), (1, 2), (0, 2)], np.ones((3, 1)), [0, 0, 0])
    assert np.allclose(normalize_adjacency(tri).toarray(), 1 / 3)


def _dense_oracle(b: GraphBundle):
    a = np.eye(b.num_nodes)
    for u, v in b.edges:
        a[u, v] = a[v, u] = 1.0
    d = a.sum(axis=1)
    return a / np.sqrt(np.outer(d, d))


@given(st.integers(2, 25), st.floats(0.05, 0.9), st.integers(0, 10 ** 6))
@settings(max_examples=40)
def test_normalize_symmetric_and_matches_oracle(n, p, seed):
    b = generate_synthetic(n, 1, 3, p, 0.0, 0.5, seed=seed)
    a = normalize_adjacency(b).toarray()
    assert np.array_equal(a, a.T)
    assert np.allclose(a, _dense_oracle(b), atol=1e-15)
    pattern = _dense_oracle(b) > 0
    assert np.array_equal(a != 0, pattern)


def test_regular_graph_entries():
    n = 8   # cycle: 2-regular
    b = make_bundle("cyc", n, 1, 1, [(i, (i + 1) % n) for i in range(n)], np.ones((n, 1)), [0] * n)
    a = normalize_adjacency(b)
    assert np.allclose(a.data, 1 / 3)


def test_synthetic_deterministic_and_balanced():
    a = generate_synthetic(12, 3, 6, 0.5, 0.1, 0.5, seed=7)
    b = generate_synthetic(12, 3, 6, 0.5, 0.1, 0.5, seed=7)
    assert a == b
    counts = np.bincount(generate_synthetic(100, 3, 9, 0.2, 0.01, 0.5, seed=2).labels)
    assert counts.max() - counts.min() <= 1


def test_synthetic_cliques():
    b = generate_synthetic(12, 3, 6, 1.0, 0.0, 0.5, seed=0)
    same = b.labels[b.edges[:, 0]] == b.labels[b.edges[:, 1]]
    assert same.all()
    assert b.num_edges == 3 * (4 * 3 // 2)


def test_synthetic_rows_nonempty_and_signal_blocks():
    b = generate_synthetic(300, 3, 40, 0.05, 0.005, 0.8, seed=3, feature_noise=0.0)
    x = b.features.toarray()
    assert (x.sum(axis=1) > 0).all()
    w = 40 // 4
    for c in range(3):
        block = x[b.labels == c][:, c * w:(c + 1) * w]
        assert abs(block.mean() - 0.8) < 0.05


def test_synthetic_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        generate_synthetic(10, 2, 4, 0.1, 0.2, 0.5, seed=0)
    with pytest.raises(ValueError):
        generate_synthetic(10, 2, 4, 0.3, 0.1, 0.0, seed=0)


def test_parse_synthetic_spec():
    d = parse_synthetic_spec("400,3,60,0.05,0.005,0.3")
    assert d == dict(num_nodes=400, num_classes=3, num_features=60, edge_prob_in=0.05,
                     edge_prob_out=0.005, feature_signal=0.3)
    with pytest.raises(ValueError):
        parse_synthetic_spec("1,2,3")


@given(st.integers(3, 40), st.integers(1, 4), st.integers(0, 1000))
@settings(max_examples=25)
def test_save_load_roundtrip(tmp_path_factory, n, k, seed):
    k = min(k, n)
    b = generate_synthetic(n, k, 7, 0.4, 0.05, 0.6, seed=seed)
    path = tmp_path_factory.mktemp("rt")
    assert load_bundle(save_bundle(b, path)) == b


def test_splits_cora_shape():
    b = generate_synthetic(2708, 7, 20, 0.002, 0.0002, 0.3, seed=0)
    s = make_splits(b, 0, 0)
    assert s.init_labeled_ids.size == 28
    assert (s.test_ids.size, s.val_ids.size) == (1000, 500)
    assert not set(s.test_ids) & set(s.val_ids)
    assert not set(s.init_labeled_ids) & (set(s.test_ids) | set(s.val_ids))
    assert np.all(np.bincount(b.labels[s.init_labeled_ids], minlength=7) == 4)
    assert make_splits(b, 0, 0) == s
    other = make_splits(b, 3, 4)
    assert np.array_equal(other.test_ids, s.test_ids)   # fixed by the test seed
    assert not np.array_equal(other.val_ids, s.val_ids)


def test_splits_infeasible_class():
    labels = [0] * 20 + [1] * 3
    b = make_bundle("tiny", 23, 1, 2, [], np.ones((23, 1)), labels)
    with pytest.raises(InfeasibleSplit):
        make_splits(b, 0, 0, test_size=0, val_size=0, per_class_init=4)
    with pytest.raises(InfeasibleSplit):
        make_splits(b, 0, 0, test_size=20, val_size=5)
