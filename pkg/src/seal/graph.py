"""Attributed graphs: the bundle format, normalisation, synthetic graphs and splits."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .numerics import CsrMatrix, RngStream

log = logging.getLogger(__name__)

BUNDLE_FILES = ("meta.json", "edges.tsv", "features.srm", "labels.tsv")


class BundleError(ValueError):
    """A bundle directory is missing, malformed or violates an invariant."""


class InfeasibleSplit(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GraphBundle:
    name: str
    num_nodes: int
    num_features: int
    num_classes: int
    edges: np.ndarray          # (E, 2) int64, u < v, lexicographically sorted
    features: CsrMatrix        # (N, M)
    labels: np.ndarray         # (N,) int64

    def __post_init__(self):
        validate_bundle(self)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def __eq__(self, other):
        if not isinstance(other, GraphBundle):
            return NotImplemented
        return (self.name == other.name and self.num_nodes == other.num_nodes
                and self.num_features == other.num_features
                and self.num_classes == other.num_classes
                and np.array_equal(self.edges, other.edges)
                and self.features == other.features
                and np.array_equal(self.labels, other.labels))


def validate_bundle(b: GraphBundle) -> None:
    n, m, k = b.num_nodes, b.num_features, b.num_classes
    if n < 1 or m < 1 or k < 1:
        raise BundleError(f"{b.name}: num_nodes, num_features and num_classes must be positive")
    e = b.edges
    if e.ndim != 2 or e.shape[1] != 2:
        raise BundleError(f"{b.name}: edges must be an (E, 2) array")
    if e.size:
        if e.min() < 0 or e.max() >= n:
            raise BundleError(f"{b.name}: edge endpoint out of range [0, {n})")
        if np.any(e[:, 0] == e[:, 1]):
            raise BundleError(f"{b.name}: self-loop edge stored")
        if np.any(e[:, 0] > e[:, 1]):
            raise BundleError(f"{b.name}: edges must be stored with u < v")
        keys = e[:, 0] * n + e[:, 1]
        if np.unique(keys).size != keys.size:
            raise BundleError(f"{b.name}: duplicate undirected edge")
    if b.features.shape != (n, m):
        raise BundleError(f"{b.name}: features shape {b.features.shape} != ({n}, {m})")
    if np.any(b.features.data < 0):
        raise BundleError(f"{b.name}: negative feature value")
    if b.labels.shape != (n,):
        raise BundleError(f"{b.name}: expected {n} labels")
    if b.labels.min() < 0 or b.labels.max() >= k:
        raise BundleError(f"{b.name}: class id out of range [0, {k})")
    empty = np.flatnonzero(np.bincount(b.labels, minlength=k) == 0)
    if empty.size:
        raise BundleError(f"{b.name}: class {int(empty[0])} has no nodes")


def _canonical_edges(pairs, num_nodes):
    e = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    e = np.sort(e, axis=1)
    order = np.lexsort((e[:, 1], e[:, 0]))
    return e[order]


def make_bundle(name, num_nodes, num_features, num_classes, edges, features, labels) -> GraphBundle:
    """Build a validated bundle from loose arrays; ``features`` may be dense or scipy sparse."""
    if not isinstance(features, CsrMatrix):
        features = CsrMatrix.from_scipy(sp.csr_matrix(features))
    return GraphBundle(name, int(num_nodes), int(num_features), int(num_classes),
                       _canonical_edges(edges, num_nodes), features,
                       np.asarray(labels, dtype=np.int64))


# ---------------------------------------------------------------- bundle I/O

def _fail(path, lineno, msg):
    raise BundleError(f"{path}:{lineno}: {msg}")


def load_bundle(path) -> GraphBundle:
    path = Path(path)
    for fname in BUNDLE_FILES:
        if not (path / fname).is_file():
            raise BundleError(f"{path}: missing {fname}")

    meta_path = path / "meta.json"
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        name = str(meta["name"])
        n, m, k = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])
    except (ValueError, KeyError, TypeError) as exc:
        raise BundleError(f"{meta_path}: {exc}") from exc

    edges_path = path / "edges.tsv"
    pairs, seen, flipped = [], set(), 0
    with edges_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                _fail(edges_path, lineno, "expected 'u<TAB>v'")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                _fail(edges_path, lineno, "non-integer node id")
            if not (0 <= u < n and 0 <= v < n):
                _fail(edges_path, lineno, f"node id out of range [0, {n})")
            if u == v:
                _fail(edges_path, lineno, "self-loop edge")
            if u > v:
                flipped += 1
                u, v = v, u
            if (u, v) in seen:
                _fail(edges_path, lineno, f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            pairs.append((u, v))
    if flipped:
        log.warning("%s: %d edges listed with u > v; treated as undirected", edges_path, flipped)

    feat_path = path / "features.srm"
    rows, cols, vals, seen_nodes = [], [], [], np.zeros(n, dtype=bool)
    with feat_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if parts == [""]:
                continue
            try:
                node = int(parts[0])
            except ValueError:
                _fail(feat_path, lineno, "non-integer node id")
            if not 0 <= node < n:
                _fail(feat_path, lineno, f"node id out of range [0, {n})")
            if seen_nodes[node]:
                _fail(feat_path, lineno, f"node {node} listed twice")
            seen_nodes[node] = True
            if len(parts) < 2:
                _fail(feat_path, lineno, f"node {node} has no feature pairs")
            last = -1
            for tok in parts[1:]:
                try:
                    c, val = tok.split(":")
                    c, val = int(c), float(val)
                except ValueError:
                    _fail(feat_path, lineno, f"malformed pair {tok!r}")
                if not 0 <= c < m:
                    _fail(feat_path, lineno, f"column {c} out of range [0, {m})")
                if c <= last:
                    _fail(feat_path, lineno, "columns must be strictly increasing")
                if not np.isfinite(val) or val < 0:
                    _fail(feat_path, lineno, f"feature value {val} must be finite and non-negative")
                last = c
                rows.append(node)
                cols.append(c)
                vals.append(val)
    if not seen_nodes.all():
        raise BundleError(f"{feat_path}: no feature line for node {int(np.flatnonzero(~seen_nodes)[0])}")
    x = sp.csr_matrix((vals, (rows, cols)), shape=(n, m), dtype=np.float64)
    x.eliminate_zeros()
    zero_rows = np.flatnonzero(np.asarray(abs(x).sum(axis=1)).ravel() == 0)
    if zero_rows.size:
        log.warning("%s: %d nodes have all-zero features", feat_path, zero_rows.size)

    lab_path = path / "labels.tsv"
    labels = np.full(n, -1, dtype=np.int64)
    prev = -1
    with lab_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                _fail(lab_path, lineno, "expected 'node_id<TAB>class_id'")
            try:
                node, cls = int(parts[0]), int(parts[1])
            except ValueError:
                _fail(lab_path, lineno, "non-integer field")
            if not 0 <= node < n:
                _fail(lab_path, lineno, f"node id out of range [0, {n})")
            if node <= prev:
                _fail(lab_path, lineno, "node ids must be strictly ascending")
            if not 0 <= cls < k:
                _fail(lab_path, lineno, f"class id {cls} out of range [0, {k})")
            prev = node
            labels[node] = cls
    if np.any(labels < 0):
        raise BundleError(f"{lab_path}: no label for node {int(np.flatnonzero(labels < 0)[0])}")

    try:
        return GraphBundle(name, n, m, k, _canonical_edges(pairs, n), CsrMatrix.from_scipy(x), labels)
    except BundleError as exc:
        raise BundleError(f"{path}: {exc}") from exc


def save_bundle(bundle: GraphBundle, path) -> Path:
    """Write ``bundle`` in the directory format read by :func:`load_bundle`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {"name": bundle.name, "num_nodes": bundle.num_nodes,
            "num_features": bundle.num_features, "num_classes": bundle.num_classes}
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    with (path / "edges.tsv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{u}\t{v}\n" for u, v in bundle.edges.tolist())
    x = bundle.features
    with (path / "features.srm").open("w", encoding="utf-8", newline="\n") as fh:
        for i in range(bundle.num_nodes):
            lo, hi = x.indptr[i], x.indptr[i + 1]
            pairs = "\t".join(f"{c}:{format(v, '.17g')}" for c, v in zip(x.indices[lo:hi].tolist(), x.data[lo:hi].tolist()))
            fh.write(f"{i}\t{pairs}\n")
    with (path / "labels.tsv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{i}\t{c}\n" for i, c in enumerate(bundle.labels.tolist()))
    return path


# ---------------------------------------------------------------- adjacency

NormalizedAdjacency = CsrMatrix


def normalize_adjacency(bundle: GraphBundle) -> NormalizedAdjacency:
    """Symmetric renormalised adjacency with self-connections, in CSR."""
    n = bundle.num_nodes
    u, v = bundle.edges[:, 0], bundle.edges[:, 1]
    deg = np.bincount(np.concatenate([u, v]), minlength=n).astype(np.float64) + 1.0
    rows = np.concatenate([u, v, np.arange(n)])
    cols = np.concatenate([v, u, np.arange(n)])
    # product is commutative, so (i, j) and (j, i) get bitwise-equal values
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    return CsrMatrix.from_scipy(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))


# ---------------------------------------------------------------- synthetic graphs

def generate_synthetic(num_nodes, num_classes, num_features, edge_prob_in, edge_prob_out,
                       feature_signal, seed, feature_noise=0.02, name=None) -> GraphBundle:
    """Stochastic block model with class-correlated binary bag-of-words features.

    Class ``c`` owns feature columns ``[c*w, (c+1)*w)`` with
    ``w = num_features // (num_classes + 1)``; its nodes switch each of them on
    with probability ``feature_signal``. Every column is additionally switched
    on with probability ``feature_noise``.
    """
    if not 0 <= edge_prob_out < edge_prob_in <= 1:
        raise ValueError("need 0 <= edge_prob_out < edge_prob_in <= 1")
    if not 0 < feature_signal <= 1 or not 0 <= feature_noise < 1:
        raise ValueError("feature_signal must lie in (0, 1] and feature_noise in [0, 1)")
    if num_nodes < num_classes or num_classes < 1:
        raise ValueError("need num_nodes >= num_classes >= 1")
    if num_features < num_classes:
        raise ValueError("need num_features >= num_classes")

    root = RngStream(seed, "synthetic")
    g_lab = root.substream("labels").generator
    labels = g_lab.permutation(np.arange(num_nodes) % num_classes)

    g_edge = root.substream("edges").generator
    us, vs = [], []
    for i in range(num_nodes - 1):
        tail = labels[i + 1:]
        thresh = np.where(tail == labels[i], edge_prob_in, edge_prob_out)
        hits = np.flatnonzero(g_edge.random(tail.size) < thresh)
        if hits.size:
            us.append(np.full(hits.size, i))
            vs.append(hits + i + 1)
    if us:
        edges = np.stack([np.concatenate(us), np.concatenate(vs)], axis=1)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)

    g_feat = root.substream("features").generator
    width = max(1, num_features // (num_classes + 1))
    x = g_feat.random((num_nodes, num_features)) < feature_noise
    sig = g_feat.random((num_nodes, width)) < feature_signal
    for c in range(num_classes):
        members = labels == c
        x[members, c * width:(c + 1) * width] |= sig[members]
    empty = np.flatnonzero(~x.any(axis=1))
    if empty.size:
        x[empty, g_feat.integers(0, num_features, size=empty.size)] = True

    if name is None:
        name = f"sbm-n{num_nodes}-k{num_classes}-m{num_features}-s{seed}"
    return make_bundle(name, num_nodes, num_features, num_classes, edges,
                       sp.csr_matrix(x.astype(np.float64)), labels)


def parse_synthetic_spec(text: str) -> dict:
    """Parse ``N,K,M,pin,pout,signal`` as used on the command line."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 6:
        raise ValueError(f"synthetic spec needs N,K,M,pin,pout,signal; got {text!r}")
    return dict(num_nodes=int(parts[0]), num_classes=int(parts[1]), num_features=int(parts[2]),
                edge_prob_in=float(parts[3]), edge_prob_out=float(parts[4]),
                feature_signal=float(parts[5]))


# ---------------------------------------------------------------- splits

@dataclass(frozen=True, eq=False)
class SplitSpec:
    test_ids: np.ndarray
    val_ids: np.ndarray
    init_labeled_ids: np.ndarray
    seed_val: int
    seed_init: int
    test_seed: int = 0

    def pool_ids(self, num_nodes) -> np.ndarray:
        """Nodes eligible for the active-learning pools (not test, not validation)."""
        mask = np.ones(num_nodes, dtype=bool)
        mask[self.test_ids] = False
        mask[self.val_ids] = False
        return np.flatnonzero(mask)

    def __eq__(self, other):
        if not isinstance(other, SplitSpec):
            return NotImplemented
        return ((self.seed_val, self.seed_init, self.test_seed)
                == (other.seed_val, other.seed_init, other.test_seed)
                and np.array_equal(self.test_ids, other.test_ids)
                and np.array_equal(self.val_ids, other.val_ids)
                and np.array_equal(self.init_labeled_ids, other.init_labeled_ids))


def make_splits(bundle: GraphBundle, seed_val: int, seed_init: int, test_size=1000,
                val_size=500, per_class_init=4, test_seed=0) -> SplitSpec:
    """Draw test, validation and initial labelled sets.

    The test set depends only on ``test_seed`` so it stays fixed while the
    validation and initial-label seeds vary.
    """
    n, k = bundle.num_nodes, bundle.num_classes
    if test_size < 0 or val_size < 0 or per_class_init < 0:
        raise InfeasibleSplit("split sizes must be non-negative")
    if test_size + val_size + per_class_init * k > n:
        raise InfeasibleSplit(f"{test_size} + {val_size} + {per_class_init}*{k} exceeds {n} nodes")

    test = RngStream(test_seed, "split-test").generator.permutation(n)[:test_size]
    rest = np.setdiff1d(np.arange(n), test)
    val = RngStream(seed_val, "split-val").generator.permutation(rest)[:val_size]
    rest = np.setdiff1d(rest, val)

    g_init = RngStream(seed_init, "split-init").generator
    init = []
    for c in range(k):
        cand = rest[bundle.labels[rest] == c]
        if cand.size < per_class_init:
            raise InfeasibleSplit(f"class {c} has {cand.size} nodes outside test/val, "
                                  f"need {per_class_init}")
        init.append(g_init.choice(cand, size=per_class_init, replace=False))
    init = np.concatenate(init) if init else np.zeros(0, dtype=np.int64)
    return SplitSpec(np.sort(test), np.sort(val), np.sort(init).astype(np.int64),
                     int(seed_val), int(seed_init), int(test_seed))
