"""Graph data model, file I/O, adjacency normalization, and splits.

Node identifiers are dense 0-based integers internally; the loader remaps
arbitrary integer ids from the attribute file and keeps the original ids
around as ``Graph.node_ids``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .numkit import Rng, derive_seed


class InputError(ValueError):
    """A data file or schema is malformed."""


ROLES = ("private", "utility", "feature")


@dataclass(frozen=True)
class AttributeSchema:
    """Declares the categorical node attributes and their privacy roles.

    Codes run 1..M per attribute; code 0 marks a missing value. Exactly one
    attribute is private and at least one is utility.
    """

    names: tuple
    classes: dict
    roles: dict

    def __post_init__(self):
        if not self.names:
            raise InputError("schema declares no attributes")
        if len(set(self.names)) != len(self.names):
            raise InputError("duplicate attribute names in schema")
        for name in self.names:
            if name not in self.classes or name not in self.roles:
                raise InputError(f"attribute '{name}' missing classes or role")
            if self.roles[name] not in ROLES:
                raise InputError(f"unknown role '{self.roles[name]}' for '{name}'")
            m = self.classes[name]
            if not isinstance(m, int) or m < 1:
                raise InputError(f"attribute '{name}' needs a positive class count")
            if self.roles[name] in ("private", "utility") and m < 2:
                raise InputError(f"attribute '{name}' needs at least 2 classes")
        private = [n for n in self.names if self.roles[n] == "private"]
        if len(private) != 1:
            raise InputError("schema must declare exactly one private attribute")
        if not any(self.roles[n] == "utility" for n in self.names):
            raise InputError("schema must declare at least one utility attribute")

    @classmethod
    def from_config(cls, mapping: dict) -> "AttributeSchema":
        """Build from ``{name: {"classes": M, "role": role}}`` preserving order."""
        names = tuple(mapping)
        classes = {}
        roles = {}
        for name, entry in mapping.items():
            if not isinstance(entry, dict):
                raise InputError(f"schema entry for '{name}' must be an object")
            classes[name] = entry.get("classes")
            roles[name] = entry.get("role")
        return cls(names=names, classes=classes, roles=roles)

    @property
    def private_attribute(self) -> str:
        return next(n for n in self.names if self.roles[n] == "private")

    @property
    def utility_attributes(self) -> tuple:
        return tuple(n for n in self.names if self.roles[n] == "utility")

    @property
    def feature_attributes(self) -> tuple:
        return tuple(n for n in self.names if self.roles[n] == "feature")

    def width(self, exclude=()) -> int:
        return sum(self.classes[n] for n in self.names if n not in exclude)


def canonical_edges(pairs, n: int) -> np.ndarray:
    """Normalize to unique (u, v) rows with u < v, sorted lexicographically."""
    seen = set()
    for u, v in pairs:
        u = int(u)
        v = int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise InputError(f"edge endpoint out of range: ({u}, {v})")
        if u == v:
            continue
        seen.add((u, v) if u < v else (v, u))
    if not seen:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(seen), dtype=np.int64)


@dataclass
class Graph:
    """Undirected simple graph with integer-coded node attributes."""

    n: int
    edges: np.ndarray
    attributes: dict
    node_ids: tuple = None

    def __post_init__(self):
        if self.n < 1:
            raise InputError("graph needs at least one node")
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= self.n:
                raise InputError("edge endpoint out of range")
            if np.any(self.edges[:, 0] >= self.edges[:, 1]):
                raise InputError("edges must satisfy u < v")
        for name, codes in self.attributes.items():
            codes = np.asarray(codes, dtype=np.int64)
            if codes.shape != (self.n,):
                raise InputError(f"attribute '{name}' must have one code per node")
            self.attributes[name] = codes

    def edge_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.edges}


def _open_maybe(src, mode="r"):
    if hasattr(src, "read"):
        return src, False
    return open(Path(src), mode, encoding="utf-8", newline=""), True


def load_graph(edge_src, attribute_src, schema: AttributeSchema) -> Graph:
    """Load a graph from an edge list and an attribute table.

    Edge file: UTF-8 text, one edge per line as two base-10 integers
    separated by a tab; lines starting with '#' are comments. Self-loops are
    dropped and duplicate edges collapse. Attribute file: CSV with header
    ``node_id,<attr>,...``; every schema attribute must appear, codes are
    integers in 0..M with 0 meaning missing.
    """
    fh, close = _open_maybe(attribute_src)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("attribute file is empty")
        header = [h.strip() for h in header]
        if not header or header[0] != "node_id":
            raise InputError("attribute header must start with 'node_id'")
        cols = header[1:]
        if set(cols) != set(schema.names):
            raise InputError("attribute columns do not match the schema")
        index = {}
        raw_ids = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"attribute line {lineno}: expected {len(header)} fields")
            try:
                node = int(row[0])
                codes = [int(c) for c in row[1:]]
            except ValueError:
                raise InputError(f"attribute line {lineno}: non-integer value")
            if node in index:
                raise InputError(f"attribute line {lineno}: duplicate node id {node}")
            index[node] = len(raw_ids)
            raw_ids.append(node)
            rows.append(codes)
    finally:
        if close:
            fh.close()
    if not raw_ids:
        raise InputError("attribute file declares no nodes")

    n = len(raw_ids)
    attributes = {}
    for j, name in enumerate(cols):
        m = schema.classes[name]
        col = np.array([r[j] for r in rows], dtype=np.int64)
        bad = (col < 0) | (col > m)
        if np.any(bad):
            where = int(np.where(bad)[0][0])
            raise InputError(
                f"attribute '{name}': code {int(col[where])} out of range 0..{m} "
                f"for node {raw_ids[where]}")
        attributes[name] = col

    fh, close = _open_maybe(edge_src)
    try:
        pairs = []
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InputError(f"edge line {lineno}: expected two tab-separated integers")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise InputError(f"edge line {lineno}: non-integer endpoint")
            if a not in index or b not in index:
                missing = a if a not in index else b
                raise InputError(f"edge line {lineno}: unknown node id {missing}")
            pairs.append((index[a], index[b]))
    finally:
        if close:
            fh.close()

    edges = canonical_edges(pairs, n)
    ordered = {name: attributes[name] for name in schema.names}
    return Graph(n=n, edges=edges, attributes=ordered, node_ids=tuple(raw_ids))


def save_graph(g: Graph, schema: AttributeSchema, edges_path, attributes_path) -> None:
    """Write a graph in the formats ``load_graph`` reads, with dense ids."""
    with open(edges_path, "w", encoding="utf-8") as fh:
        for u, v in g.edges:
            fh.write(f"{int(u)}\t{int(v)}\n")
    with open(attributes_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id"] + list(schema.names))
        for i in range(g.n):
            writer.writerow([i] + [int(g.attributes[name][i]) for name in schema.names])


def adjacency_with_self_loops(n: int, edges: np.ndarray) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency over the given edges plus the identity."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1], np.arange(n)])
    cols = np.concatenate([edges[:, 1], edges[:, 0], np.arange(n)])
    data = np.ones(rows.size, dtype=np.float64)
    a = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    a.sum_duplicates()
    a.sort_indices()
    return a


def normalize_adjacency(g: Graph, edges: np.ndarray = None) -> sp.csr_matrix:
    """Symmetrically normalized self-looped adjacency D^-1/2 (A+I) D^-1/2."""
    if edges is None:
        edges = g.edges
    else:
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        allowed = g.edge_set()
        for u, v in edges:
            if (int(u), int(v)) not in allowed:
                raise ValueError(f"edge ({int(u)}, {int(v)}) is not in the graph")
    a = adjacency_with_self_loops(g.n, edges)
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    coo = a.tocoo()
    data = inv_sqrt[coo.row] * inv_sqrt[coo.col]
    lap = sp.csr_matrix((data, (coo.row, coo.col)), shape=a.shape)
    lap.sort_indices()
    return lap


def build_features(g: Graph, schema: AttributeSchema, exclude=()) -> np.ndarray:
    """Stack one-hot blocks for every attribute not excluded.

    Missing codes produce an all-zero block row.
    """
    for name in exclude:
        if name not in schema.names:
            raise ValueError(f"cannot exclude unknown attribute '{name}'")
    width = schema.width(exclude)
    x = np.zeros((g.n, width), dtype=np.float64)
    offset = 0
    for name in schema.names:
        if name in exclude:
            continue
        codes = g.attributes[name]
        labeled = np.where(codes > 0)[0]
        x[labeled, offset + codes[labeled] - 1] = 1.0
        offset += schema.classes[name]
    return x


def onehot_labels(g: Graph, schema: AttributeSchema, name: str):
    """Return (onehot [n x M], mask of labeled node indices) for one attribute."""
    if name not in schema.names:
        raise ValueError(f"unknown attribute '{name}'")
    codes = g.attributes[name]
    m = schema.classes[name]
    y = np.zeros((g.n, m), dtype=np.float64)
    mask = np.where(codes > 0)[0]
    y[mask, codes[mask] - 1] = 1.0
    return y, mask


@dataclass
class NodeSplit:
    train: np.ndarray
    test: np.ndarray
    seed: int


def split_nodes(mask, fraction: float, seed: int) -> NodeSplit:
    """Shuffle the labeled nodes and cut them train/test at ``fraction``."""
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size < 2:
        raise ValueError("need at least two labeled nodes to split")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be strictly between 0 and 1")
    shuffled = mask[Rng(seed).permutation(mask.size)]
    k = int(round(fraction * mask.size))
    if k == 0 or k == mask.size:
        raise ValueError("fraction leaves an empty split side")
    return NodeSplit(train=np.sort(shuffled[:k]), test=np.sort(shuffled[k:]), seed=seed)


@dataclass
class EdgeSplit:
    train_edges: np.ndarray
    heldout_pos: np.ndarray
    heldout_neg: np.ndarray
    seed: int


def split_edges(g: Graph, holdout: float, seed: int) -> EdgeSplit:
    """Hold out a fraction of edges plus an equal number of sampled non-edges.

    Held-out pairs never reach training, so link evaluation is uncontaminated.
    """
    if not 0.0 < holdout < 1.0:
        raise ValueError("holdout must be strictly between 0 and 1")
    m = len(g.edges)
    if m < 2:
        raise ValueError("graph has too few edges to split")
    k = int(round(holdout * m))
    if k == 0 or k == m:
        raise ValueError("holdout leaves an empty split side")
    rng = Rng(seed)
    perm = rng.permutation(m)
    held = g.edges[np.sort(perm[:k])]
    train = g.edges[np.sort(perm[k:])]
    existing = g.edge_set()
    max_neg = g.n * (g.n - 1) // 2 - m
    if k > max_neg:
        raise ValueError("not enough non-edges to mirror the held-out set")
    negatives = []
    seen = set()
    while len(negatives) < k:
        u = int(rng.integers(0, g.n))
        v = int(rng.integers(0, g.n))
        if u == v:
            continue
        e = (u, v) if u < v else (v, u)
        if e in existing or e in seen:
            continue
        seen.add(e)
        negatives.append(e)
    heldout_neg = np.array(sorted(negatives), dtype=np.int64)
    return EdgeSplit(train_edges=train, heldout_pos=held, heldout_neg=heldout_neg, seed=seed)
