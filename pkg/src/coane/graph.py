"""Attributed graphs: container, loaders and writers.

Node ids from input files are remapped to dense indices ``0..n-1`` in order of
first appearance; the original ids are kept in ``AttributedGraph.node_ids`` so
outputs can be written back with the caller's identifiers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

PathLike = Union[str, Path]


class GraphFormatError(ValueError):
    """A data file could not be parsed."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = str(path)
        self.lineno = lineno


class GraphValidationError(ValueError):
    pass


class DataWarning(UserWarning):
    pass


@dataclass(eq=False)
class AttributedGraph:
    adjacency: sp.csr_matrix
    X: Union[np.ndarray, sp.csr_matrix]
    node_ids: list = field(default_factory=list)
    labels: Optional[np.ndarray] = None  # -1 marks an unlabeled node
    label_names: list = field(default_factory=list)

    def __post_init__(self):
        self.adjacency = sp.csr_matrix(self.adjacency, dtype=np.float64)
        self.adjacency.sum_duplicates()
        self.adjacency.eliminate_zeros()
        self.adjacency.sort_indices()
        if sp.issparse(self.X):
            self.X = sp.csr_matrix(self.X, dtype=np.float64)
        else:
            self.X = np.asarray(self.X, dtype=np.float64)
            if self.X.ndim == 1:
                self.X = self.X.reshape(-1, 1)
        if not self.node_ids:
            self.node_ids = [str(i) for i in range(self.adjacency.shape[0])]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.adjacency.nnz // 2

    @property
    def density(self) -> float:
        n = self.n
        return 0.0 if n < 2 else 2.0 * self.num_edges / (n * (n - 1))

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            return 0
        return len(np.unique(self.labels[self.labels >= 0]))

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def edges(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with u < v, sorted."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        e = np.stack([coo.row, coo.col], axis=1).astype(np.int64)
        order = np.lexsort((e[:, 1], e[:, 0]))
        return e[order]

    def edge_weights(self) -> np.ndarray:
        e = self.edges()
        return np.asarray(self.adjacency[e[:, 0], e[:, 1]]).ravel()

    def attribute_rows(self, idx) -> np.ndarray:
        rows = self.X[idx]
        return rows.toarray() if sp.issparse(rows) else np.asarray(rows)

    def dense_attributes(self) -> np.ndarray:
        return self.X.toarray() if sp.issparse(self.X) else self.X

    def with_edges(self, edges: np.ndarray, weights=None) -> "AttributedGraph":
        """Same nodes, attributes and labels, different edge set."""
        adj = adjacency_from_edges(self.n, edges, weights)
        return replace(self, adjacency=adj)

    def validate(self) -> None:
        a = self.adjacency
        n = self.n
        if a.shape != (n, n):
            raise GraphValidationError(f"adjacency is not square: {a.shape}")
        if a.nnz and (a.indices.min() < 0 or a.indices.max() >= n):
            raise GraphValidationError("edge endpoint out of range")
        if a.nnz and a.data.min() <= 0:
            raise GraphValidationError("edge weights must be strictly positive")
        if a.diagonal().any():
            raise GraphValidationError("self-loops are not allowed")
        if (a != a.T).nnz:
            raise GraphValidationError("adjacency is not symmetric")
        if self.X.shape[0] != n:
            raise GraphValidationError(f"attribute matrix has {self.X.shape[0]} rows, expected {n}")
        vals = self.X.data if sp.issparse(self.X) else self.X
        if not np.all(np.isfinite(vals)):
            raise GraphValidationError("attribute matrix contains non-finite values")
        if self.labels is not None and len(self.labels) != n:
            raise GraphValidationError("label vector length does not match node count")
        if len(self.node_ids) != n:
            raise GraphValidationError("node id table length does not match node count")


def adjacency_from_edges(n: int, edges, weights=None) -> sp.csr_matrix:
    """Symmetric adjacency from undirected (u, v) pairs; duplicates keep the max weight."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if weights is None:
        weights = np.ones(len(edges))
    weights = np.asarray(weights, dtype=np.float64)
    u = np.concatenate([edges[:, 0], edges[:, 1]])
    v = np.concatenate([edges[:, 1], edges[:, 0]])
    w = np.concatenate([weights, weights])
    # max-combine duplicates: sort by weight so the last write wins in a dict-free way
    if len(u):
        key = u * n + v
        order = np.lexsort((w, key))
        key, w = key[order], w[order]
        last = np.r_[key[1:] != key[:-1], True]
        key, w = key[last], w[last]
        u, v = key // n, key % n
    adj = sp.csr_matrix((w, (u, v)), shape=(n, n))
    adj.sort_indices()
    return adj


def _data_lines(path: PathLike):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def _parse_float(path, lineno, tok) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise GraphFormatError(path, lineno, f"not a number: {tok!r}") from None
    if not np.isfinite(val):
        raise GraphFormatError(path, lineno, f"non-finite value: {tok!r}")
    return val


class _IdTable:
    def __init__(self, ids: Iterable[str] = ()):
        self.ids: list[str] = []
        self.index: dict[str, int] = {}
        for i in ids:
            self.add(i)

    def add(self, key: str) -> int:
        idx = self.index.get(key)
        if idx is None:
            idx = self.index[key] = len(self.ids)
            self.ids.append(key)
        return idx


def load_edge_list(path: PathLike, weighted: bool = False) -> AttributedGraph:
    """Read ``src dst [weight]`` lines into a graph with an empty (n x 0) attribute matrix."""
    table = _IdTable()
    pairs, weights = [], []
    for lineno, tok in _data_lines(path):
        if len(tok) not in (2, 3):
            raise GraphFormatError(path, lineno, f"expected 'src dst [weight]', got {len(tok)} fields")
        if tok[0] == tok[1]:
            raise GraphFormatError(path, lineno, f"self-loop on node {tok[0]!r}")
        w = 1.0
        if weighted and len(tok) == 3:
            w = _parse_float(path, lineno, tok[2])
            if w < 0:
                raise GraphValidationError(f"{path}:{lineno}: negative edge weight {w}")
            if w == 0:
                continue
        pairs.append((table.add(tok[0]), table.add(tok[1])))
        weights.append(w)
    n = len(table.ids)
    adj = adjacency_from_edges(n, np.array(pairs, dtype=np.int64).reshape(-1, 2), weights)
    g = AttributedGraph(adj, np.zeros((n, 0)), node_ids=table.ids)
    g.validate()
    return g


def load_attributes(graph: AttributedGraph, path: PathLike, format: str = "dense",
                    d: Optional[int] = None) -> AttributedGraph:
    """Attach attributes to ``graph``.

    Dense files start with a ``n d`` header followed by one row per node, either
    ``d`` values (rows in node-index order) or ``node_id`` plus ``d`` values.
    Sparse files hold ``node_id attr_index value`` triplets with an optional
    ``n d`` header; nodes without any triplet get a zero row.
    """
    index = {k: i for i, k in enumerate(graph.node_ids)}
    n = graph.n
    lines = _data_lines(path)
    if format == "dense":
        try:
            lineno, head = next(lines)
        except StopIteration:
            raise GraphFormatError(path, 0, "empty attribute file") from None
        if len(head) != 2:
            raise GraphFormatError(path, lineno, "dense attribute file needs an 'n d' header")
        n_decl, d_decl = int(head[0]), int(head[1])
        if n_decl != n:
            raise GraphFormatError(path, lineno, f"header declares {n_decl} nodes, graph has {n}")
        X = np.zeros((n, d_decl))
        seen = np.zeros(n, dtype=bool)
        for row, (lineno, tok) in enumerate(lines):
            if len(tok) == d_decl + 1:
                if tok[0] not in index:
                    raise GraphValidationError(f"{path}:{lineno}: unknown node id {tok[0]!r}")
                i, vals = index[tok[0]], tok[1:]
            elif len(tok) == d_decl:
                i, vals = row, tok
                if i >= n:
                    raise GraphFormatError(path, lineno, "more rows than nodes")
            else:
                raise GraphFormatError(path, lineno, f"expected {d_decl} values, got {len(tok)}")
            X[i] = [_parse_float(path, lineno, t) for t in vals]
            seen[i] = True
        if not seen.all():
            raise GraphFormatError(path, 0, f"{int((~seen).sum())} nodes have no attribute row")
        out = replace(graph, X=X)
    elif format in ("sparse", "sparse-triplet"):
        rows, cols, vals = [], [], []
        d_decl = d
        for lineno, tok in lines:
            if len(tok) == 2 and not rows:
                d_decl = int(tok[1]) if d_decl is None else d_decl
                continue
            if len(tok) != 3:
                raise GraphFormatError(path, lineno, "expected 'node_id attr_index value'")
            if tok[0] not in index:
                raise GraphValidationError(f"{path}:{lineno}: unknown node id {tok[0]!r}")
            col = int(tok[1])
            if col < 0 or (d_decl is not None and col >= d_decl):
                raise GraphValidationError(f"{path}:{lineno}: attribute index {col} out of range for d={d_decl}")
            rows.append(index[tok[0]])
            cols.append(col)
            vals.append(_parse_float(path, lineno, tok[2]))
        if d_decl is None:
            d_decl = max(cols) + 1 if cols else 0
        X = sp.csr_matrix((vals, (rows, cols)), shape=(n, d_decl))
        missing = np.setdiff1d(np.arange(n), np.unique(np.asarray(rows, dtype=np.int64)))
        if len(missing):
            warnings.warn(f"{len(missing)} nodes have no attributes in {path}; using zero rows",
                          DataWarning, stacklevel=2)
        out = replace(graph, X=X)
    else:
        raise ValueError(f"unknown attribute format {format!r}")
    out.validate()
    return out


def load_linqs_dataset(content_path: PathLike, cites_path: PathLike) -> AttributedGraph:
    """Load a LINQS ``.content``/``.cites`` pair (Cora, Citeseer, ...)."""
    table = _IdTable()
    rows, raw_labels = [], []
    arity = None
    for lineno, tok in _data_lines(content_path):
        if len(tok) < 2:
            raise GraphFormatError(content_path, lineno, "expected 'id attrs... label'")
        if arity is None:
            arity = len(tok) - 2
        elif len(tok) - 2 != arity:
            raise GraphFormatError(content_path, lineno,
                                   f"inconsistent attribute arity: {len(tok) - 2} vs {arity}")
        if tok[0] in table.index:
            raise GraphFormatError(content_path, lineno, f"duplicate node id {tok[0]!r}")
        table.add(tok[0])
        rows.append([_parse_float(content_path, lineno, t) for t in tok[1:-1]])
        raw_labels.append(tok[-1])
    n = len(table.ids)
    X = np.array(rows, dtype=np.float64).reshape(n, arity or 0)
    label_names = sorted(set(raw_labels))
    lab_index = {k: i for i, k in enumerate(label_names)}
    labels = np.array([lab_index[x] for x in raw_labels], dtype=np.int64)

    pairs = []
    dropped = loops = 0
    for lineno, tok in _data_lines(cites_path):
        if len(tok) != 2:
            raise GraphFormatError(cites_path, lineno, "expected 'id id'")
        a, b = table.index.get(tok[0]), table.index.get(tok[1])
        if a is None or b is None:
            dropped += 1
            continue
        if a == b:
            loops += 1
            continue
        pairs.append((a, b))
    if dropped:
        warnings.warn(f"dropped {dropped} citation links referencing unknown ids", DataWarning, stacklevel=2)
    if loops:
        warnings.warn(f"dropped {loops} self-citations", DataWarning, stacklevel=2)
    adj = adjacency_from_edges(n, np.array(pairs, dtype=np.int64).reshape(-1, 2))
    g = AttributedGraph(adj, X, node_ids=table.ids, labels=labels, label_names=label_names)
    g.validate()
    return g


def transition_distribution(graph: AttributedGraph, v: int) -> dict[int, float]:
    """One-step walk probabilities E_vj / sum_j E_vj over the neighbors of ``v``."""
    a = graph.adjacency
    lo, hi = a.indptr[v], a.indptr[v + 1]
    w = a.data[lo:hi]
    if hi == lo:
        return {}
    p = w / w.sum()
    return {int(j): float(q) for j, q in zip(a.indices[lo:hi], p)}


# --- writers -----------------------------------------------------------------

def write_edge_list(graph: AttributedGraph, path: PathLike, weighted: bool = False,
                    edges: Optional[np.ndarray] = None) -> None:
    e = graph.edges() if edges is None else np.asarray(edges)
    ids = graph.node_ids
    with open(path, "w", encoding="utf-8") as fh:
        if weighted:
            w = np.asarray(graph.adjacency[e[:, 0], e[:, 1]]).ravel() if len(e) else []
            for (u, v), x in zip(e, w):
                fh.write(f"{ids[u]}\t{ids[v]}\t{x!r}\n")
        else:
            for u, v in e:
                fh.write(f"{ids[u]}\t{ids[v]}\n")


def write_attributes(graph: AttributedGraph, path: PathLike, format: str = "dense") -> None:
    ids = graph.node_ids
    with open(path, "w", encoding="utf-8") as fh:
        if format == "dense":
            X = graph.dense_attributes()
            fh.write(f"{graph.n} {graph.d}\n")
            for i, row in enumerate(X):
                fh.write(ids[i] + " " + " ".join(repr(float(x)) for x in row) + "\n")
        else:
            X = sp.csr_matrix(graph.X)
            fh.write(f"{graph.n} {graph.d}\n")
            for i in range(graph.n):
                for j in range(X.indptr[i], X.indptr[i + 1]):
                    fh.write(f"{ids[i]} {X.indices[j]} {float(X.data[j])!r}\n")


def write_labels(graph: AttributedGraph, path: PathLike) -> None:
    if graph.labels is None:
        raise ValueError("graph has no labels")
    names = graph.label_names or [str(i) for i in range(int(graph.labels.max()) + 1)]
    with open(path, "w", encoding="utf-8") as fh:
        for i, lab in enumerate(graph.labels):
            if lab >= 0:
                fh.write(f"{graph.node_ids[i]} {names[lab]}\n")


def load_labels(graph: AttributedGraph, path: PathLike) -> AttributedGraph:
    index = {k: i for i, k in enumerate(graph.node_ids)}
    pairs = []
    for lineno, tok in _data_lines(path):
        if len(tok) != 2:
            raise GraphFormatError(path, lineno, "expected 'node_id label'")
        if tok[0] not in index:
            raise GraphValidationError(f"{path}:{lineno}: unknown node id {tok[0]!r}")
        pairs.append((index[tok[0]], tok[1]))
    names = sorted({lab for _, lab in pairs})
    lab_index = {k: i for i, k in enumerate(names)}
    labels = np.full(graph.n, -1, dtype=np.int64)
    for i, lab in pairs:
        labels[i] = lab_index[lab]
    return replace(graph, labels=labels, label_names=names)


def from_arrays(edges: Sequence, X=None, labels=None, n: Optional[int] = None) -> AttributedGraph:
    """Build a graph directly from index pairs; handy for tests and synthetic data."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(edges.max()) + 1 if len(edges) else (len(X) if X is not None else 0)
    if np.any(edges[:, 0] == edges[:, 1]):
        raise GraphValidationError("self-loops are not allowed")
    X = np.zeros((n, 0)) if X is None else X
    g = AttributedGraph(adjacency_from_edges(n, edges), X, labels=labels)
    g.validate()
    return g


def degree_placeholder_attributes(graph: AttributedGraph) -> AttributedGraph:
    """Drop the attributes, keeping a single max-scaled degree column.

    Used to train a structure-only model; the encoder still needs ``d >= 1``.
    """
    deg = np.asarray(graph.adjacency.getnnz(axis=1), dtype=np.float64)
    top = deg.max() if len(deg) and deg.max() > 0 else 1.0
    return replace(graph, X=(deg / top)[:, None])
