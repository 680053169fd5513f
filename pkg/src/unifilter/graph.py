"""Sparse undirected graphs, normalized propagation operators, and edge homophily.

The graph is stored in compressed sparse row form with every undirected
edge kept in both directions. Graphs and operators are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

NO_SELF_LOOPS = "no-self-loops"
SELF_LOOPS = "self-loops"


@dataclass
class Graph:
    """Undirected graph: CSR adjacency plus a per-node degree vector.

    Invariants enforced at construction: symmetric adjacency, no
    self-loops, no duplicate edges, degrees[u] == len(neighbors(u)) and
    sum(degrees) == 2*m.
    """

    n: int
    m: int
    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray

    @classmethod
    def from_edges(cls, edges: np.ndarray, n: int) -> "Graph":
        """Build from an array of distinct undirected pairs with u < v."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        m = edges.shape[0]
        if m:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValueError("edges must satisfy u < v (no self-loops)")
            keys = edges[:, 0] * np.int64(n) + edges[:, 1]
            if np.unique(keys).size != m:
                raise ValueError("duplicate edges")
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        degrees = np.bincount(rows, minlength=n).astype(np.int64)
        indptr = np.concatenate([[0], np.cumsum(degrees)]).astype(np.int64)
        return cls(n=int(n), m=int(m), indptr=indptr, indices=cols, degrees=degrees)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def edge_array(self) -> np.ndarray:
        """Distinct undirected edges as an (m, 2) array with u < v."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v in self.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        return bool(seen.all())

    def is_bipartite(self) -> bool:
        color = np.full(self.n, -1, dtype=np.int8)
        for start in range(self.n):
            if color[start] >= 0:
                continue
            color[start] = 0
            stack = [start]
            while stack:
                u = stack.pop()
                for v in self.neighbors(u):
                    if color[v] < 0:
                        color[v] = 1 - color[u]
                        stack.append(int(v))
                    elif color[v] == color[u]:
                        return False
        return True


def load_graph(path: str | Path, n: int) -> Graph:
    """Parse a whitespace-separated, 0-indexed edge list file.

    Lines starting with '#' and blank lines are ignored. Self-loop lines
    are dropped (counted in a warning); duplicate and reversed pairs
    collapse to one undirected edge.
    """
    path = Path(path)
    edges: set[tuple[int, int]] = set()
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"expected 'u v' at line {lineno} of {path}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"non-integer node id at line {lineno} of {path}") from exc
            for idx in (u, v):
                if idx < 0:
                    raise ValueError(f"negative node index {idx} at line {lineno}")
                if idx >= n:
                    raise ValueError(f"node index {idx} >= n={n} at line {lineno}")
            if u == v:
                dropped += 1
                continue
            edges.add((u, v) if u < v else (v, u))
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} self-loop line(s)", stacklevel=2)
    arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return Graph.from_edges(arr, n)


@dataclass
class PropagationOperator:
    """One-hop diffusion P = I - L (or I - L_hat when self-loops are added).

    Never materialized densely; `apply` runs a sparse matrix product, so a
    single application costs O(m + n). The inverse square-root degree
    vector is cached on the instance.
    """

    kind: str
    graph: Graph
    dinv_sqrt: np.ndarray
    _matrix: sp.csr_matrix = field(repr=False)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.graph.n:
            raise ValueError(f"signal has {x.shape[0]} rows, graph has {self.graph.n} nodes")
        return self._matrix @ x

    def to_dense(self) -> np.ndarray:
        # Test/diagnostic path only; O(n^2) memory.
        return self._matrix.toarray()


def propagation_operator(g: Graph, kind: str = NO_SELF_LOOPS) -> PropagationOperator:
    """Build the symmetric-normalized propagation operator for `g`."""
    if kind not in (NO_SELF_LOOPS, SELF_LOOPS):
        raise ValueError(f"unknown propagation kind {kind!r}")
    if kind == NO_SELF_LOOPS:
        if np.any(g.degrees == 0):
            u = int(np.flatnonzero(g.degrees == 0)[0])
            raise ValueError(f"node {u} is isolated; kind {NO_SELF_LOOPS} needs degree >= 1")
        deff = g.degrees.astype(np.float64)
    else:
        deff = g.degrees.astype(np.float64) + 1.0
    dinv = 1.0 / np.sqrt(deff)
    rows = np.repeat(np.arange(g.n), g.degrees)
    data = dinv[rows] * dinv[g.indices]
    mat = sp.csr_matrix((data, g.indices.copy(), g.indptr.copy()), shape=(g.n, g.n))
    if kind == SELF_LOOPS:
        mat = (mat + sp.diags(dinv * dinv)).tocsr()
    return PropagationOperator(kind=kind, graph=g, dinv_sqrt=dinv, _matrix=mat)


def homophily_ratio(g: Graph, labels: np.ndarray) -> float:
    """Fraction of edges whose two endpoints carry the same class label."""
    labels = np.asarray(labels)
    if labels.shape[0] != g.n:
        raise ValueError("labels must cover all nodes")
    if g.m == 0:
        raise ValueError("empty edge set")
    e = g.edge_array()
    return float(np.count_nonzero(labels[e[:, 0]] == labels[e[:, 1]]) / g.m)


def estimate_homophily(g: Graph, labels: np.ndarray, train_mask: np.ndarray) -> float:
    """Homophily ratio over edges with BOTH endpoints in the training set.

    This is the only restriction rule that touches no held-out labels.
    Falls back to 0.5 (neutral) with a warning when no edge qualifies.
    """
    labels = np.asarray(labels)
    mask = _as_bool_mask(train_mask, g.n)
    if not mask.any():
        raise ValueError("train mask is empty")
    e = g.edge_array()
    keep = mask[e[:, 0]] & mask[e[:, 1]]
    total = int(np.count_nonzero(keep))
    if total == 0:
        warnings.warn(
            "no edge has both endpoints in the training set; "
            "falling back to homophily estimate 0.5",
            stacklevel=2,
        )
        return 0.5
    same = int(np.count_nonzero(labels[e[keep, 0]] == labels[e[keep, 1]]))
    return same / total


def _as_bool_mask(mask: np.ndarray, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape[0] != n:
            raise ValueError("boolean mask length mismatch")
        return mask
    out = np.zeros(n, dtype=bool)
    out[mask.astype(np.int64)] = True
    return out


@dataclass
class Split:
    """Disjoint train/val/test node index sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, n: int) -> None:
        parts = [np.asarray(p, dtype=np.int64) for p in (self.train, self.val, self.test)]
        allidx = np.concatenate(parts) if parts else np.empty(0, np.int64)
        if allidx.size and (allidx.min() < 0 or allidx.max() >= n):
            raise ValueError("split index out of range")
        if np.unique(allidx).size != allidx.size:
            raise ValueError("split sets overlap")

    def to_dict(self) -> dict:
        return {
            "train": [int(i) for i in self.train],
            "val": [int(i) for i in self.val],
            "test": [int(i) for i in self.test],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Split":
        return cls(
            train=np.asarray(d["train"], dtype=np.int64),
            val=np.asarray(d["val"], dtype=np.int64),
            test=np.asarray(d["test"], dtype=np.int64),
        )


@dataclass
class LabeledDataset:
    """Graph plus features, integer class labels, and an optional split."""

    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    split: Split | None
    num_classes: int

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.graph.n
        if self.features.shape[0] != n:
            raise ValueError(f"features have {self.features.shape[0]} rows, graph has {n} nodes")
        if self.labels.shape[0] != n:
            raise ValueError("labels must cover all nodes")
        if self.labels.min(initial=0) < 0 or (self.labels.size and self.labels.max() >= self.num_classes):
            raise ValueError("label id outside [0, num_classes)")
        if self.split is not None:
            self.split.validate(n)


def load_features(path: str | Path) -> np.ndarray:
    """CSV feature matrix, n rows x d columns, no header."""
    X = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return X


def load_labels(path: str | Path) -> np.ndarray:
    labels = np.loadtxt(path, dtype=np.int64, ndmin=1)
    if labels.ndim != 1:
        raise ValueError("label file must hold one integer per line")
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative")
    return labels


def load_split(path: str | Path) -> Split:
    with open(path, encoding="utf-8") as fh:
        return Split.from_dict(json.load(fh))


def load_dataset(
    edge_file: str | Path,
    feature_file: str | Path,
    label_file: str | Path,
    split_file: str | Path | None = None,
    num_classes: int | None = None,
) -> LabeledDataset:
    labels = load_labels(label_file)
    n = labels.shape[0]
    g = load_graph(edge_file, n)
    X = load_features(feature_file)
    split = load_split(split_file) if split_file is not None else None
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    return LabeledDataset(graph=g, features=X, labels=labels, split=split, num_classes=num_classes)
