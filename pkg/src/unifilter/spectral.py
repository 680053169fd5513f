"""Spectral diagnostics for graph signals.

Signal frequency and Dirichlet energy are the two production metrics.
The dense eigendecomposition is a small-graph oracle used by tests and
diagnostics only; the node cap guards against accidental O(n^3) use.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, PropagationOperator, propagation_operator
from .rng import stream

DEFAULT_EIGEN_CAP = 500


def signal_frequency(g: Graph, x: np.ndarray, op: PropagationOperator | None = None) -> float:
    """Frequency of signal x: quadratic form of the normalized Laplacian, halved.

    x is unit-normalized internally. 0 means perfectly smooth, 1 maximally
    oscillating. Raises on the zero vector.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != g.n:
        raise ValueError(f"signal has {x.shape[0]} entries, graph has {g.n} nodes")
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        raise ValueError("zero signal")
    if op is None:
        op = propagation_operator(g)
    xn = x / nrm
    return _clamp_unit(0.5 * (1.0 - float(xn @ op.apply(xn))))


def matrix_frequencies(op: PropagationOperator, M: np.ndarray) -> np.ndarray:
    """Per-column signal frequency of an n x d matrix; NaN for zero columns."""
    M = np.asarray(M, dtype=np.float64)
    norms = np.linalg.norm(M, axis=0)
    safe = np.where(norms == 0.0, 1.0, norms)
    Mn = M / safe
    vals = 0.5 * (1.0 - np.sum(Mn * op.apply(Mn), axis=0))
    out = np.array([_clamp_unit(v) for v in vals], dtype=np.float64)
    out[norms == 0.0] = np.nan
    return out


def _clamp_unit(val: float, tol: float = 1e-12) -> float:
    # Only floating noise may leave [0, 1]; anything larger is a bug.
    if val < 0.0:
        if val < -tol:
            raise ValueError(f"frequency {val} below 0 beyond tolerance")
        return 0.0
    if val > 1.0:
        if val > 1.0 + tol:
            raise ValueError(f"frequency {val} above 1 beyond tolerance")
        return 1.0
    return float(val)


def dense_eigen_oracle(g: Graph, max_nodes: int = DEFAULT_EIGEN_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of the normalized Laplacian.

    Dense symmetric solve; refuses graphs above `max_nodes`.
    """
    if g.n > max_nodes:
        raise ValueError(f"graph has {g.n} nodes, above the dense solver cap {max_nodes}")
    op = propagation_operator(g)
    lap = np.eye(g.n) - op.to_dense()
    evals, evecs = np.linalg.eigh(lap)
    return evals, evecs


def dirichlet_energy(g: Graph, X: np.ndarray) -> float:
    """Mean squared neighbor difference of node representations.

    Iterates each undirected edge once and doubles (the sum over ordered
    neighbor pairs counts every edge twice), so results are bit-comparable
    across implementations.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != g.n:
        raise ValueError(f"matrix has {X.shape[0]} rows, graph has {g.n} nodes")
    e = g.edge_array()
    if e.shape[0] == 0:
        return 0.0
    diff = X[e[:, 0]] - X[e[:, 1]]
    return float(2.0 * np.sum(diff * diff) / g.n)


def expected_frequency_regular(n: int, alignment: float) -> float:
    """Closed-form expected frequency on random regular graphs.

    `alignment` is the inner product of the unit signal with the normalized
    all-ones vector. Monotonically decreasing in |alignment|.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    a = float(alignment)
    if abs(a) > 1.0 + 1e-12:
        raise ValueError("alignment must lie in [-1, 1]")
    return (n + 1 - 2.0 * a * a) / (4.0 * (n - 1))


def sample_regular_graph(n: int, degree: int, rng: np.random.Generator, max_restarts: int = 500) -> Graph:
    """Sample a simple `degree`-regular graph by random stub pairing.

    Pairs stubs uniformly at random, rejecting self-loops and multi-edges;
    restarts from scratch when the remaining stubs admit no valid pair.
    The resulting ensemble is vertex-exchangeable, so each node pair is an
    edge with probability degree/(n-1).
    """
    if degree < 1 or degree >= n:
        raise ValueError("degree must satisfy 1 <= degree < n")
    if (n * degree) % 2:
        raise ValueError("n * degree must be even")
    for _ in range(max_restarts):
        edges = _pair_stubs(n, degree, rng)
        if edges is not None:
            return Graph.from_edges(edges, n)
    raise RuntimeError(f"no simple {degree}-regular graph after {max_restarts} restarts")


def _pair_stubs(n: int, degree: int, rng: np.random.Generator) -> np.ndarray | None:
    stubs = np.repeat(np.arange(n), degree)
    seen: set[tuple[int, int]] = set()
    while stubs.size:
        stubs = rng.permutation(stubs)
        leftover: list[int] = []
        progress = False
        for a, b in zip(stubs[0::2].tolist(), stubs[1::2].tolist()):
            key = (a, b) if a < b else (b, a)
            if a == b or key in seen:
                leftover.append(a)
                leftover.append(b)
                continue
            seen.add(key)
            progress = True
        if leftover and not progress:
            return None
        stubs = np.asarray(leftover, dtype=np.int64)
    return np.array(sorted(seen), dtype=np.int64)


def aligned_unit_signal(n: int, alignment: float, rng: np.random.Generator) -> np.ndarray:
    """Random unit signal with a prescribed inner product against all-ones."""
    a = float(alignment)
    if abs(a) > 1.0:
        raise ValueError("alignment must lie in [-1, 1]")
    phi = np.full(n, 1.0 / np.sqrt(n))
    z = rng.standard_normal(n)
    z -= (z @ phi) * phi
    nz = np.linalg.norm(z)
    if nz == 0.0:
        raise ValueError("degenerate orthogonal draw")
    psi = z / nz
    return a * phi + np.sqrt(max(0.0, 1.0 - a * a)) * psi


def mc_expected_frequency(
    n: int,
    degree: int,
    alignments: np.ndarray,
    num_graphs: int = 2000,
    seed: int = 0,
) -> np.ndarray:
    """Monte-Carlo mean frequency per alignment over random regular graphs.

    A single orthogonal complement direction is drawn per seed and shared
    across alignments, and every alignment sees the same graph sequence,
    so the returned means are directly comparable across the grid.
    """
    alignments = np.asarray(alignments, dtype=np.float64)
    rng = stream(seed, "regular-graph-mc")
    signals = [aligned_unit_signal(n, a, stream(seed, "mc-signal")) for a in alignments]
    sums = np.zeros(alignments.shape[0])
    for _ in range(num_graphs):
        g = sample_regular_graph(n, degree, rng)
        e = g.edge_array()
        for i, x in enumerate(signals):
            d = x[e[:, 0]] - x[e[:, 1]]
            sums[i] += np.sum(d * d) / (2.0 * degree)
    return sums / num_graphs


@dataclass
class SpectrumReport:
    """Per-hop (frequency, learned weight) pairs averaged over feature columns."""

    entries: list[tuple[int, float, float]]
    kind: str
    dataset: str = ""

    def __post_init__(self) -> None:
        hops = [e[0] for e in self.entries]
        if hops != list(range(len(hops))):
            raise ValueError("entries must cover hops 0..K in order")
        for _, freq, _ in self.entries:
            if not (0.0 <= freq <= 1.0):
                raise ValueError(f"frequency {freq} outside [0, 1]")

    def write_csv(self, path: str | Path) -> None:
        lines = ["hop,frequency,weight"]
        for hop, freq, weight in self.entries:
            lines.append(f"{hop},{freq!r},{weight!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read_csv(cls, path: str | Path, kind: str = "", dataset: str = "") -> "SpectrumReport":
        rows = Path(path).read_text(encoding="utf-8").strip().splitlines()
        if not rows or rows[0] != "hop,frequency,weight":
            raise ValueError("not a spectrum CSV")
        entries = []
        for row in rows[1:]:
            h, f, w = row.split(",")
            entries.append((int(h), float(f), float(w)))
        return cls(entries=entries, kind=kind, dataset=dataset)
