"""Polynomial signal bases: homophily, orthonormal auxiliary, adaptive heterophily, blended.

All constructors are per-column independent: column j of every hop matrix
depends only on column j of the input, so construction may be vectorized
or parallelized across columns without changing results.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, PropagationOperator, propagation_operator
from .spectral import matrix_frequencies

HOMOPHILY = "homophily"
HETEROPHILY = "heterophily"
ORTHONORMAL = "orthonormal"
UNI = "uni"

# A column dies (Krylov exhaustion) when the recurrence residual drops below this.
EXHAUSTION_TOL = 1e-10
# Below this cos(theta) the update factor overflows; the exact limit is u_k = v_k.
COS_UNDERFLOW_TOL = 1e-8
_ZERO_NORM = 1e-300


@dataclass
class BasisTensor:
    """K+1 hop matrices (each n x d) tagged with their construction recipe.

    `degenerate_columns` lists columns where construction degenerated:
    zero input columns, or columns whose Krylov subspace was exhausted
    before hop K. `clamp_events` counts update-factor radicands clipped
    to zero against floating error.
    """

    kind: str
    hops: int
    matrices: np.ndarray
    theta: float | None = None
    tau: float | None = None
    degenerate_columns: frozenset[int] = frozenset()
    clamp_events: int = 0

    def __post_init__(self) -> None:
        if self.matrices.shape[0] != self.hops + 1:
            raise ValueError("matrices must hold exactly hops+1 entries")

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    @property
    def columns(self) -> int:
        return self.matrices.shape[2]


def _as_columns(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("signal matrix must be 1-D or 2-D")
    return X


def _normalize_columns(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(M, axis=0)
    dead = norms < _ZERO_NORM
    out = M / np.where(dead, 1.0, norms)
    out[:, dead] = 0.0
    return out, dead


def homophily_basis(
    op: PropagationOperator,
    X: np.ndarray,
    hops: int,
    normalize: bool = True,
) -> BasisTensor:
    """Repeated one-hop propagation of X: hop k holds the k-fold diffusion.

    Columns are unit-normalized per hop by default so that downstream
    blending mixes unit-scale parts; `normalize=False` keeps the raw
    powers. K successive sparse applications, O(K (m+n) d) total.
    """
    if hops < 0:
        raise ValueError("hops must be >= 0")
    X = _as_columns(X)
    n, d = X.shape
    out = np.empty((hops + 1, n, d), dtype=np.float64)
    degenerate: set[int] = set()
    cur = X
    if normalize:
        cur, dead = _normalize_columns(X)
        degenerate.update(np.flatnonzero(dead).tolist())
    out[0] = cur
    for k in range(1, hops + 1):
        cur = op.apply(cur)
        if normalize:
            cur, dead = _normalize_columns(cur)
            degenerate.update(np.flatnonzero(dead).tolist())
        out[k] = cur
    return BasisTensor(
        kind=HOMOPHILY,
        hops=hops,
        matrices=out,
        degenerate_columns=frozenset(degenerate),
    )


def orthonormal_basis(
    op: PropagationOperator,
    X: np.ndarray,
    hops: int,
    reortho: bool = False,
) -> BasisTensor:
    """Per-column orthonormal Krylov basis from the three-term recurrence.

    Each new vector is the propagated previous one, orthogonalized against
    the two predecessors and renormalized. With `reortho` every new vector
    is additionally orthogonalized against the full history (two passes),
    trading the O(K (m+n)) cost for floating-point orthogonality near
    machine precision. Exhausted columns emit zero vectors from the hop
    where the residual vanished and are flagged degenerate.
    """
    if hops < 0:
        raise ValueError("hops must be >= 0")
    X = _as_columns(X)
    n, d = X.shape
    V = np.zeros((hops + 1, n, d), dtype=np.float64)
    v0, zero = _normalize_columns(X)
    degenerate: set[int] = set(np.flatnonzero(zero).tolist())
    V[0] = v0
    alive = ~zero
    vprev = v0.copy()
    vprev2 = np.zeros_like(v0)
    exhausted = 0
    for k in range(1, hops + 1):
        v = op.apply(vprev)
        v -= np.sum(v * vprev, axis=0) * vprev
        v -= np.sum(v * vprev2, axis=0) * vprev2
        if reortho:
            for _ in range(2):
                for j in range(k):
                    v -= np.sum(v * V[j], axis=0) * V[j]
        norms = np.linalg.norm(v, axis=0)
        died = alive & (norms < EXHAUSTION_TOL)
        if died.any():
            exhausted += int(np.count_nonzero(died))
            degenerate.update(np.flatnonzero(died).tolist())
            alive &= ~died
        v /= np.where(norms < EXHAUSTION_TOL, 1.0, norms)
        v[:, ~alive] = 0.0
        V[k] = v
        vprev2 = vprev
        vprev = v
    if exhausted:
        warnings.warn(f"{exhausted} column(s) exhausted their Krylov subspace", stacklevel=2)
    return BasisTensor(
        kind=ORTHONORMAL,
        hops=hops,
        matrices=V,
        degenerate_columns=frozenset(degenerate),
    )


def update_factor(s_dot_u: np.ndarray, k: int, cos_theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Mixing weight for the new orthogonal direction at step k.

    Negative radicands (floating error only) are clamped to zero; the
    returned mask marks which entries were clipped.
    """
    rad = (s_dot_u / (k * cos_theta)) ** 2 - ((k - 1) * cos_theta + 1.0) / k
    neg = rad < 0.0
    return np.sqrt(np.clip(rad, 0.0, None)), neg


def heterophily_basis(
    op: PropagationOperator,
    X: np.ndarray,
    hops: int,
    h_hat: float,
    reortho: bool = False,
) -> BasisTensor:
    """Adaptive basis whose vectors pairwise form the angle (1 - h_hat) * pi/2.

    Per column: start from the normalized signal, then repeatedly mix the
    running mean of previous vectors with a fresh orthonormal direction,
    weighted so every pair of outputs meets at the target angle. When
    cos(theta) underflows (h_hat ~ 0) the update degenerates to taking the
    orthonormal direction itself, which is its exact limit. Exhausted
    columns freeze at their last valid vector; zero input columns emit
    zeros throughout.
    """
    if not 0.0 <= h_hat <= 1.0:
        raise ValueError("h_hat must lie in [0, 1]")
    if hops < 0:
        raise ValueError("hops must be >= 0")
    X = _as_columns(X)
    n, d = X.shape
    theta = 0.5 * np.pi * (1.0 - h_hat)
    c = float(np.cos(theta))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vbasis = orthonormal_basis(op, X, hops, reortho=reortho)
    V = vbasis.matrices
    zero = np.zeros(d, dtype=bool)
    zero[[j for j in vbasis.degenerate_columns if np.linalg.norm(X[:, j]) < _ZERO_NORM]] = True

    U = np.zeros((hops + 1, n, d), dtype=np.float64)
    u0, _ = _normalize_columns(X)
    U[0] = u0
    s = u0.copy()
    clamps = 0
    exhausted_cols: set[int] = set()
    for k in range(1, hops + 1):
        vk = V[k]
        alive = (np.linalg.norm(vk, axis=0) > 0.5) & ~zero
        dead = ~alive
        if c < COS_UNDERFLOW_TOL:
            unew = vk
        else:
            s_dot_u = np.sum(s * U[k - 1], axis=0)
            t, clipped = update_factor(s_dot_u, k, c)
            clamps += int(np.count_nonzero(clipped & alive))
            unew = s / k + t * vk
            norms = np.linalg.norm(unew, axis=0)
            unew = unew / np.where(norms < _ZERO_NORM, 1.0, norms)
        U[k] = np.where(alive[None, :], unew, U[k - 1])
        exhausted_cols.update(np.flatnonzero(dead & ~zero).tolist())
        s = s + U[k]
    if exhausted_cols:
        warnings.warn(
            f"{len(exhausted_cols)} column(s) froze after Krylov exhaustion", stacklevel=2
        )
    degenerate = set(vbasis.degenerate_columns) | set(np.flatnonzero(zero).tolist())
    return BasisTensor(
        kind=HETEROPHILY,
        hops=hops,
        matrices=U,
        theta=theta,
        degenerate_columns=frozenset(degenerate),
        clamp_events=clamps,
    )


def unibasis(
    op: PropagationOperator,
    X: np.ndarray,
    hops: int,
    h_hat: float,
    tau: float,
    reortho: bool = False,
    normalize_homophily: bool = True,
) -> BasisTensor:
    """Convex blend of the homophily and heterophily bases, hop by hop.

    tau=1 reproduces the homophily basis bit for bit and skips the
    heterophily construction entirely; tau=0 likewise returns the
    heterophily basis unchanged.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    theta = 0.5 * np.pi * (1.0 - h_hat)
    if tau == 1.0:
        hom = homophily_basis(op, X, hops, normalize=normalize_homophily)
        return BasisTensor(
            kind=UNI,
            hops=hops,
            matrices=hom.matrices,
            theta=theta,
            tau=tau,
            degenerate_columns=hom.degenerate_columns,
        )
    het = heterophily_basis(op, X, hops, h_hat, reortho=reortho)
    if tau == 0.0:
        return BasisTensor(
            kind=UNI,
            hops=hops,
            matrices=het.matrices,
            theta=theta,
            tau=tau,
            degenerate_columns=het.degenerate_columns,
            clamp_events=het.clamp_events,
        )
    hom = homophily_basis(op, X, hops, normalize=normalize_homophily)
    blend = tau * hom.matrices + (1.0 - tau) * het.matrices
    return BasisTensor(
        kind=UNI,
        hops=hops,
        matrices=blend,
        theta=theta,
        tau=tau,
        degenerate_columns=hom.degenerate_columns | het.degenerate_columns,
        clamp_events=het.clamp_events,
    )


def basis_spectrum(g: Graph, b: BasisTensor) -> list[float]:
    """Mean per-hop signal frequency over usable (non-degenerate, nonzero) columns."""
    if b.n != g.n:
        raise ValueError("basis was not constructed on this graph")
    keep = np.ones(b.columns, dtype=bool)
    keep[list(b.degenerate_columns)] = False
    if not keep.any():
        raise ValueError("all basis columns are degenerate")
    op = propagation_operator(g)
    out: list[float] = []
    for k in range(b.hops + 1):
        freqs = matrix_frequencies(op, b.matrices[k][:, keep])
        valid = ~np.isnan(freqs)
        if not valid.any():
            raise ValueError(f"no usable column at hop {k}")
        out.append(float(freqs[valid].mean()))
    return out


def pairwise_hop_gram(b: BasisTensor) -> np.ndarray:
    """Gram matrices between hop vectors, one (K+1 x K+1) slab per column."""
    M = b.matrices
    return np.einsum("knd,jnd->kjd", M, M)


def angle_law_deviation(b: BasisTensor) -> tuple[float, float]:
    """Max deviation of (off-diagonal, diagonal) hop inner products from
    (cos theta, 1), over non-degenerate columns."""
    if b.theta is None:
        raise ValueError("basis carries no angle")
    keep = np.ones(b.columns, dtype=bool)
    keep[list(b.degenerate_columns)] = False
    if not keep.any():
        raise ValueError("all columns degenerate")
    gram = pairwise_hop_gram(b)[:, :, keep]
    kk = b.hops + 1
    eye = np.eye(kk, dtype=bool)
    off = np.abs(gram[~eye] - np.cos(b.theta)).max() if kk > 1 else 0.0
    diag = np.abs(gram[eye] - 1.0).max()
    return float(off), float(diag)


def orthonormality_deviation(b: BasisTensor) -> float:
    """Max deviation of hop-vector Gram matrices from identity, per column."""
    keep = np.ones(b.columns, dtype=bool)
    keep[list(b.degenerate_columns)] = False
    if not keep.any():
        raise ValueError("all columns degenerate")
    gram = pairwise_hop_gram(b)[:, :, keep]
    eye = np.eye(b.hops + 1)[:, :, None]
    return float(np.abs(gram - eye).max())


def export_basis(b: BasisTensor, outdir: str | Path) -> None:
    """Write hop_k.csv matrices plus meta.json into `outdir`."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for k in range(b.hops + 1):
        np.savetxt(outdir / f"hop_{k}.csv", b.matrices[k], delimiter=",", fmt="%.17g")
    meta = {
        "kind": b.kind,
        "K": b.hops,
        "theta": b.theta,
        "tau": b.tau,
        "degenerate_columns": sorted(int(j) for j in b.degenerate_columns),
        "clamp_events": b.clamp_events,
    }
    (outdir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
