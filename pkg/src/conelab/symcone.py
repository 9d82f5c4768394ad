"""Exact small-dimension symmetric-matrix algebra on S^D and its PSD cone.

Everything here is dense float64 numpy at dimensions D <= 8: the entry-wise
inner product, PSD square roots and their directional derivatives (via the
Sylvester relation in the eigenbasis), projection onto the cone, and the
standard orthogonal basis of S^D used for gradients and finite differences.

All values are immutable after construction and every operation is a pure
function, so instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError

MAX_DIM = 8

#: Eigenvalues down to -PSD_TOL are accepted at ConePoint construction and
#: clamped to zero; projected optimizers routinely produce such iterates.
PSD_TOL = 1e-12

#: Interior margin below which the square-root derivative is refused.
INTERIOR_TOL = 1e-10

__all__ = [
    "SymMatrix",
    "ConePoint",
    "inner",
    "norm",
    "sym_part",
    "sqrt_psd",
    "dsqrt",
    "project_psd",
    "basis",
    "random_sym",
    "random_psd",
    "MAX_DIM",
    "PSD_TOL",
    "INTERIOR_TOL",
]


def _as_square(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if arr.shape[0] > MAX_DIM:
        raise ValueError(f"dimension {arr.shape[0]} exceeds the desk-scale bound {MAX_DIM}")
    return arr


@dataclass(frozen=True)
class SymMatrix:
    """A D x D real symmetric matrix, D <= 8; symmetry is exact by construction."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.values)
        if not np.array_equal(arr, arr.T):
            raise ValueError("matrix is not exactly symmetric; use sym_part() first")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class ConePoint:
    """A point of the closed PSD cone S^D_+ with its distance to the boundary.

    Construction rejects matrices with an eigenvalue below -PSD_TOL; round-off
    negatives within the tolerance are clamped to zero.  `interior_margin` is
    the smallest eigenvalue of the stored matrix, so `interior_margin > 0`
    identifies points of the open cone S^D_{++}.
    """

    matrix: SymMatrix
    interior_margin: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.matrix, SymMatrix):
            object.__setattr__(self, "matrix", SymMatrix(sym_part(self.matrix)))
        w = np.linalg.eigvalsh(self.matrix.values)
        lo = float(w[0])
        # the tolerance is relative to the matrix scale: eigenvalue clipping
        # of large matrices reconstructs with round-off proportional to |h|
        tol = PSD_TOL * max(1.0, float(np.abs(self.matrix.values).max()))
        if lo < -tol:
            raise DomainError(f"matrix is not PSD: smallest eigenvalue {lo:.3e} < -{tol:.0e}")
        if lo < 0.0:
            w2, v = np.linalg.eigh(self.matrix.values)
            clipped = (v * np.clip(w2, 0.0, None)) @ v.T
            object.__setattr__(self, "matrix", SymMatrix(sym_part(clipped)))
            lo = float(np.linalg.eigvalsh(self.matrix.values)[0])
        object.__setattr__(self, "interior_margin", lo)

    @property
    def dim(self) -> int:
        return self.matrix.dim

    @property
    def values(self) -> np.ndarray:
        return self.matrix.values

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix.values, dtype=dtype)


def as_sym_values(a) -> np.ndarray:
    """Coerce a SymMatrix, ConePoint, scalar, or array to a symmetric ndarray."""
    if isinstance(a, SymMatrix):
        return a.values
    if isinstance(a, ConePoint):
        return a.matrix.values
    arr = _as_square(a)
    if not np.allclose(arr, arr.T, atol=0.0, rtol=0.0):
        raise ValueError("matrix is not symmetric")
    return arr


def sym_part(a) -> np.ndarray:
    """Symmetrize a square matrix: (a + a^T) / 2."""
    arr = _as_square(a)
    return 0.5 * (arr + arr.T)


def inner(a, b) -> float:
    """Entry-wise inner product sum_ij a_ij b_ij."""
    av = np.asarray(a, dtype=float)
    bv = np.asarray(b, dtype=float)
    if av.ndim == 0:
        av = av.reshape(1, 1)
    if bv.ndim == 0:
        bv = bv.reshape(1, 1)
    if av.shape != bv.shape:
        raise ValueError(f"dimension mismatch: {av.shape} vs {bv.shape}")
    return float(np.sum(av * bv))


def norm(a) -> float:
    """Frobenius norm sqrt(inner(a, a))."""
    return float(np.sqrt(inner(a, a)))


def _eigh(a: np.ndarray):
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails at D<=8
        raise NumericError(f"symmetric eigensolver failed on\n{a!r}") from exc


def sqrt_psd(h) -> ConePoint:
    """PSD square root by symmetric eigendecomposition, nonnegative-root branch.

    The result s satisfies s @ s == h within 1e-10 in max-entry norm for
    inputs with condition number up to ~1e6.
    """
    hv = as_sym_values(h if isinstance(h, (SymMatrix, ConePoint)) else ConePoint(SymMatrix(sym_part(h))))
    if not isinstance(h, ConePoint):
        h = ConePoint(SymMatrix(hv))
    w, v = _eigh(h.values)
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return ConePoint(SymMatrix(sym_part(root)))


def dsqrt(h, a) -> SymMatrix:
    """Directional derivative of h |-> sqrt(h) at strictly PD h in direction a.

    Solves the Sylvester relation M sqrt(h) + sqrt(h) M = a in the eigenbasis
    of h: with h = V diag(w) V^T and atil = V^T a V, the solution is
    M = V (atil_ij / (sqrt(w_i) + sqrt(w_j))) V^T.  The derivative blows up at
    the cone boundary, hence the strict interior requirement.
    """
    if not isinstance(h, ConePoint):
        h = ConePoint(SymMatrix(sym_part(h)))
    if h.interior_margin <= INTERIOR_TOL:
        raise DomainError(
            f"dsqrt requires a strictly PD base point (margin {h.interior_margin:.3e} <= {INTERIOR_TOL:.0e})"
        )
    av = as_sym_values(a)
    if av.shape != h.values.shape:
        raise ValueError(f"dimension mismatch: {av.shape} vs {h.values.shape}")
    w, v = _eigh(h.values)
    roots = np.sqrt(w)
    atil = v.T @ av @ v
    mtil = atil / (roots[:, None] + roots[None, :])
    return SymMatrix(sym_part(v @ mtil @ v.T))


def project_psd(s) -> ConePoint:
    """Nearest PSD matrix in Frobenius norm: clip negative eigenvalues at 0."""
    sv = sym_part(np.asarray(s, dtype=float))
    w, v = _eigh(sv)
    if w[0] >= 0.0:
        return ConePoint(SymMatrix(sv))
    clipped = (v * np.clip(w, 0.0, None)) @ v.T
    return ConePoint(SymMatrix(sym_part(clipped)))


def basis(d: int) -> list[SymMatrix]:
    """Orthogonal basis of S^D of size D(D+1)/2: unit diagonals E_ii followed
    by symmetrized off-diagonal pairs E_ij + E_ji, i < j."""
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {d}")
    out = []
    for i in range(d):
        e = np.zeros((d, d))
        e[i, i] = 1.0
        out.append(SymMatrix(e))
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d))
            e[i, j] = e[j, i] = 1.0
            out.append(SymMatrix(e))
    return out


def random_sym(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    """Random symmetric matrix with i.i.d. Gaussian upper triangle."""
    g = rng.standard_normal((d, d))
    return scale * sym_part(g)


def random_psd(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    """Wishart-style random PSD matrix G G^T with Gaussian G, scaled."""
    g = rng.standard_normal((d, d))
    return scale * (g @ g.T) / d
