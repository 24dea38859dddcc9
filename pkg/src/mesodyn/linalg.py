"""Deterministic dense complex linear-algebra primitives.

Matrices are plain ``numpy.ndarray`` values with dtype complex128.  The
helpers here construct and check the structured operators the solvers
rely on: Hermitian matrices (symmetrized at construction), unitaries,
positive-(semi)definite square roots and inverses, polar factors, and
the trace pairings

    <L|N> = trace(L N*),   <L,N> = Re trace(L N*),   w(L,N) = Im trace(L N*).

Every function is a pure function of its inputs; nothing here mutates
its arguments or keeps state, so concurrent use is safe.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import (
    NearSingularError,
    NonFiniteError,
    NonSquareError,
    NotPSDError,
    ShapeMismatchError,
)

# Construction / invariant tolerances.
HERMITIAN_RTOL = 1e-13          # allowed entrywise deviation from M = M*
UNITARY_TOL = 1e-12             # ||U*U - I||_F <= UNITARY_TOL * sqrt(dim)
PSD_EIG_RTOL = 1e-10            # min eigenvalue >= -PSD_EIG_RTOL * max eigenvalue
DEFAULT_PD_FLOOR = 1e-12        # relative singular-value / eigenvalue floor
_PHASE_FLOOR = 1e-12            # entries below this do not anchor a column phase
_DEGENERACY_RTOL = 1e-12        # eigenvalue clustering width for tie-breaking


def as_matrix(m) -> np.ndarray:
    """Coerce to a 2-D complex128 array and reject non-finite entries."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise NonFiniteError("matrix contains NaN or Inf entries")
    return a


def require_square(m) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise NonSquareError(f"expected a square matrix, got shape {a.shape}")
    return a


def hermitian_part(m: np.ndarray) -> np.ndarray:
    """(M + M*) / 2.  Bit-for-bit equal to its own conjugate transpose."""
    a = np.asarray(m, dtype=np.complex128)
    return (a + a.conj().T) / 2


def hermitian(m, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate closeness to M = M* and return the symmetrized matrix."""
    a = require_square(m)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    dev = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    if dev > rtol * max(scale, 1.0):
        raise ShapeMismatchError(
            f"matrix is not Hermitian: max |M - M*| = {dev:.3e} exceeds "
            f"{rtol:.1e} * max(|M|, 1)"
        )
    return hermitian_part(a)


def unitary_defect(u) -> float:
    """||U*U - I||_F."""
    a = as_matrix(u)
    gram = a.conj().T @ a
    return float(np.linalg.norm(gram - np.eye(a.shape[1])))


def require_unitary(u, tol: float = UNITARY_TOL) -> np.ndarray:
    a = require_square(u)
    defect = unitary_defect(a)
    if defect > tol * np.sqrt(a.shape[0]):
        raise ShapeMismatchError(
            f"matrix is not unitary: ||U*U - I||_F = {defect:.3e}"
        )
    return a


def _canonical_phases(q: np.ndarray) -> np.ndarray:
    """Rotate each column so its first significant entry is real positive."""
    out = q.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = np.flatnonzero(np.abs(col) > _PHASE_FLOOR)
        if idx.size:
            z = col[idx[0]]
            out[:, j] = col * (z.conjugate() / abs(z))
    return out


def _column_key(col: np.ndarray):
    return tuple(x for entry in col for x in (entry.real, entry.imag))


def hermitian_eigendecompose(m, rtol: float = HERMITIAN_RTOL):
    """Eigenvalues (ascending) and a deterministically phased eigenbasis.

    Degenerate clusters are ordered lexicographically by their
    phase-normalized eigenvector entries, so identical inputs always
    produce identical output.

    Returns (eigenvalues, eigenvectors) with M = Q diag(w) Q*.
    """
    a = hermitian(m, rtol)
    w, q = np.linalg.eigh(a)
    q = _canonical_phases(q)
    # Deterministic tie-break inside (near-)degenerate clusters.
    tol = _DEGENERACY_RTOL * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    i = 0
    n = w.shape[0]
    while i < n:
        j = i + 1
        while j < n and w[j] - w[j - 1] <= tol:
            j += 1
        if j - i > 1:
            order = sorted(range(i, j), key=lambda c: _column_key(q[:, c]))
            q[:, i:j] = q[:, order]
            w[i:j] = w[order]
        i = j
    return w, q


def psd_sqrt(m, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Unique positive-semidefinite square root of a PSD Hermitian matrix."""
    w, q = hermitian_eigendecompose(m, rtol)
    wmax = float(w[-1])
    if float(w[0]) < -PSD_EIG_RTOL * wmax:
        raise NotPSDError(
            f"matrix is not PSD: min eigenvalue {w[0]:.3e}, max {wmax:.3e}"
        )
    s = np.sqrt(np.maximum(w, 0.0))
    return hermitian_part((q * s) @ q.conj().T)


def psd_inverse(m, floor: float = DEFAULT_PD_FLOOR, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Inverse of a positive-definite Hermitian matrix.

    Raises NearSingularError when the smallest eigenvalue does not exceed
    ``floor`` times the largest — the det K -> 0 regime is reported rather
    than silently amplified.
    """
    w, q = hermitian_eigendecompose(m, rtol)
    if float(w[-1]) <= 0.0 or float(w[0]) <= floor * float(w[-1]):
        raise NearSingularError(
            f"eigenvalue ratio {float(w[0]):.3e}/{float(w[-1]):.3e} "
            f"crosses the floor {floor:.1e}"
        )
    return hermitian_part((q / w) @ q.conj().T)


class PolarFactors(NamedTuple):
    """K = radial @ unitary with radial Hermitian positive definite."""

    radial: np.ndarray
    unitary: np.ndarray


def polar_decompose(k, floor: float = DEFAULT_PD_FLOOR) -> PolarFactors:
    """Unique polar factorization K = R U, R = sqrt(K K*) > 0, U unitary."""
    a = require_square(k)
    u, s, vh = np.linalg.svd(a)
    if a.shape[0] and (s[0] <= 0.0 or s[-1] <= floor * s[0]):
        raise NearSingularError(
            f"singular value ratio {s[-1]:.3e}/{s[0]:.3e} crosses the floor {floor:.1e}"
        )
    radial = hermitian_part((u * s) @ u.conj().T)
    return PolarFactors(radial=radial, unitary=u @ vh)


def unitary_exponential(a, scale: float, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """exp(i * scale * A) for Hermitian A, via eigendecomposition."""
    w, q = hermitian_eigendecompose(a, rtol)
    if scale == 0.0:
        return np.eye(w.shape[0], dtype=np.complex128)
    phases = np.exp(1j * scale * w)
    return (q * phases) @ q.conj().T


class Pairing(NamedTuple):
    """trace(L N*) split into Hermitian, Riemannian and symplectic parts."""

    hermitian: complex
    riemannian: float
    symplectic: float


def pairing(l, n) -> Pairing:
    """<L|N> = trace(L N*) together with Re and Im parts.

    Real and imaginary parts are reduced separately (no fused complex
    multiply), so swapping the arguments conjugates every term exactly:
    w(L,N) = -w(N,L) as floating-point negation of the same reduction
    order, and w(L,L) = 0.0 exactly.
    """
    a = as_matrix(l)
    b = as_matrix(n)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    riemannian = float(np.sum(a.real * b.real + a.imag * b.imag))
    symplectic = float(np.sum(a.imag * b.real - a.real * b.imag))
    return Pairing(hermitian=complex(riemannian, symplectic),
                   riemannian=riemannian, symplectic=symplectic)


def singular_extent(k) -> tuple[float, float]:
    """Smallest and largest singular values."""
    s = np.linalg.svd(as_matrix(k), compute_uv=False)
    return float(s[-1]), float(s[0])


def adjoint_inverse(k, floor: float = DEFAULT_PD_FLOOR) -> np.ndarray:
    """(K*)^-1 for square full-rank K.

    With K = U S V* this is U S^-1 V*; the relative singular-value floor
    doubles as the full-rank invariant check.
    """
    a = require_square(k)
    u, s, vh = np.linalg.svd(a)
    if s[0] <= 0.0 or s[-1] <= floor * s[0]:
        raise NearSingularError(
            f"singular value ratio {s[-1]:.3e}/{s[0]:.3e} crosses the floor {floor:.1e}"
        )
    return (u / s) @ vh


def adjoint_pseudo_inverse(k, floor: float = DEFAULT_PD_FLOOR):
    """Zero-extended inverse of K* for a rectangular rank-r operator.

    Singular values at or below ``floor`` times the largest are treated as
    exact zeros.  Returns ((K*)^+, rank).
    """
    a = as_matrix(k)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((a.shape[0], a.shape[1]), dtype=np.complex128), 0
    keep = s > floor * s[0]
    rank = int(np.count_nonzero(keep))
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (u * inv) @ vh, rank


def matrix_to_json(m) -> dict:
    """Row-major JSON literal: {"rows", "cols", "re", "im"}."""
    a = as_matrix(m)
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "re": [float(x) for x in a.real.ravel()],
        "im": [float(x) for x in a.imag.ravel()],
    }


def matrix_from_json(obj) -> np.ndarray:
    """Parse the row-major JSON literal produced by matrix_to_json."""
    if not isinstance(obj, dict):
        raise ValueError("matrix literal must be an object")
    missing = {"rows", "cols", "re", "im"} - set(obj)
    if missing:
        raise ValueError(f"matrix literal is missing fields {sorted(missing)}")
    rows, cols = int(obj["rows"]), int(obj["cols"])
    re = np.asarray(obj["re"], dtype=np.float64)
    im = np.asarray(obj["im"], dtype=np.float64)
    if re.shape != (rows * cols,) or im.shape != (rows * cols,):
        raise ValueError(
            f"matrix literal has {re.size} re / {im.size} im entries, "
            f"expected {rows * cols}"
        )
    return as_matrix((re + 1j * im).reshape(rows, cols))
