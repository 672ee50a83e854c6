"""Dense complex linear algebra for small multi-qubit Hilbert spaces.

Matrices are plain ``numpy`` arrays of dtype ``complex128`` (or ``float64``
where the operator is real).  Qubit 0 is the leftmost Kronecker factor, so
basis index ``j`` encodes qubit ``q`` in bit ``n - 1 - q``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULI_KINDS = ("X", "Z", "ZZ")


class NotHermitianError(ValueError):
    pass


@dataclass(frozen=True)
class HermEigen:
    """Eigendecomposition ``a = V diag(eigenvalues) V^dagger``.

    Eigenvalues ascend; each eigenvector column has its first non-negligible
    component made real-positive so the result is reproducible.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {m.shape}")
    return m


def hermitian_residual(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T)))


def check_hermitian(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    m = as_matrix(a)
    res = hermitian_residual(m)
    if res >= tol:
        raise NotHermitianError(f"matrix is not Hermitian (max|A - A^dagger| = {res:.3e})")
    return m


def kron(a, b) -> np.ndarray:
    """Kronecker product with ``a`` as the more significant factor."""
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(factors) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for f in factors:
        out = np.kron(out, f)
    return out


@lru_cache(maxsize=None)
def _pauli_chain_cached(kind: str, site: tuple, n: int) -> np.ndarray:
    single = {"X": SIGMA_X, "Z": SIGMA_Z, "ZZ": SIGMA_Z}[kind]
    factors = [single if q in site else I2 for q in range(n)]
    op = kron_all(factors)
    op.setflags(write=False)
    return op


def pauli_chain_op(kind: str, site, n: int) -> np.ndarray:
    """Operator with a Pauli on ``site`` (a pair for ``"ZZ"``) and identity elsewhere.

    Only nearest-neighbour ``(i, i + 1)`` pairs are accepted for ``"ZZ"``.
    The returned array is read-only and cached.
    """
    if n < 1:
        raise ValueError(f"qubit count must be >= 1, got {n}")
    if kind not in PAULI_KINDS:
        raise ValueError(f"unknown Pauli kind {kind!r}; expected one of {PAULI_KINDS}")
    if kind == "ZZ":
        i, j = (int(s) for s in site)
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"ZZ pair {(i, j)} out of range for n={n}")
        if j != i + 1:
            raise ValueError(f"ZZ coupling only between neighbours (i, i+1), got {(i, j)}")
        sites = (i, j)
    else:
        i = int(site)
        if not 0 <= i < n:
            raise IndexError(f"site {i} out of range for n={n}")
        sites = (i,)
    return _pauli_chain_cached(kind, sites, n)


def _fix_phases(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # first component with magnitude above tol of each column -> real positive
    mags = np.abs(vecs)
    first = np.argmax(mags > tol * mags.max(axis=0, keepdims=True), axis=0)
    pivots = vecs[first, np.arange(vecs.shape[1])]
    return vecs * (np.abs(pivots) / pivots)[None, :]


def herm_eig(a) -> HermEigen:
    """Hermitian eigendecomposition with ascending eigenvalues.

    Raises:
        NotHermitianError: if ``max|a - a^dagger| >= 1e-10``.
    """
    m = check_hermitian(a)
    # symmetrise away the sub-tolerance residue so LAPACK sees an exact Hermitian input
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    v = _fix_phases(v.astype(complex))
    return HermEigen(w, v)


def expm_minus_i(h, dt: float) -> np.ndarray:
    """``exp(-i h dt)`` through the spectral decomposition of ``h`` (hbar = 1)."""
    if not np.isfinite(dt):
        raise ValueError(f"time step must be finite, got {dt}")
    eig = herm_eig(h)
    v = eig.eigenvectors
    return (v * np.exp(-1j * eig.eigenvalues * dt)) @ v.conj().T


def hs_distance(a, b) -> float:
    """Hilbert-Schmidt distance ``Tr((a - b)^2)`` between Hermitian matrices."""
    a = check_hermitian(a)
    b = check_hermitian(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    # Tr(diff^2) == sum |diff_ij|^2 for Hermitian diff; symmetric in (a, b) bit-for-bit
    return float(np.vdot(diff, diff).real)


def density_matrix(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def basis_state(index: int, dim: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def normalize_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("cannot normalise the zero vector")
    return psi / norm
