"""Dense complex matrix kernel.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. The functions
here validate shapes and finiteness, and wrap LAPACK so that failures are
reported with the package's own exceptions.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import DefinitenessError, DimensionError, NumericalError

__all__ = [
    "HermitianEig",
    "as_cmatrix",
    "herm_eig",
    "hermitian_sqrt",
    "chol_solve",
    "inverse_diag",
    "batched_inverse_diag",
    "rng_stream",
    "sample_circular_gaussian",
]


def as_cmatrix(a, square=False):
    """Return ``a`` as a 2-D complex128 array, checking finiteness."""
    m = np.array(a, dtype=np.complex128, copy=True)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got an array of shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix has non-finite entries")
    return m


@dataclass(frozen=True)
class HermitianEig:
    """Eigenpairs of a Hermitian matrix, eigenvalues in decreasing order."""

    eigvals: np.ndarray
    eigvecs: np.ndarray

    def reconstruct(self):
        v = self.eigvecs
        return (v * self.eigvals) @ v.conj().T


def herm_eig(a):
    """Hermitian eigendecomposition with eigenvalues sorted descending.

    The input is symmetrized as ``(A + A^H)/2`` first so that round-off
    asymmetry never leaks into complex eigenvalues.
    """
    m = as_cmatrix(a, square=True)
    m = 0.5 * (m + m.conj().T)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    return HermitianEig(eigvals=w[::-1].copy(), eigvecs=v[:, ::-1].copy())


def hermitian_sqrt(a):
    """PSD square root; negative eigenvalues from round-off are clamped to 0."""
    eig = herm_eig(a)
    root = np.sqrt(np.clip(eig.eigvals, 0.0, None))
    v = eig.eigvecs
    return (v * root) @ v.conj().T


def _cholesky(a):
    m = as_cmatrix(a, square=True)
    m = 0.5 * (m + m.conj().T)
    c, info = lapack.zpotrf(m, lower=1, clean=1)
    if info > 0:
        raise DefinitenessError(pivot=int(info) - 1)
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise NumericalError(f"zpotrf rejected argument {-info}")
    return c


def chol_solve(a, b):
    """Solve ``A X = B`` for Hermitian positive definite ``A``."""
    c = _cholesky(a)
    rhs = as_cmatrix(b)
    if rhs.shape[0] != c.shape[0]:
        raise DimensionError(f"shapes {c.shape} and {rhs.shape} are incompatible")
    x, info = lapack.zpotrs(c, rhs, lower=1)
    if info != 0:  # pragma: no cover
        raise NumericalError(f"zpotrs failed with info={info}")
    return x


def inverse_diag(a):
    """Real parts of ``diag(A^{-1})`` for Hermitian positive definite ``A``.

    With ``A = L L^H``, ``(A^{-1})_{jj}`` is the squared norm of column ``j``
    of ``L^{-1}``, so the result is positive by construction.
    """
    c = _cholesky(a)
    linv, info = lapack.ztrtri(c, lower=1)
    if info != 0:  # pragma: no cover
        raise NumericalError(f"ztrtri failed with info={info}")
    linv = np.tril(linv)
    return np.sum(np.abs(linv) ** 2, axis=0)


def batched_inverse_diag(a):
    """``inverse_diag`` over a stack of matrices of shape ``(n, t, t)``."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise DimensionError(f"expected a stack of square matrices, got {a.shape}")
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        for k in range(a.shape[0]):
            _cholesky(a[k])
        raise NumericalError(str(exc)) from exc  # pragma: no cover
    eye = np.broadcast_to(np.eye(a.shape[1], dtype=np.complex128), a.shape)
    linv = np.linalg.solve(low, eye)
    return np.sum(np.abs(linv) ** 2, axis=1)


def rng_stream(seed, index=0):
    """Counter-based generator for ``(seed, index)``.

    Philox takes a 128-bit key; the low 64 bits hold the seed and the high
    64 bits the stream index, so every realization index gets its own
    independent, reproducible stream.
    """
    seed = int(seed)
    index = int(index)
    if not (0 <= seed < 2**64 and 0 <= index < 2**64):
        raise ValueError("seed and stream index must be unsigned 64-bit integers")
    return np.random.Generator(np.random.Philox(key=seed | (index << 64)))


def sample_circular_gaussian(rows, cols, rng):
    """``rows x cols`` matrix of i.i.d. CN(0, 1) entries."""
    z = rng.standard_normal((2, rows, cols))
    return (z[0] + 1j * z[1]) * np.sqrt(0.5)
