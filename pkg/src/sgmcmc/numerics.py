"""Dense symmetric linear algebra used by the W2 metric and the test oracles."""

import numpy as np

from .exceptions import InvalidInputError, NotPSDError

PSD_RTOL = 1e-10


def as_sym(a):
    """Return ``a`` as a float64 symmetric matrix, averaging it with its transpose.

    Raises InvalidInputError for non-square, empty, or non-finite input.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInputError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    return 0.5 * (a + a.T)


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    a : array_like, shape (d, d)
        Symmetric matrix. It is symmetrized before decomposition.

    Returns
    -------
    eigenvalues : ndarray, shape (d,)
        In ascending order.
    eigenvectors : ndarray, shape (d, d)
        Orthonormal columns, ``a == Q @ diag(w) @ Q.T``.
    """
    a = as_sym(a)
    w, q = np.linalg.eigh(a)
    return w, q


def psd_sqrt(a, rtol=PSD_RTOL):
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues in ``[-tol, 0)`` with ``tol = rtol * max|eigenvalue|`` are
    treated as rounding noise and clamped to zero. Anything more negative
    raises NotPSDError.
    """
    w, q = sym_eig(a)
    scale = np.max(np.abs(w))
    tol = rtol * scale
    if w[0] < -tol:
        raise NotPSDError(float(w[0]), float(tol))
    root = np.sqrt(np.clip(w, 0.0, None))
    b = (q * root) @ q.T
    return 0.5 * (b + b.T)
