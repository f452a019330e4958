"""Small dense complex linear algebra.

Channels, covariances and symbols are plain ``numpy`` complex128 arrays.
Row vectors are 1-D arrays; matrices are 2-D. Only the 2x2 operations the
BIA equivalent channel needs are hand-written; everything else is a thin,
validated wrapper around numpy.
"""

import math

import numpy as np

__all__ = [
    "SingularMatrixError",
    "NotPositiveDefiniteError",
    "as_matrix",
    "matmul",
    "hermitian",
    "inv2",
    "det2",
    "logdet2",
    "hermitian_sqrt",
    "sample_complex_gaussian",
    "standard_complex_normal",
]

SINGULAR_TOL = 1e-30


class SingularMatrixError(ArithmeticError):
    """Raised when a matrix is too close to singular to invert."""


class NotPositiveDefiniteError(ArithmeticError):
    """Raised when a Hermitian matrix fails a definiteness requirement."""


def as_matrix(a, shape=None):
    """Coerce ``a`` to a finite complex128 matrix, optionally checking shape."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if shape is not None and m.shape != shape:
        raise ValueError(f"expected shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def matmul(a, b):
    """Complex matrix product ``a @ b`` with a dimension check."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def hermitian(a):
    """Conjugate transpose."""
    a = np.asarray(a, dtype=np.complex128)
    return a.conj().T


def det2(a):
    a = as_matrix(a, (2, 2))
    return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]


def inv2(a):
    """Closed-form inverse of a 2x2 matrix.

    Raises
    ------
    SingularMatrixError
        If ``|det(a)| <= 1e-30``.
    """
    a = as_matrix(a, (2, 2))
    d = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if abs(d) <= SINGULAR_TOL:
        raise SingularMatrixError(f"|det| = {abs(d):.3e} below {SINGULAR_TOL}")
    return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / d


def logdet2(a, check_hermitian=True):
    """Base-2 log-determinant of a 2x2 Hermitian positive-definite matrix."""
    a = as_matrix(a, (2, 2))
    if check_hermitian:
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.conj().T)) > 1e-12 * scale:
            raise NotPositiveDefiniteError("matrix is not Hermitian")
    a11 = a[0, 0].real
    a22 = a[1, 1].real
    d = a11 * a22 - (a[0, 1] * a[1, 0]).real
    if a11 <= 0.0 or d <= 0.0:
        raise NotPositiveDefiniteError(f"not positive definite (a11={a11}, det={d})")
    return math.log2(d)


def _eig_hermitian2(a):
    """Analytic eigendecomposition of a 2x2 Hermitian matrix.

    Returns eigenvalues ``(l1, l2)`` (ascending) and a unitary ``U`` whose
    columns are the eigenvectors.
    """
    p = a[0, 0].real
    q = a[1, 1].real
    b = a[0, 1]
    half = 0.5 * (p + q)
    rad = math.hypot(0.5 * (p - q), abs(b))
    l1, l2 = half - rad, half + rad
    if abs(b) == 0.0:
        if p <= q:
            return (p, q), np.eye(2, dtype=np.complex128)
        return (q, p), np.array([[0, 1], [1, 0]], dtype=np.complex128)
    cols = []
    for lam in (l1, l2):
        # (A - lam I) v = 0 -> v = [b, lam - p] or [lam - q, conj(b)]
        v1 = np.array([b, lam - p], dtype=np.complex128)
        v2 = np.array([lam - q, np.conj(b)], dtype=np.complex128)
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        cols.append(v / np.linalg.norm(v))
    return (l1, l2), np.column_stack(cols)


def hermitian_sqrt(cov, tol=1e-12):
    """Hermitian PSD square root ``L`` with ``L @ L == cov``.

    Uses an analytic eigendecomposition for 1x1 and 2x2 inputs, numpy's
    ``eigh`` otherwise.
    """
    cov = as_matrix(cov)
    n = cov.shape[0]
    if cov.shape != (n, n):
        raise ValueError("covariance must be square")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.conj().T)) > 1e-12 * scale:
        raise NotPositiveDefiniteError("covariance is not Hermitian")
    if n == 1:
        lams, U = (cov[0, 0].real,), np.eye(1, dtype=np.complex128)
    elif n == 2:
        lams, U = _eig_hermitian2(cov)
    else:
        lams, U = np.linalg.eigh(cov)
    lams = np.asarray(lams, dtype=float)
    if np.min(lams) < -tol * scale:
        raise NotPositiveDefiniteError(f"covariance has eigenvalue {np.min(lams):.3e}")
    root = np.sqrt(np.clip(lams, 0.0, None))
    return (U * root) @ U.conj().T


def standard_complex_normal(rng, size):
    """I.i.d. circularly-symmetric CN(0, 1) draws."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * math.sqrt(0.5)


def sample_complex_gaussian(cov, rng, size=None):
    """Draw row vectors from CN(0, cov).

    Returns ``z @ L^H`` where ``L`` is the Hermitian square root of ``cov`` and
    ``z`` has unit-variance CN(0, 1) entries, so ``E[x^H x] = cov``. With
    ``size=None`` a single vector of length n is returned, otherwise an array
    of shape ``(size, n)`` (``size`` may be a tuple of leading dims).
    """
    L = hermitian_sqrt(cov)
    n = L.shape[0]
    lead = () if size is None else (size if isinstance(size, tuple) else (size,))
    z = standard_complex_normal(rng, lead + (n,))
    return z @ L.conj().T
