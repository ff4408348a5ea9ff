"""Dense complex linear algebra helpers and circular Gaussian sampling."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


class FactorizationError(np.linalg.LinAlgError):
    """A covariance or system matrix could not be factorized.

    ``min_eigenvalue`` carries the smallest eigenvalue of the Hermitian part of
    the offending matrix so callers can tell round-off from a real defect.
    """

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(f"{message} (min eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = float(min_eigenvalue)


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


def dbm_to_watts(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().swapaxes(-1, -2))


def _min_eig(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hermitian_part(a)).min())


def unit_cn(rng: np.random.Generator, size) -> np.ndarray:
    """I.i.d. CN(0, 1) entries."""
    z = rng.standard_normal(size=(2,) + tuple(np.atleast_1d(size)))
    return (z[0] + 1j * z[1]) * np.sqrt(0.5)


def psd_factor(cov: np.ndarray, jitter: float | None = None) -> np.ndarray:
    """Lower Cholesky-type factor ``L`` with ``L @ L^H ~= cov``.

    A diagonal jitter of ``1e-12 * trace / dim`` is added by default so that
    semi-definite error covariances still factorize.
    """
    cov = np.asarray(cov, dtype=complex)
    dim = cov.shape[0]
    if not np.any(cov):
        return np.zeros_like(cov)
    if jitter is None:
        jitter = 1e-12 * abs(np.trace(cov).real) / dim
    try:
        return np.linalg.cholesky(hermitian_part(cov) + jitter * np.eye(dim))
    except np.linalg.LinAlgError:
        raise FactorizationError("covariance is not numerically PSD", _min_eig(cov)) from None


def sample_cn(
    mean: np.ndarray,
    cov: np.ndarray,
    rng: np.random.Generator,
    size: int | None = None,
    jitter: float | None = None,
) -> np.ndarray:
    """Draw from CN(mean, cov).

    Returns shape ``(dim,)`` or ``(size, dim)``. An all-zero covariance is
    treated as exact and returns the mean without touching the stream.
    """
    mean = np.asarray(mean, dtype=complex)
    cov = np.asarray(cov, dtype=complex)
    if cov.shape != (mean.size, mean.size):
        raise ValueError(f"mean has dim {mean.size} but cov is {cov.shape}")
    if not np.any(cov):
        return mean.copy() if size is None else np.broadcast_to(mean, (size, mean.size)).copy()
    factor = psd_factor(cov, jitter)
    shape = mean.size if size is None else (size, mean.size)
    z = unit_cn(rng, shape)
    return mean + z @ factor.T


def herm_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for Hermitian positive definite ``a``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"rhs has {b.shape[0]} rows, matrix has {a.shape[0]}")
    try:
        cf = sla.cho_factor(hermitian_part(a), lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        raise FactorizationError("matrix is numerically singular or indefinite", _min_eig(a)) from None
    return sla.cho_solve(cf, b)


class HermitianSolver:
    """Cached Cholesky factorization for repeated solves against one matrix."""

    def __init__(self, a: np.ndarray):
        a = hermitian_part(np.asarray(a, dtype=complex))
        try:
            self._cf = sla.cho_factor(a, lower=True)
        except np.linalg.LinAlgError:
            raise FactorizationError("matrix is numerically singular or indefinite", _min_eig(a)) from None
        self.dim = a.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._cf, b)

    def inverse(self) -> np.ndarray:
        inv = self.solve(np.eye(self.dim, dtype=complex))
        return hermitian_part(inv)


def woodbury_inverse(d, f1, f2, f3, cond_limit: float = 1e14) -> np.ndarray:
    """Inverse of ``d + f1 @ f2 @ f3`` through the matrix inversion lemma.

    ``(D + F1 F2 F3)^-1 = D^-1 - D^-1 F1 (F3 D^-1 F1 + F2^-1)^-1 F3 D^-1``.
    Scalars are promoted to 1x1 matrices.
    """
    d, f1, f2, f3 = (np.atleast_2d(np.asarray(m, dtype=complex)) for m in (d, f1, f2, f3))
    n1, n2 = d.shape[0], f2.shape[0]
    if d.shape != (n1, n1) or f1.shape != (n1, n2) or f2.shape != (n2, n2) or f3.shape != (n2, n1):
        raise ValueError(
            f"non-conforming shapes d{d.shape} f1{f1.shape} f2{f2.shape} f3{f3.shape}"
        )
    d_inv_f1 = np.linalg.solve(d, f1)
    f3_d_inv = np.linalg.solve(d.T, f3.T).T
    inner = f3 @ d_inv_f1 + np.linalg.inv(f2)
    if np.linalg.cond(inner) > cond_limit:
        raise np.linalg.LinAlgError("inner matrix of the inversion lemma is singular")
    return np.linalg.inv(d) - d_inv_f1 @ np.linalg.solve(inner, f3_d_inv)
