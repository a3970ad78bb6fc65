"""AIC and MDL model-order selection from sample-covariance eigenvalues.

With ``lambda_1 >= ... >= lambda_M`` the eigenvalues of the sample covariance,
``a(k)`` and ``g(k)`` the arithmetic and geometric means of the ``M - k``
smallest ones and ``N`` the number of snapshots (Wax & Kailath, 1985)::

    Lambda(k) = N * (M - k) * ln(a(k) / g(k))
    AIC(k)    = 2 * Lambda(k) + 2 * k * (2M - k)
    MDL(k)    = Lambda(k) + 0.5 * k * (2M - k) * ln(N)

The estimate is the smallest ``k`` in ``0..M-1`` minimizing the criterion.
Eigenvalues are floored at ``EIG_FLOOR * lambda_1`` before taking logarithms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mos.errors import DataError, NumericalError

AIC = "AIC"
MDL = "MDL"
VARIANTS = (AIC, MDL)

# Eigenvalues below this fraction of the largest are numerically zero; flooring
# them to a common value keeps ln(a/g) finite and exact-rank cases well posed.
EIG_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class EigenSpectrum:
    """Eigenvalues sorted in descending order, clamped at zero."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DataError("spectrum must be a non-empty vector")
        if np.any(np.diff(v) > 0):
            raise DataError("spectrum must be non-increasing")
        if np.any(v < 0):
            raise DataError("spectrum must be non-negative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def scaled(self, alpha: float) -> EigenSpectrum:
        return EigenSpectrum(alpha * self.values)


@dataclass(frozen=True)
class CriterionResult:
    scores: np.ndarray
    estimate: int
    degenerate: bool = False


def _check_hermitian(C: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    C = np.asarray(C)
    if C.ndim < 2 or C.shape[-1] != C.shape[-2]:
        raise DataError(f"expected square matrices, got shape {C.shape}")
    CH = np.swapaxes(C, -1, -2).conj()
    scale = max(float(np.abs(C).max(initial=0.0)), 1.0)
    if np.abs(C - CH).max(initial=0.0) > tol * scale:
        raise DataError("matrix is not Hermitian within tolerance")
    return 0.5 * (C + CH)


def jacobi_eigh(C: np.ndarray, tol: float = 1e-13, max_sweeps: int = 64):
    """Cyclic Jacobi eigendecomposition of a complex Hermitian matrix.

    Works on the ``2M x 2M`` real symmetric embedding ``[[Re, -Im], [Im, Re]]``
    whose spectrum is that of ``C`` with every eigenvalue doubled. Returns
    ``(eigenvalues, eigenvectors)`` of ``C`` in ascending order.
    """
    C = np.asarray(C, dtype=complex)
    M = C.shape[0]
    B = np.block([[C.real, -C.imag], [C.imag, C.real]])
    n = 2 * M
    V = np.eye(n)
    norm = np.linalg.norm(B)
    for _ in range(max_sweeps):
        off = np.linalg.norm(B - np.diag(np.diag(B)))
        if off <= tol * max(norm, np.finfo(float).tiny):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                bpq = B[p, q]
                if abs(bpq) <= 1e-300:
                    continue
                theta = (B[q, q] - B[p, p]) / (2.0 * bpq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                bp, bq = B[:, p].copy(), B[:, q].copy()
                B[:, p] = c * bp - s * bq
                B[:, q] = s * bp + c * bq
                rp, rq = B[p, :].copy(), B[q, :].copy()
                B[p, :] = c * rp - s * rq
                B[q, :] = s * rp + c * rq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NumericalError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(B)
    order = np.argsort(w, kind="stable")
    # Embedding eigenvalues come in pairs; each pair maps to one eigenvector of C.
    w, V = w[order], V[:, order]
    vals = w[0::2]
    vecs = V[:M, 0::2] + 1j * V[M:, 0::2]
    vecs /= np.linalg.norm(vecs, axis=0, keepdims=True)
    return vals, vecs


def eigen_spectrum(C: np.ndarray, method: str = "lapack") -> EigenSpectrum:
    """Descending eigenvalues of a Hermitian matrix with negatives clamped to zero."""
    C = _check_hermitian(C)
    if method == "lapack":
        w = np.linalg.eigvalsh(C)
    elif method == "jacobi":
        w, _ = jacobi_eigh(C)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    return EigenSpectrum(np.clip(w[::-1], 0.0, None))


def eigen_spectra(C: np.ndarray) -> np.ndarray:
    """Batched :func:`eigen_spectrum` values, ``(K, M, M)`` -> ``(K, M)`` descending."""
    C = _check_hermitian(C)
    return np.clip(np.linalg.eigvalsh(C)[..., ::-1], 0.0, None)


def _criterion_scores(lam: np.ndarray, N: int, variant: str) -> np.ndarray:
    """Criterion values for a ``(K, M)`` stack of descending spectra, all positive."""
    K, M = lam.shape
    k = np.arange(M)
    # tails[:, k] are the M-k smallest eigenvalues; cumulative sums from the tail.
    rev = lam[:, ::-1]
    count = M - k
    arith = np.cumsum(rev, axis=1)[:, ::-1] / count
    log_geo = np.cumsum(np.log(rev), axis=1)[:, ::-1] / count
    loglik = N * count * (np.log(arith) - log_geo)
    # a >= g analytically; rounding can leave tiny negatives. A tail of equal
    # values (typically all at the floor) has a == g exactly, so pin it to zero
    # rather than let rounding decide ties between orders.
    flat = np.maximum.accumulate(rev, axis=1) == np.minimum.accumulate(rev, axis=1)
    loglik = np.where(flat[:, ::-1], 0.0, np.maximum(loglik, 0.0))
    free = k * (2 * M - k)
    if variant == AIC:
        return 2.0 * loglik + 2.0 * free
    if variant == MDL:
        return loglik + 0.5 * free * np.log(N)
    raise ValueError(f"unknown criterion {variant!r}")


def information_criterion(spec: EigenSpectrum, N: int, variant: str) -> CriterionResult:
    """Score every candidate order ``k = 0..M-1`` and pick the minimizer (ties -> smaller k)."""
    if N < 1:
        raise DataError("N must be >= 1")
    lam = np.asarray(spec.values, dtype=float)
    if lam[0] <= 0:
        M = lam.size
        return CriterionResult(np.zeros(M), 0, degenerate=True)
    floored = np.maximum(lam, EIG_FLOOR * lam[0])[None, :]
    scores = _criterion_scores(floored, N, variant)[0]
    return CriterionResult(scores, int(np.argmin(scores)))


def estimate_orders(spectra: np.ndarray, N: int, variant: str) -> np.ndarray:
    """Batched estimates for a ``(K, M)`` stack of descending spectra."""
    lam = np.asarray(spectra, dtype=float)
    top = lam[:, :1]
    degenerate = top[:, 0] <= 0
    floored = np.maximum(lam, EIG_FLOOR * np.where(degenerate[:, None], 1.0, top))
    scores = _criterion_scores(floored, N, variant)
    est = np.argmin(scores, axis=1)
    est[degenerate] = 0
    return est
