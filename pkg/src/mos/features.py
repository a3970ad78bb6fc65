"""Real-valued network inputs built from complex snapshot blocks.

Two encodings are supported:

``stacked-iq``
    All real parts of ``Y`` in column-major (snapshot-major) order, followed by
    all imaginary parts in the same order. Length ``2*M*N``.
``covariance``
    The ``M`` real diagonal entries of the sample covariance, then
    ``(Re C_ij, Im C_ij)`` for every ``i < j`` in row-major order. Length
    ``M**2``, independent of the number of snapshots.

The layouts are part of the checkpoint contract and must not change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mos.errors import ContractError, DataError

STACKED_IQ = "stacked-iq"
COVARIANCE = "covariance"
FEATURE_KINDS = (STACKED_IQ, COVARIANCE)

HERMITIAN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    kind: str
    dims: tuple[int, int]

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ContractError(f"unknown feature kind {self.kind!r}")
        M, N = self.dims
        expected = 2 * M * N if self.kind == STACKED_IQ else M * M
        if self.values.shape != (expected,):
            raise ContractError(
                f"{self.kind} features for M={M}, N={N} need length {expected}, "
                f"got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature vector has non-finite entries")


def feature_length(kind: str, M: int, N: int) -> int:
    if kind == STACKED_IQ:
        return 2 * M * N
    if kind == COVARIANCE:
        return M * M
    raise ContractError(f"unknown feature kind {kind!r}")


def sample_covariance(Y: np.ndarray) -> np.ndarray:
    """``(1/N) * sum_t y(t) y(t)^H`` for ``Y`` of shape ``(M, N)`` or a batch ``(K, M, N)``."""
    Y = np.asarray(Y)
    N = Y.shape[-1]
    if N < 1:
        raise DataError("need at least one snapshot")
    C = Y @ np.swapaxes(Y, -1, -2).conj() / N
    # Exact Hermitian symmetry regardless of BLAS rounding.
    return 0.5 * (C + np.swapaxes(C, -1, -2).conj())


def stack_real_imag(Y: np.ndarray) -> FeatureVector:
    Y = np.asarray(Y)
    M, N = Y.shape
    return FeatureVector(stack_real_imag_batch(Y[None])[0], STACKED_IQ, (M, N))


def stack_real_imag_batch(Y: np.ndarray) -> np.ndarray:
    """Batched stacked-iq encoding, ``(K, M, N)`` complex -> ``(K, 2*M*N)`` real."""
    Y = np.asarray(Y)
    K = Y.shape[0]
    # Column-major flattening of each M x N block == row-major flattening of its transpose.
    flat = np.swapaxes(Y, -1, -2).reshape(K, -1)
    return np.concatenate([flat.real, flat.imag], axis=1)


def unstack_real_imag(values: np.ndarray, M: int, N: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    half = M * N
    flat = values[:half] + 1j * values[half:]
    return flat.reshape(N, M).T


def _upper_indices(M: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(M, k=1)


def covariance_features(C: np.ndarray, N: int | None = None) -> FeatureVector:
    """Encode a Hermitian ``M x M`` matrix as ``M**2`` reals.

    ``N`` is only recorded as provenance; it does not change the values.
    """
    C = np.asarray(C)
    M = C.shape[0]
    values = covariance_features_batch(C[None])[0]
    return FeatureVector(values, COVARIANCE, (M, N if N is not None else 0))


def covariance_features_batch(C: np.ndarray) -> np.ndarray:
    """Batched covariance encoding, ``(K, M, M)`` Hermitian -> ``(K, M**2)`` real."""
    C = np.asarray(C)
    if C.ndim != 3 or C.shape[1] != C.shape[2]:
        raise ContractError(f"expected a stack of square matrices, got {C.shape}")
    CH = np.swapaxes(C, -1, -2).conj()
    scale = np.maximum(np.abs(C).max(axis=(1, 2)), 1.0)
    err = np.abs(C - CH).max(axis=(1, 2))
    if np.any(err > HERMITIAN_TOL * scale):
        raise DataError(f"matrix is not Hermitian (max asymmetry {err.max():.3g})")
    C = 0.5 * (C + CH)
    M = C.shape[1]
    iu, ju = _upper_indices(M)
    K = C.shape[0]
    out = np.empty((K, M * M))
    out[:, :M] = np.diagonal(C, axis1=1, axis2=2).real
    upper = C[:, iu, ju]
    out[:, M::2] = upper.real
    out[:, M + 1 :: 2] = upper.imag
    return out


def covariance_from_features(values: np.ndarray, M: int) -> np.ndarray:
    """Inverse of :func:`covariance_features` on Hermitian matrices."""
    values = np.asarray(values, dtype=float)
    if values.shape != (M * M,):
        raise ContractError(f"expected {M * M} values, got {values.shape}")
    C = np.zeros((M, M), dtype=complex)
    C[np.diag_indices(M)] = values[:M]
    iu, ju = _upper_indices(M)
    upper = values[M::2] + 1j * values[M + 1 :: 2]
    C[iu, ju] = upper
    C[ju, iu] = upper.conj()
    return C


def encode_batch(Y: np.ndarray, kind: str) -> np.ndarray:
    """Encode a ``(K, M, N)`` snapshot stack with the given preprocessing."""
    if kind == STACKED_IQ:
        return stack_real_imag_batch(Y)
    if kind == COVARIANCE:
        return covariance_features_batch(sample_covariance(Y))
    raise ContractError(f"unknown feature kind {kind!r}")


def encode(Y: np.ndarray, kind: str) -> FeatureVector:
    Y = np.asarray(Y)
    if kind == STACKED_IQ:
        return stack_real_imag(Y)
    return covariance_features(sample_covariance(Y), N=Y.shape[1])
