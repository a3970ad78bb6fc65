"""Synthetic far-field snapshots for a uniform circular array.

A received snapshot block is ``Y = A_eff @ S + W`` with ``A_eff = F @ A(thetas)``
when a calibration (coupling) matrix ``F`` is configured and ``A(thetas)``
otherwise. Sources are unit-power circular complex Gaussian, noise is circular
complex Gaussian with variance ``1 / snr``.

Every sample draws from its own random stream, derived from
``(seed, stream, index)``, so a dataset's content does not depend on how or in
which order it is generated.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterator, Sequence

import numpy as np

from mos.errors import ConfigurationError, DataError

# Stream tags keep training, testing and online data disjoint for one root seed.
STREAM_TRAIN = 1
STREAM_TEST = 2
STREAM_MEASURED = 3
STREAM_INIT = 4
STREAM_ONLINE = 5
STREAM_MONITOR = 6

DATASET_MAGIC = "MOSDATA v1"


@dataclass(frozen=True)
class SnrLaw:
    """Distribution of the per-sample SNR (linear power ratio ``1 / sigma_n^2``).

    ``kind`` is one of ``"uniform-linear"`` (uniform on ``[lo, hi]``),
    ``"uniform-db"`` (uniform in dB between ``lo`` and ``hi`` given in dB) or
    ``"fixed"`` (always ``lo``, a linear ratio).
    """

    kind: str = "uniform-linear"
    lo: float = 1.0
    hi: float = 1e3

    def __post_init__(self):
        if self.kind not in ("uniform-linear", "uniform-db", "fixed"):
            raise ConfigurationError(f"unknown SNR law {self.kind!r}")
        if self.kind == "uniform-linear" and not 0 < self.lo <= self.hi:
            raise ConfigurationError("linear SNR bounds must satisfy 0 < lo <= hi")
        if self.kind == "uniform-db" and not self.lo <= self.hi:
            raise ConfigurationError("dB SNR bounds must satisfy lo <= hi")
        if self.kind == "fixed" and not self.lo > 0:
            raise ConfigurationError("fixed SNR must be strictly positive")

    @classmethod
    def fixed(cls, snr: float) -> SnrLaw:
        return cls("fixed", float(snr), float(snr))

    @classmethod
    def fixed_db(cls, snr_db: float) -> SnrLaw:
        return cls.fixed(10.0 ** (snr_db / 10.0))

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "fixed":
            return self.lo
        u = rng.uniform(self.lo, self.hi)
        return 10.0 ** (u / 10.0) if self.kind == "uniform-db" else u

    def describe(self) -> str:
        return f"{self.kind}({self.lo:g},{self.hi:g})"


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Array geometry, snapshot count, SNR law and class range for data generation."""

    num_antennas: int = 9
    radius_over_lambda: float = 1.0
    num_snapshots: int = 10
    max_order: int = 3
    snr_law: SnrLaw = field(default_factory=SnrLaw)
    calibration: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        M = self.num_antennas
        if not (isinstance(M, (int, np.integer)) and M >= 1):
            raise ConfigurationError(f"num_antennas must be a positive integer, got {M!r}")
        if not self.num_snapshots >= 1:
            raise ConfigurationError("num_snapshots must be a positive integer")
        if not self.radius_over_lambda > 0:
            raise ConfigurationError("radius_over_lambda must be positive")
        if not 0 <= self.max_order < M:
            raise ConfigurationError(
                f"max_order must satisfy 0 <= Lmax < M (got Lmax={self.max_order}, M={M})"
            )
        if self.calibration is not None:
            F = np.array(self.calibration, dtype=complex)
            if F.shape != (M, M):
                raise ConfigurationError(f"calibration matrix must be {M}x{M}, got {F.shape}")
            if not np.all(np.isfinite(F)):
                raise ConfigurationError("calibration matrix has non-finite entries")
            F.setflags(write=False)
            object.__setattr__(self, "calibration", F)

    @property
    def num_classes(self) -> int:
        return self.max_order + 1

    def with_(self, **changes) -> ScenarioConfig:
        return replace(self, **changes)

    def fingerprint(self) -> str:
        """Short stable hash of every field that influences generated data."""
        h = hashlib.sha256()
        h.update(
            repr(
                (
                    int(self.num_antennas),
                    float(self.radius_over_lambda),
                    int(self.num_snapshots),
                    int(self.max_order),
                    self.snr_law.describe(),
                    int(self.seed),
                )
            ).encode()
        )
        if self.calibration is not None:
            h.update(np.ascontiguousarray(self.calibration, dtype="<c16").tobytes())
        return h.hexdigest()[:12]


@dataclass(frozen=True, eq=False)
class Sample:
    """One labeled observation: ``M x N`` complex snapshots and the true model order."""

    snapshots: np.ndarray
    label: int
    snr: float
    thetas: tuple[float, ...]

    def __post_init__(self):
        if self.label != len(self.thetas):
            raise DataError(f"label {self.label} does not match {len(self.thetas)} azimuths")
        if not np.all(np.isfinite(self.snapshots)):
            raise DataError("snapshots contain non-finite values")


def steering_vector(theta: float, M: int, r_over_lambda: float = 1.0) -> np.ndarray:
    """UCA response to a unit plane wave from azimuth ``theta`` (radians).

    Element ``m`` is ``exp(-j 2 pi (R/lambda) cos(theta - 2 pi m / M))``.
    """
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    m = np.arange(M)
    return np.exp(-2j * np.pi * r_over_lambda * np.cos(theta - 2.0 * np.pi * m / M))


def steering_matrix(thetas: Sequence[float], cfg: ScenarioConfig) -> np.ndarray:
    """Stack steering vectors column-wise into an ``M x L`` matrix (``M x 0`` for no sources)."""
    thetas = np.asarray(thetas, dtype=float).reshape(-1)
    if not np.all(np.isfinite(thetas)):
        raise ConfigurationError("azimuths must be finite")
    M = cfg.num_antennas
    m = np.arange(M)[:, None]
    return np.exp(
        -2j * np.pi * cfg.radius_over_lambda * np.cos(thetas[None, :] - 2.0 * np.pi * m / M)
    )


def tridiagonal_calibration(M: int, off_diag: float = 0.25) -> np.ndarray:
    """Coupling matrix with ones on the diagonal and ``off_diag`` on both neighbours."""
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    F = np.eye(M, dtype=complex)
    idx = np.arange(M - 1)
    F[idx, idx + 1] = off_diag
    F[idx + 1, idx] = off_diag
    return F


def apply_calibration(A: np.ndarray, F: np.ndarray) -> np.ndarray:
    A = np.asarray(A)
    F = np.asarray(F)
    if F.ndim != 2 or A.ndim != 2 or F.shape[1] != A.shape[0]:
        raise ConfigurationError(f"cannot apply {F.shape} calibration to {A.shape} manifold")
    return F @ A


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian draws; real and imaginary parts each carry ``variance / 2``."""
    parts = rng.standard_normal((2, *shape))
    return np.sqrt(variance / 2.0) * (parts[0] + 1j * parts[1])


def draw_sample(cfg: ScenarioConfig, label: int, rng: np.random.Generator) -> Sample:
    """Draw one snapshot block with ``label`` sources at independent uniform azimuths."""
    if not 0 <= label <= cfg.max_order:
        raise ConfigurationError(f"label {label} outside [0, {cfg.max_order}]")
    M, N = cfg.num_antennas, cfg.num_snapshots
    thetas = rng.uniform(0.0, 2.0 * np.pi, size=label)
    snr = cfg.snr_law.draw(rng)
    A = steering_matrix(thetas, cfg)
    if cfg.calibration is not None:
        A = apply_calibration(A, cfg.calibration)
    S = complex_gaussian(rng, (label, N))
    W = complex_gaussian(rng, (M, N), 1.0 / snr)
    Y = A @ S + W
    return Sample(Y, int(label), float(snr), tuple(float(t) for t in thetas))


def sample_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of ``stream`` under root ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(index)]))


def balanced_labels(count: int, max_order: int) -> np.ndarray:
    """Round-robin labels: every class appears ``count // (Lmax+1)`` or one more times."""
    return np.arange(count) % (max_order + 1)


def draw_balanced_dataset(
    cfg: ScenarioConfig,
    count: int,
    seed: int | None = None,
    stream: int = STREAM_TEST,
    offset: int = 0,
) -> Iterator[Sample]:
    """Yield ``count`` class-balanced samples in shuffled order.

    Sample ``i`` is drawn from stream ``(seed, stream, offset + i)``; the label
    order comes from a separate stream of the same root, so regenerating a
    dataset yields identical content regardless of consumer parallelism.
    """
    seed = cfg.seed if seed is None else seed
    labels = _shuffled_labels(cfg, count, seed, stream, offset)
    for i, label in enumerate(labels):
        yield draw_sample(cfg, int(label), sample_rng(seed, stream, offset + i))


def _shuffled_labels(cfg: ScenarioConfig, count: int, seed: int, stream: int, offset: int) -> np.ndarray:
    if count < 0:
        raise ConfigurationError("count must be non-negative")
    labels = balanced_labels(count, cfg.max_order)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(offset), 1]))
    rng.shuffle(labels)
    return labels


def draw_balanced_arrays(
    cfg: ScenarioConfig,
    count: int,
    seed: int | None = None,
    stream: int = STREAM_TEST,
    offset: int = 0,
    jobs: int = 1,
    chunk: int = 2048,
) -> tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`draw_balanced_dataset`, optionally generated on ``jobs`` threads.

    Returns ``(Y, labels)`` identical to stacking the iterator's samples,
    whatever the value of ``jobs``.
    """
    seed = cfg.seed if seed is None else seed
    labels = _shuffled_labels(cfg, count, seed, stream, offset)
    if count == 0:
        raise DataError("empty dataset requested")
    starts = range(0, count, chunk)

    def work(start):
        return draw_indexed(cfg, labels[start:start + chunk], seed, stream, offset + start)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    return np.concatenate(parts), labels.astype(np.int64)


def stack_samples(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Y, labels)`` arrays of shapes ``(K, M, N)`` and ``(K,)``."""
    samples = list(samples)
    if not samples:
        raise DataError("empty sample set")
    Y = np.stack([s.snapshots for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return Y, labels


def write_dataset(fh: BinaryIO, cfg: ScenarioConfig, samples: Sequence[Sample]) -> int:
    """Write samples in the ``MOSDATA v1`` binary layout; returns the sample count.

    Layout: ASCII header line ``MOSDATA v1, M, N, Lmax, count``, then per sample
    ``M*N`` little-endian float64 (re, im) pairs in column-major order and a
    single label byte.
    """
    samples = list(samples)
    M, N = cfg.num_antennas, cfg.num_snapshots
    fh.write(f"{DATASET_MAGIC}, {M}, {N}, {cfg.max_order}, {len(samples)}\n".encode("ascii"))
    for s in samples:
        if s.snapshots.shape != (M, N):
            raise DataError(f"sample shape {s.snapshots.shape} != ({M}, {N})")
        col_major = np.asarray(s.snapshots, dtype=complex).ravel(order="F")
        fh.write(col_major.astype("<c16").tobytes())
        fh.write(struct.pack("<B", s.label))
    return len(samples)


def read_dataset(fh: BinaryIO) -> tuple[dict, np.ndarray, np.ndarray]:
    """Parse a ``MOSDATA v1`` stream into ``(header, Y, labels)``."""
    line = fh.readline()
    try:
        parts = [p.strip() for p in line.decode("ascii").split(",")]
    except UnicodeDecodeError as exc:
        raise DataError("dataset header is not ASCII") from exc
    if len(parts) != 5 or parts[0] != DATASET_MAGIC:
        raise DataError(f"not a {DATASET_MAGIC} file")
    try:
        M, N, Lmax, count = (int(p) for p in parts[1:])
    except ValueError as exc:
        raise DataError(f"malformed dataset header: {line!r}") from exc
    rec = 16 * M * N + 1
    body = fh.read()
    if len(body) != rec * count:
        raise DataError(f"dataset body has {len(body)} bytes, expected {rec * count}")
    raw = np.frombuffer(body, dtype=np.uint8).reshape(count, rec)
    Y = (
        np.ascontiguousarray(raw[:, :-1])
        .view("<c16")
        .reshape(count, N, M)
        .transpose(0, 2, 1)
        .astype(complex)
    )
    labels = raw[:, -1].astype(np.int64)
    if np.any(labels > Lmax):
        raise DataError("label exceeds Lmax in dataset body")
    return {"M": M, "N": N, "Lmax": Lmax, "count": count}, Y, labels


def draw_indexed(
    cfg: ScenarioConfig,
    labels: Sequence[int],
    seed: int,
    stream: int,
    offset: int = 0,
) -> np.ndarray:
    """Snapshot stack ``(K, M, N)`` where entry ``i`` uses stream index ``offset + i``."""
    return np.stack(
        [
            draw_sample(cfg, int(label), sample_rng(seed, stream, offset + i)).snapshots
            for i, label in enumerate(labels)
        ]
    )
