import cmath
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mos.errors import ConfigurationError, DataError
from mos.signal import (
    STREAM_TEST,
    ScenarioConfig,
    SnrLaw,
    apply_calibration,
    complex_gaussian,
    draw_balanced_arrays,
    draw_balanced_dataset,
    draw_sample,
    read_dataset,
    sample_rng,
    stack_samples,
    steering_matrix,
    steering_vector,
    tridiagonal_calibration,
    write_dataset,
)


def scalar_steering(theta, M, r, m):
    return cmath.exp(-2j * math.pi * r * math.cos(theta - 2 * math.pi * m / M))


def test_steering_theta_zero_first_element_is_one():
    a = steering_vector(0.0, 9, 1.0)
    assert a[0] == pytest.approx(1 + 0j, abs=1e-12)


@pytest.mark.parametrize("theta", [math.pi / 2, 0.3, 4.0, -1.2])
def test_steering_matches_scalar_oracle(theta):
    a = steering_vector(theta, 9, 1.0)
    expected = [scalar_steering(theta, 9, 1.0, m) for m in range(9)]
    np.testing.assert_allclose(a, expected, rtol=0, atol=1e-12)
    if theta == math.pi / 2:
        assert a[0] == pytest.approx(1 + 0j, abs=1e-12)


@given(st.floats(-50, 50), st.integers(1, 16), st.floats(0.1, 3.0))
def test_steering_unit_modulus_and_period(theta, M, r):
    a = steering_vector(theta, M, r)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    np.testing.assert_allclose(steering_vector(theta + 2 * np.pi, M, r), a, atol=1e-12)


def test_steering_matrix_shapes_and_columns():
    cfg = ScenarioConfig()
    assert steering_matrix([], cfg).shape == (9, 0)
    np.testing.assert_allclose(steering_matrix([0.7], cfg)[:, 0], steering_vector(0.7, 9, 1.0))
    A = steering_matrix([0.2, 2.9], cfg)
    for col, th in enumerate([0.2, 2.9]):
        for m in range(9):
            assert A[m, col] == pytest.approx(scalar_steering(th, 9, 1.0, m), abs=1e-12)


def test_tridiagonal_calibration():
    np.testing.assert_array_equal(
        tridiagonal_calibration(3, 0.25), [[1, 0.25, 0], [0.25, 1, 0.25], [0, 0.25, 1]]
    )
    np.testing.assert_array_equal(tridiagonal_calibration(1, 0.25), [[1]])
    np.testing.assert_array_equal(tridiagonal_calibration(9, 0.0), np.eye(9))
    F = tridiagonal_calibration(9, 0.25)
    np.testing.assert_array_equal(F, F.T)
    assert np.all(F.imag == 0)


def test_apply_calibration(rng):
    A = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    np.testing.assert_array_equal(apply_calibration(A, np.eye(3)), A)
    assert apply_calibration(np.zeros((3, 0)), np.eye(3)).shape == (3, 0)
    F = tridiagonal_calibration(3, 0.25)
    naive = np.zeros((3, 2), dtype=complex)
    for i in range(3):
        for j in range(2):
            for k in range(3):
                naive[i, j] += F[i, k] * A[k, j]
    np.testing.assert_allclose(apply_calibration(A, F), naive, atol=1e-14)
    with pytest.raises(ConfigurationError):
        apply_calibration(A, np.eye(4))


def test_config_invariants():
    with pytest.raises(ConfigurationError):
        ScenarioConfig(num_antennas=3, max_order=3)
    with pytest.raises(ConfigurationError):
        ScenarioConfig(calibration=np.eye(4))
    with pytest.raises(ConfigurationError):
        SnrLaw("uniform-linear", 0.0, 10.0)
    with pytest.raises(ConfigurationError):
        SnrLaw.fixed(-1.0)


def test_snr_laws(rng):
    lin = [SnrLaw().draw(rng) for _ in range(2000)]
    assert 1.0 <= min(lin) and max(lin) <= 1e3
    assert np.mean(lin) == pytest.approx(500.5, rel=0.05)
    db = np.array([SnrLaw("uniform-db", 0, 30).draw(rng) for _ in range(2000)])
    assert np.mean(10 * np.log10(db)) == pytest.approx(15, abs=0.6)
    assert SnrLaw.fixed_db(10).draw(rng) == pytest.approx(10.0)


def test_complex_gaussian_statistics(rng):
    var = 0.37
    n = complex_gaussian(rng, (200_000,), var)
    assert np.var(n) == pytest.approx(var, rel=0.01)
    assert np.var(n.real) == pytest.approx(var / 2, rel=0.02)
    assert abs(np.corrcoef(n.real, n.imag)[0, 1]) < 0.01


def test_noise_only_covariance_approaches_scaled_identity():
    snr = 4.0
    cfg = ScenarioConfig(num_snapshots=1000, snr_law=SnrLaw.fixed(snr))
    C = np.zeros((9, 9), dtype=complex)
    trials = 100
    for i in range(trials):
        Y = draw_sample(cfg, 0, sample_rng(1, 0, i)).snapshots
        C += Y @ Y.conj().T / Y.shape[1]
    C /= trials
    assert np.abs(C - np.eye(9) / snr).max() < 0.02 / snr


def test_noiseless_single_source_is_rank_one():
    cfg = ScenarioConfig(num_snapshots=200, snr_law=SnrLaw.fixed(1e12))
    s = draw_sample(cfg, 1, sample_rng(0, 0, 0))
    w = np.linalg.eigvalsh(s.snapshots @ s.snapshots.conj().T / 200)
    assert w[-2] / w[-1] < 1e-9
    assert s.label == 1 and len(s.thetas) == 1


def test_draw_sample_is_deterministic():
    cfg = ScenarioConfig(calibration=tridiagonal_calibration(9))
    a = draw_sample(cfg, 2, sample_rng(5, 1, 3))
    b = draw_sample(cfg, 2, sample_rng(5, 1, 3))
    assert a.snapshots.tobytes() == b.snapshots.tobytes()
    assert a.thetas == b.thetas and a.snr == b.snr


def test_draw_sample_uses_calibrated_manifold():
    F = tridiagonal_calibration(9, 0.25)
    cfg = ScenarioConfig(snr_law=SnrLaw.fixed(1e14), calibration=F)
    s = draw_sample(cfg, 1, sample_rng(0, 0, 0))
    a = F @ steering_vector(s.thetas[0], 9, 1.0)
    # Noiseless single source: every snapshot is a multiple of F a(theta).
    coef = s.snapshots[0] / a[0]
    np.testing.assert_allclose(s.snapshots, np.outer(a, coef), atol=1e-5)


def test_draw_sample_rejects_bad_label():
    with pytest.raises(ConfigurationError):
        draw_sample(ScenarioConfig(), 4, sample_rng(0, 0, 0))


def test_sample_invariants():
    from mos.signal import Sample

    with pytest.raises(DataError):
        Sample(np.zeros((2, 2), complex), 1, 1.0, ())
    with pytest.raises(DataError):
        Sample(np.full((2, 2), np.nan, complex), 0, 1.0, ())


@pytest.mark.parametrize("count,expected", [(8, {2}), (5, {1, 2}), (10_000, {2500})])
def test_balanced_dataset_counts(count, expected):
    cfg = ScenarioConfig(num_snapshots=2)
    if count > 100:
        from mos.signal import _shuffled_labels

        labels = _shuffled_labels(cfg, count, 0, STREAM_TEST, 0)
    else:
        labels = [s.label for s in draw_balanced_dataset(cfg, count)]
    counts = np.bincount(labels, minlength=4)
    assert set(counts.tolist()) <= expected and counts.sum() == count


def test_balanced_dataset_is_shuffled_and_reproducible():
    cfg = ScenarioConfig()
    a = list(draw_balanced_dataset(cfg, 64, seed=3))
    b = list(draw_balanced_dataset(cfg, 64, seed=3))
    assert [s.label for s in a] != sorted(s.label for s in a)
    assert all(x.snapshots.tobytes() == y.snapshots.tobytes() for x, y in zip(a, b))


@pytest.mark.parametrize("jobs", [1, 3])
def test_array_generation_matches_iterator(jobs):
    cfg = ScenarioConfig()
    Y, labels = draw_balanced_arrays(cfg, 50, seed=4, jobs=jobs, chunk=7)
    Y2, labels2 = stack_samples(draw_balanced_dataset(cfg, 50, seed=4))
    assert Y.tobytes() == Y2.tobytes()
    np.testing.assert_array_equal(labels, labels2)


def test_dataset_file_round_trip():
    cfg = ScenarioConfig(num_antennas=4, num_snapshots=3, max_order=2)
    samples = list(draw_balanced_dataset(cfg, 7, seed=1))
    buf = io.BytesIO()
    write_dataset(buf, cfg, samples)
    raw = buf.getvalue()
    assert raw.startswith(b"MOSDATA v1, 4, 3, 2, 7\n")
    # First record: first snapshot column, interleaved re/im little-endian float64.
    first = np.frombuffer(raw[len(b"MOSDATA v1, 4, 3, 2, 7\n"):][:16 * 4], dtype="<f8")
    y00 = samples[0].snapshots[:, 0]
    np.testing.assert_array_equal(first[0::2], y00.real)
    np.testing.assert_array_equal(first[1::2], y00.imag)
    header, Y, labels = read_dataset(io.BytesIO(raw))
    assert header == {"M": 4, "N": 3, "Lmax": 2, "count": 7}
    assert Y.tobytes() == np.stack([s.snapshots for s in samples]).tobytes()
    np.testing.assert_array_equal(labels, [s.label for s in samples])


def test_dataset_file_rejects_corruption():
    cfg = ScenarioConfig(num_antennas=4, num_snapshots=3, max_order=2)
    buf = io.BytesIO()
    write_dataset(buf, cfg, list(draw_balanced_dataset(cfg, 3)))
    with pytest.raises(DataError):
        read_dataset(io.BytesIO(buf.getvalue()[:-5]))
    with pytest.raises(DataError):
        read_dataset(io.BytesIO(b"GARBAGE\n"))
