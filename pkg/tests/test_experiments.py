import csv

import numpy as np
import pytest

from mos import experiments
from mos.errors import ConfigurationError
from mos.experiments import ExperimentSpec, get_profile
from mos.network import load_checkpoint

SMOKE = get_profile("smoke")


@pytest.fixture(autouse=True)
def fresh_memory():
    experiments.clear_memory_cache()
    yield
    experiments.clear_memory_cache()


def spec(tmp_path, which, sub="out", **kw):
    kw.setdefault("cache_dir", tmp_path / "cache")
    return ExperimentSpec(which, SMOKE, out_dir=tmp_path / sub, **kw)


def read_csv(path):
    with open(path) as fh:
        header = fh.readline()
        rows = list(csv.reader(fh))
    return header, rows[0], rows[1:]


def test_unknown_profile_and_experiment(tmp_path):
    with pytest.raises(ConfigurationError):
        get_profile("laptop")
    with pytest.raises(ConfigurationError):
        ExperimentSpec("fig9", SMOKE, out_dir=tmp_path)


def test_accuracy_table_schema(tmp_path):
    res = experiments.run(spec(tmp_path, "accuracy-table", seed=7))
    header, cols, rows = read_csv(res.paths[0])
    assert header.startswith("# experiment=accuracy-table profile=smoke seed=7 config=")
    assert cols == ["class", "CovNet", "CompNet", "AIC", "MDL"]
    assert [r[0] for r in rows] == ["overall", "0", "1", "2", "3"]
    values = np.array([[float(v) for v in r[1:]] for r in rows])
    assert np.all((values >= 0) & (values <= 1))
    # Overall accuracy is the mean of per-class accuracies on a balanced set.
    np.testing.assert_allclose(values[0], values[1:].mean(axis=0), atol=1e-6)
    n = {m: r.n_test for m, r in res.reports.items()}
    assert set(n.values()) == {SMOKE.test_count}


def test_confusion_rows_are_normalized(tmp_path):
    res = experiments.run(spec(tmp_path, "confusion"))
    assert [p.name for p in res.paths] == ["confusion_covnet.csv", "confusion_mdl.csv"]
    for path in res.paths:
        header, cols, rows = read_csv(path)
        assert "experiment=confusion" in header
        assert cols == ["true_label", "pred_0", "pred_1", "pred_2", "pred_3"]
        matrix = np.array([[float(v) for v in r[1:]] for r in rows[:4]])
        np.testing.assert_allclose(matrix.sum(axis=1), 1, atol=1e-5)
        assert [r[0] for r in rows[4:]] == ["per_class_accuracy", "overall_accuracy", "n_test"]


def test_table_writes_all_three(tmp_path):
    res = experiments.run(spec(tmp_path, "table"))
    assert sorted(p.name for p in res.paths) == [
        "accuracy_table.csv", "confusion_covnet.csv", "confusion_mdl.csv"]


def test_snr_sweep_schema(tmp_path):
    res = experiments.run(spec(tmp_path, "snr-sweep"))
    _, cols, rows = read_csv(res.paths[0])
    assert cols == ["snr_db", "method", "accuracy"]
    assert [(r[0], r[1]) for r in rows] == [
        (f"{db:g}", m) for db in SMOKE.snr_grid_db for m in ("CovNet", "AIC", "MDL")]
    assert res.grid == list(SMOKE.snr_grid_db)


def test_snapshot_sweep_schema(tmp_path):
    res = experiments.run(spec(tmp_path, "snapshot-sweep"))
    _, cols, rows = read_csv(res.paths[0])
    assert cols == ["N", "method", "accuracy"]
    methods = ("CovNet-matched", "CovNet-N10", "AIC", "MDL")
    assert [(r[0], r[1]) for r in rows] == [(str(N), m) for N in SMOKE.snapshot_grid for m in methods]
    i = SMOKE.snapshot_grid.index(10)
    assert res.accuracy["CovNet-matched"][i] == res.accuracy["CovNet-N10"][i]


def test_online_curve_schema(tmp_path):
    res = experiments.run(spec(tmp_path, "online-curve"))
    _, cols, rows = read_csv(res.paths[0])
    assert cols == ["n_batches", "init_kind", "accuracy"]
    body = [(r[0], r[1]) for r in rows]
    expected = [(str(n), k) for n in SMOKE.online_batches for k in ("pretrained", "random")]
    assert body[:len(expected)] == expected
    assert body[len(expected):] == [
        ("", "AIC-reference"), ("", "MDL-reference"), ("", "CovNet-calibrated-reference")]
    assert res.at(0) == res.pretrained[0]


def test_reruns_are_byte_identical(tmp_path):
    a = experiments.run(spec(tmp_path, "online-curve", sub="a", cache_dir=tmp_path / "ca"))
    experiments.clear_memory_cache()
    b = experiments.run(spec(tmp_path, "online-curve", sub="b", cache_dir=tmp_path / "cb"))
    assert a.paths[0].read_bytes() == b.paths[0].read_bytes()


def test_thread_count_does_not_change_results(tmp_path):
    a = experiments.run(spec(tmp_path, "snr-sweep", sub="a", jobs=1))
    b = experiments.run(spec(tmp_path, "snr-sweep", sub="b", jobs=3))
    assert a.paths[0].read_bytes() == b.paths[0].read_bytes()


def test_seed_changes_header_and_results(tmp_path):
    a = experiments.run(spec(tmp_path, "accuracy-table", sub="a", seed=0))
    b = experiments.run(spec(tmp_path, "accuracy-table", sub="b", seed=1))
    ha, hb = a.paths[0].read_text(), b.paths[0].read_text()
    assert "seed=0" in ha and "seed=1" in hb and ha != hb


def test_disk_cache_is_reused(tmp_path):
    experiments.run(spec(tmp_path, "accuracy-table"))
    cached = sorted((tmp_path / "cache").glob("net-*.mosnet"))
    assert len(cached) == 2
    stamps = [p.stat().st_mtime_ns for p in cached]
    experiments.clear_memory_cache()
    experiments.run(spec(tmp_path, "accuracy-table"))
    assert [p.stat().st_mtime_ns for p in cached] == stamps


def test_checkpoint_is_saved_then_reused(tmp_path):
    ckpt = tmp_path / "covnet.mosnet"
    first = experiments.run(spec(tmp_path, "accuracy-table", sub="a", checkpoint=ckpt))
    params, _ = load_checkpoint(ckpt)
    assert params.feature_kind == "covariance"
    experiments.clear_memory_cache()
    second = experiments.run(spec(tmp_path, "accuracy-table", sub="b", checkpoint=ckpt,
                                  cache_dir=tmp_path / "other"))
    assert first.overall("CovNet") == second.overall("CovNet")


def test_incompatible_checkpoint_is_rejected(tmp_path):
    from mos.features import STACKED_IQ
    from mos.network import save_checkpoint
    from mos.training import TrainConfig, random_init

    ckpt = tmp_path / "iq.mosnet"
    save_checkpoint(random_init(TrainConfig(SMOKE.scenario(), STACKED_IQ, width=8)), ckpt)
    with pytest.raises(Exception):
        experiments.run(spec(tmp_path, "accuracy-table", checkpoint=ckpt))
