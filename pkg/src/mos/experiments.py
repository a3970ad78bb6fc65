"""Seeded experiment runners producing CSV artifacts.

Each runner trains (or loads) the networks it needs, evaluates every method on
one shared test set per operating point and writes its CSV with a comment
header carrying the experiment name, profile, seed and a configuration hash.
Re-running with the same seed reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from mos import features
from mos.classical import AIC, MDL
from mos.errors import ConfigurationError
from mos.network import MlpParams, check_compatible, load_checkpoint, save_checkpoint
from mos.signal import (
    STREAM_MEASURED,
    STREAM_TEST,
    ScenarioConfig,
    SnrLaw,
    draw_balanced_arrays,
    tridiagonal_calibration,
)
from mos.training import (
    EvalReport,
    LogRecord,
    TrainConfig,
    evaluate,
    evaluate_classical,
    random_init,
    train_offline,
    train_online,
)

log = logging.getLogger(__name__)

EXPERIMENTS = ("accuracy-table", "confusion", "snr-sweep", "snapshot-sweep", "online-curve")


@dataclass(frozen=True)
class Profile:
    """Named set of sizes for every experiment."""

    name: str
    width: int
    steps: int
    test_count: int
    sweep_count: int
    snr_grid_db: tuple[float, ...]
    sweep_law: SnrLaw
    sweep_steps: int
    snapshot_grid: tuple[int, ...]
    online_batches: tuple[int, ...]
    reference_steps: int
    cross_n_train: int = 10
    num_antennas: int = 9
    radius_over_lambda: float = 1.0
    num_snapshots: int = 10
    max_order: int = 3
    snr_law: SnrLaw = field(default_factory=SnrLaw)
    off_diag: float = 0.25
    batch_size: int = 64
    lr: float = 1e-3

    def scenario(self, seed: int = 0, **changes) -> ScenarioConfig:
        sc = ScenarioConfig(
            num_antennas=self.num_antennas,
            radius_over_lambda=self.radius_over_lambda,
            num_snapshots=self.num_snapshots,
            max_order=self.max_order,
            snr_law=self.snr_law,
            seed=seed,
        )
        return sc.with_(**changes) if changes else sc

    def calibrated(self, seed: int = 0) -> ScenarioConfig:
        return self.scenario(seed, calibration=tridiagonal_calibration(self.num_antennas, self.off_diag))

    def train_config(self, scenario: ScenarioConfig, kind: str = features.COVARIANCE,
                     steps: int | None = None, seed: int = 0) -> TrainConfig:
        return TrainConfig(
            scenario=scenario,
            feature_kind=kind,
            steps=self.steps if steps is None else steps,
            batch_size=self.batch_size,
            lr=self.lr,
            width=self.width,
            seed=seed,
        )

    def digest(self) -> str:
        return hashlib.sha256(repr(asdict(self)).encode()).hexdigest()[:12]


PROFILES = {
    "desk": Profile(
        name="desk",
        width=256,
        steps=3000,
        test_count=40_000,
        sweep_count=10_000,
        snr_grid_db=(0, 5, 10, 15, 20, 25, 30),
        sweep_law=SnrLaw("uniform-db", 0.0, 30.0),
        sweep_steps=15_625,
        snapshot_grid=(2, 5, 10, 20, 50),
        online_batches=(0, 1, 10, 100, 1000),
        reference_steps=15_625,
    ),
    "paper": Profile(
        name="paper",
        width=1024,
        steps=15_625,
        test_count=1_000_000,
        sweep_count=100_000,
        snr_grid_db=tuple(range(0, 31, 2)),
        sweep_law=SnrLaw("uniform-db", 0.0, 30.0),
        sweep_steps=15_625,
        snapshot_grid=(2, 5, 10, 20, 50),
        online_batches=(0, 1, 10, 100, 1000, 10_000),
        reference_steps=15_625,
    ),
    # Minutes-scale smoke run of the full pipeline; numbers are not meaningful.
    "smoke": Profile(
        name="smoke",
        width=32,
        steps=40,
        test_count=400,
        sweep_count=200,
        snr_grid_db=(0, 15, 30),
        sweep_law=SnrLaw("uniform-db", 0.0, 30.0),
        sweep_steps=40,
        snapshot_grid=(5, 10),
        online_batches=(0, 1, 3),
        reference_steps=60,
    ),
}


def get_profile(name: str) -> Profile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigurationError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


@dataclass
class ExperimentSpec:
    which: str
    profile: Profile
    seed: int = 0
    out_dir: Path = Path("results")
    jobs: int = 1
    cache_dir: Path | None = None
    checkpoint: Path | None = None

    def __post_init__(self):
        if self.which not in EXPERIMENTS and self.which != "table":
            raise ConfigurationError(f"unknown experiment {self.which!r}")
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigurationError(f"output directory {self.out_dir} is not writable")

    def for_(self, which: str) -> ExperimentSpec:
        return replace(self, which=which)


# ---------------------------------------------------------------------------
# network cache


_MEMORY: dict[str, MlpParams] = {}


def _net_key(cfg: TrainConfig) -> str:
    h = hashlib.sha256()
    h.update(cfg.scenario.fingerprint().encode())
    h.update(repr((cfg.feature_kind, cfg.steps, cfg.batch_size, cfg.lr, cfg.width,
                   cfg.hidden_layers, cfg.seed)).encode())
    return h.hexdigest()[:16]


def trained_network(cfg: TrainConfig, cache_dir: Path | None = None,
                    log_path: Path | None = None) -> MlpParams:
    """Train ``cfg`` once per process (and once per ``cache_dir``), then reuse it."""
    key = _net_key(cfg)
    if key in _MEMORY:
        return _MEMORY[key]
    path = None if cache_dir is None else Path(cache_dir) / f"net-{key}.mosnet"
    if path is not None and path.exists():
        params, _ = load_checkpoint(path)
    else:
        records: list[LogRecord] = []
        log.info("training %s network: %d steps, width %d, N=%d", cfg.feature_kind, cfg.steps,
                 cfg.width, cfg.scenario.num_snapshots)
        params = train_offline(cfg, on_log=records.append if log_path else None)
        if log_path is not None:
            write_training_log(log_path, records)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(params, path)
    _MEMORY[key] = params
    return params


def clear_memory_cache() -> None:
    _MEMORY.clear()


def _pretrained(spec: ExperimentSpec, cfg: TrainConfig) -> MlpParams:
    """Use ``spec.checkpoint`` when it exists, otherwise train and (if set) save there."""
    if spec.checkpoint is not None and Path(spec.checkpoint).exists():
        params, _ = load_checkpoint(spec.checkpoint)
        sc = cfg.scenario
        check_compatible(params, M=sc.num_antennas, feature_kind=cfg.feature_kind, Lmax=sc.max_order)
        return params
    params = trained_network(cfg, spec.cache_dir)
    if spec.checkpoint is not None:
        save_checkpoint(params, spec.checkpoint)
    return params


# ---------------------------------------------------------------------------
# CSV output


def _config_hash(spec: ExperimentSpec, *scenarios: ScenarioConfig) -> str:
    h = hashlib.sha256(spec.profile.digest().encode())
    for sc in scenarios:
        h.update(sc.fingerprint().encode())
    if spec.checkpoint is not None and Path(spec.checkpoint).exists():
        h.update(hashlib.sha256(Path(spec.checkpoint).read_bytes()).digest())
    return h.hexdigest()[:12]


def _write_csv(path: Path, header: str, columns: list[str], rows: list[list]) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def _header(spec: ExperimentSpec, which: str, *scenarios: ScenarioConfig) -> str:
    return (f"# experiment={which} profile={spec.profile.name} seed={spec.seed} "
            f"config={_config_hash(spec, *scenarios)}\n")


def write_training_log(path: Path, records: list[LogRecord]) -> Path:
    return _write_csv(Path(path), "", ["step", "loss", "eval_accuracy"],
                      [[r.step, r.loss, r.eval_accuracy] for r in records])


def write_eval_report(path: Path, report: EvalReport, header: str = "", normalized: bool = False) -> Path:
    """Confusion rows ``true_label,pred_0..pred_Lmax`` followed by summary rows."""
    K = report.confusion.shape[0]
    matrix = report.normalized() if normalized else report.confusion
    rows = [[t, *matrix[t].tolist()] for t in range(K)]
    rows.append(["per_class_accuracy", *report.per_class_accuracy.tolist()])
    rows.append(["overall_accuracy", report.overall_accuracy, *[""] * (K - 1)])
    rows.append(["n_test", report.n_test, *[""] * (K - 1)])
    cols = ["true_label", *[f"pred_{k}" for k in range(K)]]
    return _write_csv(Path(path), header, cols, rows)


# ---------------------------------------------------------------------------
# experiments


@dataclass
class TableResult:
    reports: dict[str, EvalReport]
    paths: list[Path]

    def overall(self, method: str) -> float:
        return self.reports[method].overall_accuracy


def _shared_testset(spec: ExperimentSpec, sc: ScenarioConfig, count: int, stream: int = STREAM_TEST):
    return draw_balanced_arrays(sc, count, seed=spec.seed, stream=stream, jobs=spec.jobs)


def _table_reports(spec: ExperimentSpec) -> tuple[ScenarioConfig, dict[str, EvalReport]]:
    prof = spec.profile
    sc = prof.scenario(spec.seed)
    cov = _pretrained(spec, prof.train_config(sc, features.COVARIANCE, seed=spec.seed))
    comp = trained_network(prof.train_config(sc, features.STACKED_IQ, seed=spec.seed), spec.cache_dir)
    test = _shared_testset(spec, sc, prof.test_count)
    reports = {
        "CovNet": evaluate(cov, test),
        "CompNet": evaluate(comp, test),
        AIC: evaluate_classical(AIC, test, sc.max_order),
        MDL: evaluate_classical(MDL, test, sc.max_order),
    }
    return sc, reports


def run_accuracy_table(spec: ExperimentSpec) -> TableResult:
    """Overall and per-class accuracy of CovNet, CompNet, AIC and MDL at the base scenario."""
    sc, reports = _table_reports(spec)
    methods = list(reports)
    rows = [["overall", *[reports[m].overall_accuracy for m in methods]]]
    for k in range(sc.num_classes):
        rows.append([k, *[reports[m].per_class_accuracy[k] for m in methods]])
    path = _write_csv(spec.out_dir / "accuracy_table.csv", _header(spec, "accuracy-table", sc),
                      ["class", *methods], rows)
    return TableResult(reports, [path])


def run_confusion(spec: ExperimentSpec) -> TableResult:
    """Per-true-class normalized confusion matrices of CovNet and MDL."""
    sc, reports = _table_reports(spec)
    header = _header(spec, "confusion", sc)
    paths = [
        write_eval_report(spec.out_dir / "confusion_covnet.csv", reports["CovNet"], header, normalized=True),
        write_eval_report(spec.out_dir / "confusion_mdl.csv", reports[MDL], header, normalized=True),
    ]
    return TableResult({"CovNet": reports["CovNet"], MDL: reports[MDL]}, paths)


def run_table(spec: ExperimentSpec) -> TableResult:
    table = run_accuracy_table(spec)
    conf = run_confusion(spec)
    return TableResult(table.reports, table.paths + conf.paths)


@dataclass
class SweepResult:
    grid: list
    accuracy: dict[str, list[float]]
    paths: list[Path]


def run_snr_sweep(spec: ExperimentSpec) -> SweepResult:
    """Accuracy at fixed SNRs on a dB grid for CovNet, AIC and MDL.

    The CovNet is trained with SNRs drawn by ``profile.sweep_law`` so that
    every grid point lies inside its training distribution.
    """
    prof = spec.profile
    train_sc = prof.scenario(spec.seed, snr_law=prof.sweep_law)
    net = _pretrained(spec, prof.train_config(train_sc, features.COVARIANCE, steps=prof.sweep_steps,
                                              seed=spec.seed))
    acc: dict[str, list[float]] = {"CovNet": [], AIC: [], MDL: []}
    rows = []
    for db in prof.snr_grid_db:
        sc = prof.scenario(spec.seed, snr_law=SnrLaw.fixed_db(db))
        # Distinct offsets keep grid points statistically independent.
        test = draw_balanced_arrays(sc, prof.sweep_count, seed=spec.seed, stream=STREAM_TEST,
                                    offset=int(round(db * 1000)) * 10_000_000, jobs=spec.jobs)
        results = {
            "CovNet": evaluate(net, test).overall_accuracy,
            AIC: evaluate_classical(AIC, test, sc.max_order).overall_accuracy,
            MDL: evaluate_classical(MDL, test, sc.max_order).overall_accuracy,
        }
        for method, a in results.items():
            acc[method].append(a)
            rows.append([f"{db:g}", method, a])
    path = _write_csv(spec.out_dir / "snr_sweep.csv", _header(spec, "snr-sweep", train_sc),
                      ["snr_db", "method", "accuracy"], rows)
    return SweepResult(list(prof.snr_grid_db), acc, [path])


def run_snapshot_sweep(spec: ExperimentSpec) -> SweepResult:
    """Accuracy versus snapshot count for matched CovNets, the fixed-N CovNet, AIC and MDL."""
    prof = spec.profile
    base = prof.scenario(spec.seed)
    n_fixed = prof.cross_n_train
    fixed_net = _pretrained(
        spec, prof.train_config(base.with_(num_snapshots=n_fixed), features.COVARIANCE, seed=spec.seed)
    )
    cross_label = f"CovNet-N{n_fixed}"
    acc: dict[str, list[float]] = {"CovNet-matched": [], cross_label: [], AIC: [], MDL: []}
    rows = []
    for N in prof.snapshot_grid:
        sc = base.with_(num_snapshots=N)
        matched = fixed_net if N == n_fixed else trained_network(
            prof.train_config(sc, features.COVARIANCE, seed=spec.seed), spec.cache_dir)
        test = draw_balanced_arrays(sc, prof.test_count, seed=spec.seed, stream=STREAM_TEST, jobs=spec.jobs)
        results = {
            "CovNet-matched": evaluate(matched, test).overall_accuracy,
            cross_label: evaluate(fixed_net, test).overall_accuracy,
            AIC: evaluate_classical(AIC, test, sc.max_order).overall_accuracy,
            MDL: evaluate_classical(MDL, test, sc.max_order).overall_accuracy,
        }
        for method, a in results.items():
            acc[method].append(a)
            rows.append([N, method, a])
    path = _write_csv(spec.out_dir / "snapshot_sweep.csv", _header(spec, "snapshot-sweep", base),
                      ["N", "method", "accuracy"], rows)
    return SweepResult(list(prof.snapshot_grid), acc, [path])


@dataclass
class OnlineResult:
    batches: list[int]
    pretrained: list[float]
    random: list[float]
    references: dict[str, float]
    paths: list[Path]

    def at(self, n_batches: int, kind: str = "pretrained") -> float:
        return getattr(self, kind)[self.batches.index(n_batches)]


def run_online_curve(spec: ExperimentSpec) -> OnlineResult:
    """Fine-tune ideal-array and random initialisations on measured calibrated-array data.

    For ``n`` batches the measured set holds exactly ``n * batch_size`` samples,
    consumed in one pass. References on the same calibrated test set: AIC,
    MDL, and a CovNet trained offline on the calibrated array for
    ``profile.reference_steps`` steps.
    """
    prof = spec.profile
    ideal = prof.scenario(spec.seed)
    cal = prof.calibrated(spec.seed)
    pre = _pretrained(spec, prof.train_config(ideal, features.COVARIANCE, seed=spec.seed))
    rnd = random_init(prof.train_config(cal, features.COVARIANCE, seed=spec.seed + 1))
    reference = trained_network(
        prof.train_config(cal, features.COVARIANCE, steps=prof.reference_steps, seed=spec.seed),
        spec.cache_dir,
    )
    test = _shared_testset(spec, cal, prof.test_count)
    refs = {
        AIC: evaluate_classical(AIC, test, cal.max_order).overall_accuracy,
        MDL: evaluate_classical(MDL, test, cal.max_order).overall_accuracy,
        "CovNet-calibrated": evaluate(reference, test).overall_accuracy,
    }
    pre_acc, rnd_acc, rows = [], [], []
    for n in prof.online_batches:
        if n > 0:
            measured = draw_balanced_arrays(cal, n * prof.batch_size, seed=spec.seed,
                                            stream=STREAM_MEASURED, jobs=spec.jobs)
        else:
            measured = None
        for kind, init, store in (("pretrained", pre, pre_acc), ("random", rnd, rnd_acc)):
            net = init if measured is None else train_online(
                init, measured, n, lr=prof.lr, seed=spec.seed, batch_size=prof.batch_size)
            a = evaluate(net, test).overall_accuracy
            store.append(a)
            rows.append([n, kind, a])
    for name, a in refs.items():
        rows.append(["", f"{name}-reference", a])
    path = _write_csv(spec.out_dir / "online_curve.csv", _header(spec, "online-curve", ideal, cal),
                      ["n_batches", "init_kind", "accuracy"], rows)
    return OnlineResult(list(prof.online_batches), pre_acc, rnd_acc, refs, [path])


RUNNERS = {
    "accuracy-table": run_accuracy_table,
    "confusion": run_confusion,
    "table": run_table,
    "snr-sweep": run_snr_sweep,
    "snapshot-sweep": run_snapshot_sweep,
    "online-curve": run_online_curve,
}


def run(spec: ExperimentSpec):
    return RUNNERS[spec.which](spec)
