"""Command-line entry point: ``mos <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from mos import experiments, features
from mos.classical import VARIANTS
from mos.errors import MosError
from mos.experiments import ExperimentSpec, get_profile, write_eval_report, write_training_log
from mos.network import load_checkpoint, save_checkpoint
from mos.signal import (
    STREAM_TEST,
    SnrLaw,
    draw_balanced_arrays,
    draw_balanced_dataset,
    read_dataset,
    tridiagonal_calibration,
    write_dataset,
)
from mos.training import LogRecord, evaluate, evaluate_classical, train_offline

FEATURE_FLAGS = {"cov": features.COVARIANCE, "iq": features.STACKED_IQ}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", default="desk", choices=sorted(experiments.PROFILES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker threads for data generation")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_scenario(p: argparse.ArgumentParser) -> None:
    p.add_argument("--antennas", type=int, default=None, help="array size M")
    p.add_argument("--snapshots", type=int, default=None, help="snapshots per sample N")
    p.add_argument("--max-order", type=int, default=None, help="largest model order Lmax")
    p.add_argument("--snr-law", default=None, choices=["uniform-linear", "uniform-db", "fixed"])
    p.add_argument("--snr-lo", type=float, default=None)
    p.add_argument("--snr-hi", type=float, default=None)
    p.add_argument("--calibrated", action="store_true", help="apply the tridiagonal coupling matrix")
    p.add_argument("--off-diag", type=float, default=None, help="coupling off-diagonal value")


def _scenario(args):
    prof = get_profile(args.profile)
    changes = {}
    if args.antennas is not None:
        changes["num_antennas"] = args.antennas
    if args.snapshots is not None:
        changes["num_snapshots"] = args.snapshots
    if args.max_order is not None:
        changes["max_order"] = args.max_order
    if args.snr_law or args.snr_lo is not None or args.snr_hi is not None:
        law = prof.snr_law
        kind = args.snr_law or law.kind
        lo = law.lo if args.snr_lo is None else args.snr_lo
        hi = law.hi if args.snr_hi is None else args.snr_hi
        changes["snr_law"] = SnrLaw.fixed(lo) if kind == "fixed" else SnrLaw(kind, lo, hi)
    sc = prof.scenario(args.seed, **changes)
    if args.calibrated or args.off_diag is not None:
        off = prof.off_diag if args.off_diag is None else args.off_diag
        sc = sc.with_(calibration=tridiagonal_calibration(sc.num_antennas, off))
    return prof, sc


def cmd_generate(args) -> None:
    _, sc = _scenario(args)
    with open(args.out, "wb") as fh:
        n = write_dataset(fh, sc, draw_balanced_dataset(sc, args.count, seed=args.seed))
    print(f"wrote {n} samples to {args.out}")


def cmd_train(args) -> None:
    prof, sc = _scenario(args)
    cfg = prof.train_config(sc, FEATURE_FLAGS[args.feature], steps=args.steps, seed=args.seed)
    if args.width is not None:
        cfg = dataclasses.replace(cfg, width=args.width)
    records: list[LogRecord] = []
    params = train_offline(cfg, on_log=records.append)
    save_checkpoint(params, args.checkpoint)
    if args.log:
        write_training_log(Path(args.log), records)
    final = records[-1].eval_accuracy if records else float("nan")
    print(f"trained {cfg.feature_kind} network for {cfg.steps} steps "
          f"(monitor accuracy {final:.4f}); saved {args.checkpoint}")


def _eval_testset(args, sc):
    if args.data:
        with open(args.data, "rb") as fh:
            header, Y, labels = read_dataset(fh)
        return header["Lmax"], (Y, labels)
    return sc.max_order, draw_balanced_arrays(sc, args.count, seed=args.seed, stream=STREAM_TEST,
                                              jobs=args.jobs)


def cmd_eval(args) -> None:
    prof, sc = _scenario(args)
    if (args.checkpoint is None) == (args.method is None):
        raise MosError("eval needs exactly one of --checkpoint or --method")
    Lmax, test = _eval_testset(args, sc)
    if args.checkpoint:
        params, _ = load_checkpoint(args.checkpoint)
        report = evaluate(params, test)
        name = f"{params.feature_kind} network"
    else:
        report = evaluate_classical(args.method, test, Lmax)
        name = args.method
    header = f"# eval method={name} seed={args.seed} n_test={report.n_test}\n"
    if args.out:
        write_eval_report(Path(args.out), report, header)
    print(f"{name}: accuracy {report.overall_accuracy:.4f} on {report.n_test} samples")


def _experiment(which: str):
    def run(args) -> None:
        spec = ExperimentSpec(
            which=which,
            profile=get_profile(args.profile),
            seed=args.seed,
            out_dir=Path(args.out),
            jobs=args.jobs,
            cache_dir=Path(args.cache) if args.cache else None,
            checkpoint=Path(args.checkpoint) if args.checkpoint else None,
        )
        result = experiments.run(spec)
        for path in result.paths:
            print(path)

    return run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mos", description="Model order selection experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a MOSDATA v1 dataset file")
    _add_common(p)
    _add_scenario(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a network offline on continuously sampled data")
    _add_common(p)
    _add_scenario(p)
    p.add_argument("--feature", choices=sorted(FEATURE_FLAGS), default="cov")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", default=None, help="training-log CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or AIC/MDL")
    _add_common(p)
    _add_scenario(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--method", choices=VARIANTS, default=None)
    p.add_argument("--data", default=None, help="MOSDATA file; otherwise a fresh test set is drawn")
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--out", default=None, help="EvalReport CSV path")
    p.set_defaults(func=cmd_eval)

    for name, which, text in (
        ("table", "table", "accuracy table and confusion matrices"),
        ("sweep-snr", "snr-sweep", "accuracy versus SNR"),
        ("sweep-snapshots", "snapshot-sweep", "accuracy versus number of snapshots"),
        ("online", "online-curve", "online adaptation to a calibrated array"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--checkpoint", default=None, help="pretrained CovNet (trained and saved if absent)")
        p.add_argument("--cache", default=None, help="directory caching trained networks")
        p.set_defaults(func=_experiment(which))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (MosError, OSError, ValueError) as exc:
        print(f"mos: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
