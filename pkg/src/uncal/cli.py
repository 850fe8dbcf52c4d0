"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .archive import read_archive, write_archive
from .checkpoint import read_checkpoint, write_checkpoint
from .config import load_config, load_pipeline_config, pipeline_config_from_dict
from .errors import UncalError
from .experiments import make_dataset, ood_mixing_curve, rejection_curve, run_pipeline
from .mathops import RngStream
from .metrics import (
    accuracy,
    classwise_ece,
    classwise_uce,
    ece,
    mean_uncertainty,
    nll,
    records_from_archive,
    uce,
)
from .network import GaussianDropoutClassifier, dump_archive
from .report import (
    fmt,
    read_scaler,
    write_metrics_csv,
    write_ood_csv,
    write_rejection_csv,
    write_report_bundle,
    write_scaler,
)
from .scalers import AuxScaler, FitConfig, TemperatureScaler, VectorScaler


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uncal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("version", help="print the package version")

    p = sub.add_parser("train", help="train a model on the configured synthetic data")
    p.add_argument("--config", required=True)
    p.add_argument("--beta", type=float, default=None, help="override confidence-penalty weight")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="checkpoint output path")

    p = sub.add_parser("sample", help="dump an MC logit archive for a data split")
    p.add_argument("--model", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--split", choices=["train", "calib", "test", "ood"], default="test")
    p.add_argument("--mc-samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("calibrate", help="fit a logit scaler on an archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--method", choices=["temperature", "vector", "aux"], required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="print the metric grid for an archive")
    p.add_argument("--archive", required=True)
    p.add_argument("--scaler", default=None)
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", default=None, help="also write the grid as CSV")

    p = sub.add_parser("reject", help="write the uncertainty-rejection curve")
    p.add_argument("--archive", required=True)
    p.add_argument("--scaler", default=None)
    p.add_argument("--steps", type=int, default=51)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ood", help="write the OoD mixing curve")
    p.add_argument("--archive", required=True, help="in-distribution archive")
    p.add_argument("--ood-archive", required=True)
    p.add_argument("--scaler", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run the full experiment pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="report directory (default: out_dir key)")

    return parser


def _load_optional_scaler(path):
    return read_scaler(path) if path else None


def _fit_config(values: dict, method: str) -> FitConfig:
    default_lr = 0.01 if method == "aux" else 0.05
    return FitConfig(
        learning_rate=values.get("fit_learning_rate", default_lr),
        max_iters=values.get("fit_max_iters", 500),
        convergence_tol=values.get("fit_tol", 1e-7),
        seed=values.get("seed", 0),
    )


def _cmd_train(args) -> int:
    values = load_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = pipeline_config_from_dict(values)
    beta = cfg.penalty_beta if args.beta is None else args.beta
    data = make_dataset(cfg.data)
    model = GaussianDropoutClassifier(
        hidden_units=cfg.hidden_units,
        dropout_rate=cfg.dropout_rate,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        penalty_beta=beta,
        seed=cfg.seed,
    ).fit(data.x_train, data.y_train)
    write_checkpoint(model, args.out)
    print(f"wrote checkpoint {args.out} (final loss {fmt(model.loss_history_[-1])})")
    return 0


def _cmd_sample(args) -> int:
    values = load_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = pipeline_config_from_dict(values)
    model = read_checkpoint(args.model)
    data = make_dataset(cfg.data)
    splits = {
        "train": (data.x_train, data.y_train),
        "calib": (data.x_calib, data.y_calib),
        "test": (data.x_test, data.y_test),
        "ood": (data.x_ood, np.zeros(data.x_ood.shape[0], dtype=np.int64)),
    }
    x, y = splits[args.split]
    n_mc = args.mc_samples if args.mc_samples is not None else cfg.mc_samples
    seed = args.seed if args.seed is not None else cfg.seed
    archive = dump_archive(model.layers_, x, y, n_mc, RngStream(seed).child(20))
    write_archive(archive, args.out)
    print(f"wrote archive {args.out} (n={archive.n}, N={archive.n_samples}, C={archive.n_classes})")
    return 0


def _cmd_calibrate(args) -> int:
    archive = read_archive(args.archive)
    values = load_config(args.config) if args.config else {}
    cfg = _fit_config(values, args.method)
    scaler = {
        "temperature": TemperatureScaler,
        "vector": VectorScaler,
        "aux": AuxScaler,
    }[args.method]().fit(archive, cfg)
    write_scaler(scaler, args.out)
    if args.method == "temperature":
        print(f"fitted temperature T = {fmt(scaler.temperature_)}")
    print(f"wrote scaler {args.out} (final NLL {fmt(scaler.nll_trace_[-1])})")
    return 0


def _cmd_eval(args) -> int:
    archive = read_archive(args.archive)
    records = records_from_archive(archive, _load_optional_scaler(args.scaler))
    cuce, _, _ = classwise_uce(records, args.bins)
    row = {
        "ece": ece(records, args.bins),
        "uce": uce(records, args.bins),
        "cece": classwise_ece(records, args.bins),
        "cuce": cuce,
        "nll": nll(records),
        "accuracy": accuracy(records),
        "mean_uncertainty": mean_uncertainty(records),
    }
    for name, value in row.items():
        print(f"{name:17s} {fmt(value)}")
    if args.out:
        write_metrics_csv({"archive": row}, args.out)
    return 0


def _cmd_reject(args) -> int:
    archive = read_archive(args.archive)
    records = records_from_archive(archive, _load_optional_scaler(args.scaler))
    curve = rejection_curve(records, np.linspace(0.0, 1.0, args.steps))
    write_rejection_csv(curve, args.out)
    print(f"wrote rejection curve {args.out}")
    return 0


def _cmd_ood(args) -> int:
    scaler = _load_optional_scaler(args.scaler)
    in_records = records_from_archive(read_archive(args.archive), scaler)
    ood_records = records_from_archive(read_archive(args.ood_archive), scaler)
    curve = ood_mixing_curve(
        in_records,
        ood_records,
        batch=args.batch,
        steps=args.steps,
        repeats=args.repeats,
        rng=RngStream(args.seed),
    )
    write_ood_csv(curve, args.out)
    print(f"wrote OoD curve {args.out}")
    return 0


def _cmd_pipeline(args) -> int:
    values = load_config(args.config)
    out_dir = args.out or values.get("out_dir")
    if not out_dir:
        print("pipeline: no output directory (--out or out_dir key)", file=sys.stderr)
        return 1
    cfg = pipeline_config_from_dict(values)
    report = run_pipeline(cfg)
    write_report_bundle(report, out_dir, __version__)
    print(f"wrote report bundle to {out_dir}")
    for name, row in report.metric_table().items():
        print(f"  {name:14s} uce={row['uce']:.4f} cuce={row['cuce']:.4f} acc={row['accuracy']:.4f}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "sample": _cmd_sample,
    "calibrate": _cmd_calibrate,
    "eval": _cmd_eval,
    "reject": _cmd_reject,
    "ood": _cmd_ood,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 1
    if args.command == "version":
        print(__version__)
        return 0
    try:
        return _COMMANDS[args.command](args)
    except (UncalError, OSError) as exc:
        print(f"uncal {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
