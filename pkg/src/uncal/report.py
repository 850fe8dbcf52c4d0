"""Report bundle emission: CSVs, scaler parameters, run metadata, and SVGs.

Every float is serialized with 17 significant digits so that parsing the file
back reproduces the exact 64-bit value, which makes report bundles
byte-identical across runs with the same config and seed.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .metrics import BinnedReliability
from .scalers import AuxScaler, TemperatureScaler, VectorScaler

METRIC_COLUMNS = ["ece", "uce", "cece", "cuce", "nll", "accuracy", "mean_uncertainty"]


def fmt(x: float) -> str:
    """17-significant-digit decimal form; round-trips to the same float."""
    return format(float(x), ".17g")


def scaler_params(scaler) -> dict:
    if isinstance(scaler, TemperatureScaler):
        return {"kind": "temperature", "version": 1, "params": [scaler.log_temperature_]}
    if isinstance(scaler, VectorScaler):
        return {"kind": "vector", "version": 1, "params": list(scaler.scale_)}
    if isinstance(scaler, AuxScaler):
        return {
            "kind": "aux",
            "version": 1,
            "leaky_slope": scaler.leaky_slope,
            "params": list(np.concatenate([scaler.w1_.ravel(), scaler.b1_, scaler.w2_.ravel(), scaler.b2_])),
            "n_classes": scaler.w1_.shape[0],
        }
    raise TypeError(f"unknown scaler type {type(scaler).__name__}")


def scaler_from_params(data: dict):
    kind = data["kind"]
    params = np.array(data["params"], dtype=np.float64)
    if kind == "temperature":
        s = TemperatureScaler()
        s.log_temperature_ = float(params[0])
        return s
    if kind == "vector":
        s = VectorScaler()
        s.scale_ = params
        return s
    if kind == "aux":
        s = AuxScaler(leaky_slope=data.get("leaky_slope", 0.01))
        c = int(data["n_classes"])
        s._init_params(c)
        s._set_params_vector(params)
        return s
    raise ValueError(f"unknown scaler kind {kind!r}")


def write_scaler(scaler, path) -> None:
    Path(path).write_text(json.dumps(scaler_params(scaler), sort_keys=True) + "\n")


def read_scaler(path):
    return scaler_from_params(json.loads(Path(path).read_text()))


def write_metrics_csv(table: dict[str, dict[str, float]], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", *METRIC_COLUMNS])
        for method, row in table.items():
            w.writerow([method, *(fmt(row[c]) for c in METRIC_COLUMNS)])


def write_reliability_csv(rel: BinnedReliability, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin", "count", "mean_stat", "outcome_rate"])
        for m in range(rel.n_bins):
            w.writerow([m, int(rel.counts[m]), fmt(rel.mean_stat[m]), fmt(rel.outcome_rate[m])])


def write_rejection_csv(curve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["h_max", "retained_fraction", "top1_error"])
        for h_max, frac, err in curve.points:
            w.writerow([fmt(h_max), fmt(frac), "" if math.isnan(err) else fmt(err)])


def write_ood_csv(curve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ood_fraction", "mean_uncertainty"])
        for frac, unc in curve.points:
            w.writerow([fmt(frac), fmt(unc)])


def emit_reliability_svg(rel: BinnedReliability, path) -> None:
    """Standalone deterministic SVG: per-bin outcome bars plus the identity diagonal.

    Each bar carries data-count/data-mean/data-rate attributes so the plotted
    values can be recovered from the file itself.
    """
    width, height, margin = 440.0, 440.0, 40.0
    plot = width - 2 * margin
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(width)}" height="{int(height)}" '
        f'viewBox="0 0 {int(width)} {int(height)}">',
        f'<rect x="{fmt(margin)}" y="{fmt(margin)}" width="{fmt(plot)}" height="{fmt(plot)}" '
        'fill="none" stroke="black" stroke-width="1"/>',
    ]
    bin_w = plot / rel.n_bins
    for m in range(rel.n_bins):
        rate = float(rel.outcome_rate[m])
        bar_h = rate * plot
        x = margin + m * bin_w
        y = margin + plot - bar_h
        parts.append(
            f'<rect x="{fmt(x)}" y="{fmt(y)}" width="{fmt(bin_w)}" height="{fmt(bar_h)}" '
            f'fill="steelblue" stroke="black" stroke-width="0.5" '
            f'data-bin="{m}" data-count="{int(rel.counts[m])}" '
            f'data-mean="{fmt(rel.mean_stat[m])}" data-rate="{fmt(rate)}"/>'
        )
    # dashed identity diagonal: perfect calibration
    parts.append(
        f'<line x1="{fmt(margin)}" y1="{fmt(margin + plot)}" x2="{fmt(margin + plot)}" '
        f'y2="{fmt(margin)}" stroke="black" stroke-width="1" stroke-dasharray="6,4"/>'
    )
    xlabel = "mean uncertainty" if rel.mode == "uncertainty" else "mean confidence"
    ylabel = "top-1 error" if rel.mode == "uncertainty" else "accuracy"
    parts.append(
        f'<text x="{fmt(width / 2)}" y="{fmt(height - 8)}" text-anchor="middle" '
        f'font-size="14">{xlabel}</text>'
    )
    parts.append(
        f'<text x="14" y="{fmt(height / 2)}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 14 {fmt(height / 2)})">{ylabel}</text>'
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def write_report_bundle(report, out_dir, version: str) -> Path:
    """Write the full bundle for a pipeline report into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(report.metric_table(), out / "metrics.csv")
    for method in report.methods:
        for mode, rel in method.reliability.items():
            write_reliability_csv(rel, out / f"reliability_{method.name}_{mode}.csv")
            emit_reliability_svg(rel, out / f"reliability_{method.name}_{mode}.svg")
        write_rejection_csv(method.rejection, out / f"rejection_{method.name}.csv")
        write_ood_csv(method.ood, out / f"ood_{method.name}.csv")
    scalers = {name: scaler_params(s) for name, s in report.scalers.items()}
    (out / "scalers.json").write_text(json.dumps(scalers, sort_keys=True, indent=2) + "\n")
    meta = {
        "version": version,
        "seed": report.config.seed,
        "config": _config_dict(report.config),
        "ood_repeat_averaging": report.config.ood_repeats,
    }
    (out / "run.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return out


def _config_dict(cfg) -> dict:
    d = dataclasses.asdict(cfg)
    d["hidden_units"] = list(cfg.hidden_units)
    d["scaler_names"] = list(cfg.scaler_names)
    return d
