"""Synthetic datasets and the three evaluation protocols.

The in-distribution task is a mixture of C unit-variance Gaussian clusters
whose centers sit at radius ``class_separation`` from the origin; label noise
flips a fraction of labels so the Bayes error is nonzero and calibration has
something to correct. Out-of-distribution samples come from fresh clusters
near the decision-boundary region between the in-distribution centers,
sharing no cluster with them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .archive import LogitArchive
from .errors import InvalidInputError
from .mathops import RngStream
from .metrics import (
    EvalRecord,
    accuracy,
    classwise_ece,
    classwise_uce,
    ece,
    mean_uncertainty,
    nll,
    records_from_archive,
    reliability_data,
    uce,
)
from .network import GaussianDropoutClassifier, dump_archive
from .scalers import AuxScaler, FitConfig, TemperatureScaler, VectorScaler


@dataclass
class SyntheticSpec:
    n_classes: int = 8
    dim: int = 16
    n_train: int = 2000
    n_calib: int = 1000
    n_test: int = 2000
    n_ood: int = 1000
    class_separation: float = 7.0
    label_noise: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if min(self.n_classes, self.dim, self.n_train, self.n_calib, self.n_test, self.n_ood) <= 0:
            raise InvalidInputError("all synthetic counts must be positive")
        if self.class_separation <= 0:
            raise InvalidInputError("class separation must be positive")
        if not 0.0 <= self.label_noise < 1.0:
            raise InvalidInputError("label noise must lie in [0, 1)")


@dataclass
class SyntheticData:
    x_train: np.ndarray
    y_train: np.ndarray
    x_calib: np.ndarray
    y_calib: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    x_ood: np.ndarray
    centers: np.ndarray
    ood_centers: np.ndarray


def _spread_directions(rng, count, dim, existing=None, min_dist=None, radius=1.0):
    """Random centers at the given radius, resampled until mutually spread out."""
    centers = []
    reference = [] if existing is None else list(existing)
    for _ in range(count):
        for _attempt in range(1000):
            v = rng.standard_normal(dim)
            v = radius * v / np.linalg.norm(v)
            others = reference + centers
            if min_dist is None or all(np.linalg.norm(v - o) >= min_dist for o in others):
                centers.append(v)
                break
        else:
            raise InvalidInputError("could not place well-separated cluster centers")
    return np.array(centers)


def make_dataset(spec: SyntheticSpec) -> SyntheticData:
    """Gaussian-cluster classification data plus a disjoint OoD pool.

    In-distribution centers lie at radius ``class_separation`` with pairwise
    distance at least that separation; OoD centers sit at 60% of the radius in
    fresh directions, far from every in-distribution center but inside the
    ambiguous region where a calibrated model should be uncertain.
    """
    rng = RngStream(spec.seed)
    sep = spec.class_separation
    centers = _spread_directions(rng, spec.n_classes, spec.dim, min_dist=sep, radius=sep)
    ood_centers = _spread_directions(
        rng,
        spec.n_classes,
        spec.dim,
        existing=centers,
        min_dist=0.55 * sep,
        radius=0.6 * sep,
    )

    def sample_split(n, noise_stream):
        y = noise_stream.integers(0, spec.n_classes, size=n)
        x = centers[y] + noise_stream.standard_normal((n, spec.dim))
        if spec.label_noise > 0.0:
            # flips stay within class pairs (2k, 2k+1), mimicking confusable
            # class pairs; an unpaired last class never flips
            flip = noise_stream.random(n) < spec.label_noise
            partner = np.where(y % 2 == 0, y + 1, y - 1)
            partner = np.where(partner < spec.n_classes, partner, y)
            y = np.where(flip, partner, y)
        return x, y.astype(np.int64)

    x_train, y_train = sample_split(spec.n_train, rng.child(1))
    x_calib, y_calib = sample_split(spec.n_calib, rng.child(2))
    x_test, y_test = sample_split(spec.n_test, rng.child(3))
    ood_stream = rng.child(4)
    ood_pick = ood_stream.integers(0, spec.n_classes, size=spec.n_ood)
    x_ood = ood_centers[ood_pick] + ood_stream.standard_normal((spec.n_ood, spec.dim))
    return SyntheticData(
        x_train, y_train, x_calib, y_calib, x_test, y_test, x_ood, centers, ood_centers
    )


@dataclass
class RejectionCurve:
    """(threshold, retained fraction, top-1 error of retained) triples.

    Points are sorted by threshold descending; the error is NaN when nothing
    is retained.
    """

    points: list[tuple[float, float, float]]


def rejection_curve(records: list[EvalRecord], thresholds) -> RejectionCurve:
    """Retain records with uncertainty <= threshold, report fraction and error."""
    if len(records) == 0:
        raise InvalidInputError("rejection curve needs records")
    thresholds = sorted((float(t) for t in thresholds), reverse=True)
    if thresholds and not (0.0 <= thresholds[-1] and thresholds[0] <= 1.0):
        raise InvalidInputError("thresholds must lie in [0, 1]")
    unc = np.array([r.uncertainty for r in records])
    wrong = np.array([float(r.predicted != r.label) for r in records])
    points = []
    for h_max in thresholds:
        keep = unc <= h_max
        n_keep = int(keep.sum())
        if n_keep == 0:
            points.append((h_max, 0.0, math.nan))
        else:
            points.append((h_max, n_keep / len(records), float(wrong[keep].mean())))
    return RejectionCurve(points)


@dataclass
class OodCurve:
    """(OoD fraction, mean batch uncertainty) pairs, fractions increasing."""

    points: list[tuple[float, float]]


def ood_mixing_curve(
    in_records: list[EvalRecord],
    ood_records: list[EvalRecord],
    batch: int = 100,
    steps: int = 10,
    repeats: int = 20,
    rng: RngStream | None = None,
) -> OodCurve:
    """Mean uncertainty of batches whose OoD share sweeps from 0 to 1.

    At fraction k/steps a batch holds exactly round(batch*k/steps) OoD
    records; composition is reseeded ``repeats`` times and the mean over
    repeats reported.
    """
    rng = rng if rng is not None else RngStream(0)
    if len(in_records) < batch or len(ood_records) < batch:
        raise InvalidInputError("need at least `batch` records of each kind")
    in_unc = np.array([r.uncertainty for r in in_records])
    ood_unc = np.array([r.uncertainty for r in ood_records])
    points = []
    for k in range(steps + 1):
        frac = k / steps
        n_ood = int(round(batch * frac))
        means = []
        for rep in range(repeats):
            stream = rng.child(k).child(rep)
            vals = []
            if n_ood < batch:
                vals.append(in_unc[stream.choice(len(in_unc), batch - n_ood)])
            if n_ood > 0:
                vals.append(ood_unc[stream.choice(len(ood_unc), n_ood)])
            means.append(float(np.concatenate(vals).mean()))
        points.append((frac, float(np.mean(means))))
    return OodCurve(points)


@dataclass
class PipelineConfig:
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    hidden_units: tuple[int, ...] = (96, 96)
    dropout_rate: float = 0.2
    learning_rate: float = 0.15
    epochs: int = 250
    batch_size: int = 64
    penalty_beta: float = 0.1
    mc_samples: int = 25
    n_bins: int = 15
    scaler_names: tuple[str, ...] = ("temperature", "vector", "aux")
    fit: FitConfig = field(default_factory=FitConfig)
    rejection_steps: int = 51
    ood_batch: int = 100
    ood_steps: int = 10
    ood_repeats: int = 20
    seed: int = 0


@dataclass
class MethodResult:
    name: str
    records: list[EvalRecord]
    ood_records: list[EvalRecord]
    metrics: dict[str, float]
    reliability: dict[str, object]
    rejection: RejectionCurve
    ood: OodCurve


@dataclass
class PipelineReport:
    config: PipelineConfig
    methods: list[MethodResult]
    scalers: dict[str, object]
    base_model: GaussianDropoutClassifier
    penalty_model: GaussianDropoutClassifier
    archives: dict[str, LogitArchive]

    def metric_table(self) -> dict[str, dict[str, float]]:
        return {m.name: m.metrics for m in self.methods}


def _make_scaler(name: str):
    if name == "temperature":
        return TemperatureScaler()
    if name == "vector":
        return VectorScaler()
    if name == "aux":
        return AuxScaler()
    raise InvalidInputError(f"unknown scaler {name!r}")


def _evaluate(name, test_arch, ood_arch, cfg, scaler=None) -> MethodResult:
    records = records_from_archive(test_arch, scaler)
    ood_records = records_from_archive(ood_arch, scaler)
    cuce, _, _ = classwise_uce(records, cfg.n_bins)
    metrics = {
        "ece": ece(records, cfg.n_bins),
        "uce": uce(records, cfg.n_bins),
        "cece": classwise_ece(records, cfg.n_bins),
        "cuce": cuce,
        "nll": nll(records),
        "accuracy": accuracy(records),
        "mean_uncertainty": mean_uncertainty(records),
    }
    reliability = {
        mode: reliability_data(records, cfg.n_bins, mode)
        for mode in ("confidence", "uncertainty")
    }
    thresholds = np.linspace(0.0, 1.0, cfg.rejection_steps)
    rej = rejection_curve(records, thresholds)
    ood = ood_mixing_curve(
        records,
        ood_records,
        batch=cfg.ood_batch,
        steps=cfg.ood_steps,
        repeats=cfg.ood_repeats,
        rng=RngStream(cfg.seed).child(90),
    )
    return MethodResult(name, records, ood_records, metrics, reliability, rej, ood)


def run_pipeline(cfg: PipelineConfig) -> PipelineReport:
    """Train, calibrate, and evaluate every method; deterministic given cfg.

    Trains a plain-NLL model and a confidence-penalty model, dumps calibration
    and test archives, fits the selected scalers on the calibration archive
    only, and computes the full metric/reliability/rejection/OoD grid for the
    uncalibrated, penalty, and scaled variants.
    """
    data = make_dataset(cfg.data)

    def model(beta, seed_offset):
        return GaussianDropoutClassifier(
            hidden_units=cfg.hidden_units,
            dropout_rate=cfg.dropout_rate,
            learning_rate=cfg.learning_rate,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            penalty_beta=beta,
            seed=cfg.seed + seed_offset,
        ).fit(data.x_train, data.y_train)

    base = model(0.0, 0)
    penalty = model(cfg.penalty_beta, 0)

    n_mc = cfg.mc_samples
    dummy_ood_labels = np.zeros(data.x_ood.shape[0], dtype=np.int64)
    archives = {
        "calib": dump_archive(base.layers_, data.x_calib, data.y_calib, n_mc, RngStream(cfg.seed).child(10)),
        "test": dump_archive(base.layers_, data.x_test, data.y_test, n_mc, RngStream(cfg.seed).child(11)),
        "ood": dump_archive(base.layers_, data.x_ood, dummy_ood_labels, n_mc, RngStream(cfg.seed).child(12)),
        "penalty_test": dump_archive(penalty.layers_, data.x_test, data.y_test, n_mc, RngStream(cfg.seed).child(13)),
        "penalty_ood": dump_archive(penalty.layers_, data.x_ood, dummy_ood_labels, n_mc, RngStream(cfg.seed).child(14)),
    }

    scalers = {}
    for name in cfg.scaler_names:
        scalers[name] = _make_scaler(name).fit(archives["calib"], cfg.fit)

    methods = [
        _evaluate("uncalibrated", archives["test"], archives["ood"], cfg),
        _evaluate("conf_penalty", archives["penalty_test"], archives["penalty_ood"], cfg),
    ]
    for name in cfg.scaler_names:
        methods.append(_evaluate(name, archives["test"], archives["ood"], cfg, scalers[name]))

    return PipelineReport(cfg, methods, scalers, base, penalty, archives)
