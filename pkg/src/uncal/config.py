"""Key-value run configuration files.

The format is one ``key = value`` pair per line; blank lines and ``#``
comments are ignored. Unknown keys are rejected and every value is validated
against the type it configures.
"""

from __future__ import annotations

from pathlib import Path

from .errors import InvalidConfigError
from .experiments import PipelineConfig, SyntheticSpec
from .scalers import FitConfig

_INT_KEYS = {
    "classes", "input_dim", "n_train", "n_calib", "n_test", "n_ood",
    "epochs", "batch_size", "seed", "mc_samples", "bins",
    "fit_max_iters", "rejection_steps", "ood_batch", "ood_steps", "ood_repeats",
}
_FLOAT_KEYS = {
    "class_separation", "label_noise", "dropout_rate", "learning_rate",
    "penalty_beta", "fit_learning_rate", "fit_tol",
}
_STR_KEYS = {"scalers", "hidden_units", "out_dir"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS

_VALID_SCALERS = {"temperature", "vector", "aux"}


def parse_config_text(text: str) -> dict:
    """Parse key = value lines into a typed dict; unknown keys are errors."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _ALL_KEYS:
            raise InvalidConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise InvalidConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError as exc:
            raise InvalidConfigError(f"line {lineno}: bad value for {key!r}: {val!r}") from exc
    return values


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text())


def pipeline_config_from_dict(values: dict) -> PipelineConfig:
    """Build a validated PipelineConfig, applying desk-scale defaults."""
    v = dict(values)
    v.pop("out_dir", None)
    spec = SyntheticSpec(
        n_classes=v.pop("classes", 8),
        dim=v.pop("input_dim", 16),
        n_train=v.pop("n_train", 2000),
        n_calib=v.pop("n_calib", 1000),
        n_test=v.pop("n_test", 2000),
        n_ood=v.pop("n_ood", 1000),
        class_separation=v.pop("class_separation", 7.0),
        label_noise=v.pop("label_noise", 0.25),
        seed=v.get("seed", 0),
    )
    fit = FitConfig(
        learning_rate=v.pop("fit_learning_rate", 0.05),
        max_iters=v.pop("fit_max_iters", 500),
        convergence_tol=v.pop("fit_tol", 1e-7),
        seed=v.get("seed", 0),
    )
    hidden_raw = v.pop("hidden_units", "96,96")
    try:
        hidden = tuple(int(h) for h in hidden_raw.split(",") if h.strip())
    except ValueError as exc:
        raise InvalidConfigError(f"bad hidden_units value {hidden_raw!r}") from exc
    scalers_raw = v.pop("scalers", "temperature,vector,aux")
    scaler_names = tuple(s.strip() for s in scalers_raw.split(",") if s.strip())
    for name in scaler_names:
        if name not in _VALID_SCALERS:
            raise InvalidConfigError(f"unknown scaler {name!r}")
    return PipelineConfig(
        data=spec,
        hidden_units=hidden,
        dropout_rate=v.pop("dropout_rate", 0.2),
        learning_rate=v.pop("learning_rate", 0.15),
        epochs=v.pop("epochs", 250),
        batch_size=v.pop("batch_size", 64),
        penalty_beta=v.pop("penalty_beta", 0.1),
        mc_samples=v.pop("mc_samples", 25),
        n_bins=v.pop("bins", 15),
        scaler_names=scaler_names,
        fit=fit,
        rejection_steps=v.pop("rejection_steps", 51),
        ood_batch=v.pop("ood_batch", 100),
        ood_steps=v.pop("ood_steps", 10),
        ood_repeats=v.pop("ood_repeats", 20),
        seed=v.pop("seed", 0),
    )


def load_pipeline_config(path) -> PipelineConfig:
    return pipeline_config_from_dict(load_config(path))
