"""Versioned JSON model checkpoints: layer dims, parameters, dropout rates."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .network import DenseLayer, GaussianDropoutClassifier

CHECKPOINT_FORMAT = "uncal-model"
CHECKPOINT_VERSION = 1


def write_checkpoint(model: GaussianDropoutClassifier, path) -> None:
    data = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": model.seed,
        "hidden_units": list(model.hidden_units),
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "dropout_rate": layer.dropout_rate,
            }
            for layer in model.layers_
        ],
    }
    Path(path).write_text(json.dumps(data, sort_keys=True) + "\n")


def read_checkpoint(path) -> GaussianDropoutClassifier:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"checkpoint is not valid JSON: {exc}") from exc
    if data.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInputError(f"not a model checkpoint: format {data.get('format')!r}")
    if data.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {data.get('version')!r}")
    layers = [
        DenseLayer(
            weights=np.array(entry["weights"], dtype=np.float64),
            bias=np.array(entry["bias"], dtype=np.float64),
            dropout_rate=float(entry["dropout_rate"]),
        )
        for entry in data["layers"]
    ]
    model = GaussianDropoutClassifier(
        hidden_units=tuple(data.get("hidden_units", ())), seed=int(data.get("seed", 0))
    )
    model.layers_ = layers
    model.classes_ = np.arange(layers[-1].weights.shape[1])
    model.loss_history_ = []
    return model
