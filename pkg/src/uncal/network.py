"""Fully-connected classifier with Monte Carlo Gaussian dropout.

Dropout noise at a layer is sampled directly from the Gaussian implied by
Bernoulli dropout of the layer's input: the pre-activation is

    y = mu + sigma * eps,   eps ~ N(0, 1) elementwise,

with mu = W^T x + b and sigma^2 = p/(1-p) * (W^2)^T x^2. The bias enters mu
only, never the variance. Gradients flow through both mu and sigma
(reparameterization), so the network can be trained with plain mini-batch SGD
and manual backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .archive import LogitArchive
from .errors import InvalidConfigError, InvalidInputError, TrainingFailureError
from .mathops import RngStream, normalized_entropy, softmax


@dataclass
class DenseLayer:
    """One affine layer; weights has shape (in, out)."""

    weights: np.ndarray
    bias: np.ndarray
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise InvalidInputError("layer weight/bias shapes are inconsistent")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise InvalidInputError("layer parameters must be finite")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfigError("dropout rate must lie in [0, 1)")

    @property
    def variance_factor(self) -> float:
        p = self.dropout_rate
        return p / (1.0 - p)


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 40
    batch_size: int = 64
    penalty_beta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be positive")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise InvalidConfigError("epochs and batch_size must be positive")
        if self.penalty_beta < 0:
            raise InvalidConfigError("penalty_beta must be non-negative")


def gaussian_dropout_forward(
    layer: DenseLayer, x: np.ndarray, rng: RngStream | None, eps: np.ndarray | None = None
) -> np.ndarray:
    """One stochastic pre-activation; x may be (in,) or (B, in).

    Pass ``eps`` explicitly to freeze the noise (gradient checks, replay);
    otherwise it is drawn from ``rng``.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("layer input contains NaN or Inf")
    mu = x @ layer.weights + layer.bias
    if layer.dropout_rate == 0.0:
        return mu
    var = layer.variance_factor * (x**2 @ layer.weights**2)
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    return mu + np.sqrt(var) * eps


def bernoulli_dropout_forward(layer: DenseLayer, x: np.ndarray, rng: RngStream) -> np.ndarray:
    """Classic dropout pass; oracle for the Gaussian approximation.

    Input entries are zeroed with probability p and the survivors rescaled by
    1/(1-p), so the output mean matches the no-dropout affine map.
    """
    x = np.asarray(x, dtype=np.float64)
    p = layer.dropout_rate
    if p == 0.0:
        return x @ layer.weights + layer.bias
    keep = rng.bernoulli(1.0 - p, x.shape)
    return (keep * x / (1.0 - p)) @ layer.weights + layer.bias


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def forward_logits(
    layers: list[DenseLayer],
    x: np.ndarray,
    rng: RngStream | None = None,
    eps_list: list[np.ndarray | None] | None = None,
) -> np.ndarray:
    """One stochastic forward pass to logits; ReLU between layers.

    With ``rng=None`` and no ``eps_list`` the pass is deterministic (eps = 0,
    i.e. the expected pre-activations; debugging mode).
    """
    a = np.asarray(x, dtype=np.float64)
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        eps = eps_list[i] if eps_list is not None else None
        if eps is None and rng is None and layer.dropout_rate > 0.0:
            eps = np.zeros(a.shape[:-1] + (layer.weights.shape[1],))
        z = gaussian_dropout_forward(layer, a, rng, eps=eps)
        a = z if i == last else _relu(z)
    return a


def _forward_cached(layers, x_batch, eps_list):
    """Forward pass keeping per-layer caches for backprop."""
    caches = []
    a = x_batch
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        mu = a @ layer.weights + layer.bias
        if layer.dropout_rate > 0.0:
            var = layer.variance_factor * (a**2 @ layer.weights**2)
            sigma = np.sqrt(var)
            z = mu + sigma * eps_list[i]
        else:
            sigma = None
            z = mu
        out = z if i == last else _relu(z)
        caches.append((a, sigma, eps_list[i] if sigma is not None else None, z))
        a = out
    return a, caches


def _backward(layers, caches, d_logits):
    """Gradients of a scalar loss w.r.t. all weights/biases given d loss/d logits."""
    grads = [None] * len(layers)
    d_out = d_logits
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        a, sigma, eps, z = caches[i]
        if i != len(layers) - 1:
            d_out = d_out * (z > 0.0)
        d_z = d_out
        d_w = a.T @ d_z
        d_b = d_z.sum(axis=0)
        d_a = d_z @ layer.weights.T
        if sigma is not None:
            # sigma gradient: d z/d w_jk includes r * w_jk * a_j^2 * eps_k / sigma_k
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(sigma > 0.0, d_z * eps / sigma, 0.0)
            r = layer.variance_factor
            d_w = d_w + r * layer.weights * ((a**2).T @ g)
            d_a = d_a + r * a * (g @ (layer.weights**2).T)
        grads[i] = (d_w, d_b)
        d_out = d_a
    return grads


def _loss_and_grads(layers, x_batch, y_batch, beta, eps_list):
    """Summed per-example loss -log p[y] - beta*H(p) and parameter gradients.

    Uses a single stochastic pass per example (the provided eps), matching how
    dropout networks are trained; MC integration is a test-time construct.
    """
    logits, caches = _forward_cached(layers, x_batch, eps_list)
    probs = softmax(logits)
    n = x_batch.shape[0]
    idx = np.arange(n)
    p_true = np.clip(probs[idx, y_batch], 1e-12, None)
    loss = -np.log(p_true).sum()
    onehot = np.zeros_like(probs)
    onehot[idx, y_batch] = 1.0
    d_logits = probs - onehot
    if beta > 0.0:
        logp = np.log(np.clip(probs, 1e-12, None))
        ent = -(probs * logp).sum(axis=1)
        loss -= beta * ent.sum()
        # d(-H)/dz_k = p_k * (log p_k + H)
        d_logits = d_logits + beta * probs * (logp + ent[:, None])
    grads = _backward(layers, caches, d_logits)
    return loss, grads


def _draw_eps(layers, batch_shape, rng):
    eps_list = []
    for layer in layers:
        if layer.dropout_rate > 0.0:
            eps_list.append(rng.standard_normal(batch_shape + (layer.weights.shape[1],)))
        else:
            eps_list.append(None)
    return eps_list


def mc_forward(
    layers: list[DenseLayer], x: np.ndarray, n_passes: int, rng: RngStream
) -> np.ndarray:
    """N stochastic passes for a single input; returns logits of shape (N, C).

    The noise for all passes is drawn from ``rng`` layer by layer in one block
    per layer, which is the canonical order batch evaluation must reproduce.
    """
    if n_passes < 1:
        raise InvalidInputError("n_passes must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    tiled = np.broadcast_to(x, (n_passes,) + x.shape)
    eps_list = _draw_eps(layers, (n_passes,), rng)
    logits, _ = _forward_cached(layers, tiled, eps_list)
    return logits


def mc_predict(
    layers: list[DenseLayer],
    x: np.ndarray,
    n_passes: int,
    rng: RngStream,
    scaler=None,
) -> np.ndarray:
    """MC-integrated probability vector (1/N) sum_i softmax(scaler(z_i))."""
    logits = mc_forward(layers, x, n_passes, rng)
    if scaler is not None:
        logits = scaler.transform(logits)
    return softmax(logits).mean(axis=0)


def dump_archive(
    layers: list[DenseLayer],
    inputs: np.ndarray,
    labels: np.ndarray,
    n_passes: int,
    rng: RngStream,
) -> LogitArchive:
    """MC logits for every input, each under its own child stream (seed, i)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = inputs.shape[0]
    stacks = np.empty((n, n_passes, _out_dim(layers)))
    for i in range(n):
        stacks[i] = mc_forward(layers, inputs[i], n_passes, rng.child(i))
    return LogitArchive(logits=stacks, labels=labels)


def _out_dim(layers) -> int:
    return layers[-1].weights.shape[1]


class GaussianDropoutClassifier(BaseEstimator, ClassifierMixin):
    """Dense classifier trained by SGD with Gaussian dropout at hidden layers.

    Dropout noise sits between weight layers: the first layer is
    deterministic, every subsequent layer (including the logit layer) receives
    Gaussian noise implied by dropping its input at rate ``dropout_rate``.

    Fitted attributes: ``layers_`` (list of DenseLayer) and ``loss_history_``
    (mean training loss per epoch).
    """

    def __init__(
        self,
        hidden_units=(64, 64),
        dropout_rate: float = 0.2,
        learning_rate: float = 0.05,
        epochs: int = 40,
        batch_size: int = 64,
        penalty_beta: float = 0.0,
        seed: int = 0,
    ):
        self.hidden_units = hidden_units
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.penalty_beta = penalty_beta
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            penalty_beta=self.penalty_beta,
            seed=self.seed,
        )

    def _init_layers(self, n_features: int, n_classes: int, rng: RngStream):
        dims = [n_features, *self.hidden_units, n_classes]
        layers = []
        for i in range(len(dims) - 1):
            fan_in = dims[i]
            w = rng.standard_normal((fan_in, dims[i + 1])) * np.sqrt(2.0 / fan_in)
            p = 0.0 if i == 0 else float(self.dropout_rate)
            layers.append(DenseLayer(weights=w, bias=np.zeros(dims[i + 1]), dropout_rate=p))
        return layers

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise InvalidInputError("X must be a nonempty (n, d) array")
        if y.shape != (X.shape[0],):
            raise InvalidInputError("y must match X in length")
        cfg = self._config()
        n_classes = int(y.max()) + 1
        if n_classes < 2:
            raise InvalidInputError("need at least 2 classes")
        rng = RngStream(cfg.seed)
        layers = self._init_layers(X.shape[1], n_classes, rng)
        self.layers_, self.loss_history_ = train(layers, X, y, cfg, rng=rng)
        self.classes_ = np.arange(n_classes)
        return self

    def mc_logits(self, X, n_passes: int = 25, rng: RngStream | None = None) -> np.ndarray:
        """Stacked MC logits of shape (n, N, C), one child stream per input."""
        rng = rng if rng is not None else RngStream(self.seed + 1)
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty((X.shape[0], n_passes, len(self.classes_)))
        for i in range(X.shape[0]):
            out[i] = mc_forward(self.layers_, X[i], n_passes, rng.child(i))
        return out

    def predict_proba(
        self, X, n_passes: int = 25, rng: RngStream | None = None, scaler=None
    ) -> np.ndarray:
        logits = self.mc_logits(X, n_passes, rng)
        if scaler is not None:
            logits = scaler.transform(logits)
        return softmax(logits).mean(axis=1)

    def predict(self, X, n_passes: int = 25, rng: RngStream | None = None) -> np.ndarray:
        return np.argmax(self.predict_proba(X, n_passes, rng), axis=1)

    def mean_uncertainty(self, X, n_passes: int = 25, rng: RngStream | None = None) -> float:
        return float(np.mean(normalized_entropy(self.predict_proba(X, n_passes, rng))))


def train(
    layers: list[DenseLayer],
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    rng: RngStream | None = None,
) -> tuple[list[DenseLayer], list[float]]:
    """Mini-batch SGD on -log p[y] - beta*H(p); returns layers and loss history.

    Deterministic given cfg.seed: shuffling and the per-step dropout noise all
    come from one stream. Raises TrainingFailureError naming the step if the
    loss goes non-finite.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise InvalidInputError("training data must be nonempty")
    rng = rng if rng is not None else RngStream(cfg.seed)
    n = X.shape[0]
    history = []
    step = 0
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb, yb = X[batch], y[batch]
            eps_list = _draw_eps(layers, (xb.shape[0],), rng)
            loss, grads = _loss_and_grads(layers, xb, yb, cfg.penalty_beta, eps_list)
            if not np.isfinite(loss):
                raise TrainingFailureError(step)
            lr = cfg.learning_rate / xb.shape[0]
            for layer, (dw, db) in zip(layers, grads):
                layer.weights -= lr * dw
                layer.bias -= lr * db
            epoch_loss += loss
            step += 1
        history.append(epoch_loss / n)
    return layers, history
