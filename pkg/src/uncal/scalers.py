"""Logit-scaling recalibrators fitted by NLL descent on a calibration archive.

All three scalers transform logit vectors before the softmax and before MC
integration; fitting minimizes the negative log-likelihood of the
MC-integrated scaled probabilities with full-batch gradient descent. A
backtracking halving line search keeps the NLL trace monotone. The base model
that produced the archive is never touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .archive import LogitArchive
from .errors import FitFailureError, InvalidConfigError, InvalidInputError
from .mathops import softmax


@dataclass
class FitConfig:
    learning_rate: float = 0.05
    max_iters: int = 500
    convergence_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_iters <= 0 or self.convergence_tol <= 0:
            raise InvalidConfigError("fit config values must be positive")


def _archive_nll_terms(scaled: np.ndarray, labels: np.ndarray):
    """Per-pass softmaxes, MC means, and clamped true-class probabilities."""
    s = softmax(scaled)  # (n, N, C)
    pbar = s.mean(axis=1)
    p_true = np.clip(pbar[np.arange(labels.shape[0]), labels], 1e-12, None)
    return s, pbar, p_true


def _d_nll_d_scaled(s: np.ndarray, p_true: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of -sum log pbar[y] w.r.t. the scaled logits, shape (n, N, C)."""
    n, n_mc, _ = s.shape
    idx = np.arange(n)
    s_true = s[idx, :, labels]  # (n, N)
    coef = -(1.0 / (n_mc * p_true))[:, None]  # (n, 1)
    onehot = np.zeros_like(s)
    onehot[idx, :, labels] = 1.0
    return (coef * s_true)[:, :, None] * (onehot - s)


class _LogitScaler(BaseEstimator):
    """Shared fit loop; subclasses define the parameter vector and transform."""

    def fit(self, archive: LogitArchive, cfg: FitConfig | None = None):
        cfg = cfg if cfg is not None else FitConfig(learning_rate=self.default_lr)
        self._init_params(archive.n_classes)
        params = self._get_params_vector()
        nll, grad = self._nll_and_grad(params, archive)
        if not np.isfinite(nll):
            raise FitFailureError(0)
        trace = [nll]
        # the accepted step size persists across iterations (grown slightly on
        # success, halved on failure) so backtracking stays cheap
        lr = cfg.learning_rate
        for it in range(cfg.max_iters):
            cand = params - lr * grad
            cand_nll, cand_grad = self._nll_and_grad(cand, archive)
            while (not np.isfinite(cand_nll)) or cand_nll > nll:
                lr *= 0.5
                if lr < 1e-14:
                    cand, cand_nll, cand_grad = params, nll, grad
                    break
                cand = params - lr * grad
                cand_nll, cand_grad = self._nll_and_grad(cand, archive)
            else:
                lr *= 1.3
            if not np.isfinite(cand_nll):
                raise FitFailureError(it + 1)
            converged = abs(nll - cand_nll) < cfg.convergence_tol
            params, nll, grad = cand, cand_nll, cand_grad
            trace.append(nll)
            if converged:
                break
        self._set_params_vector(params)
        self.nll_trace_ = trace
        return self

    def gradient(self, archive: LogitArchive) -> np.ndarray:
        """Analytic gradient of the archive NLL at the current parameters."""
        if not hasattr(self, "_param_dim"):
            self._init_params(archive.n_classes)
        _, grad = self._nll_and_grad(self._get_params_vector(), archive)
        return grad

    def archive_nll(self, archive: LogitArchive) -> float:
        if not hasattr(self, "_param_dim"):
            self._init_params(archive.n_classes)
        nll, _ = self._nll_and_grad(self._get_params_vector(), archive)
        return nll


class TemperatureScaler(_LogitScaler):
    """Scalar temperature, parameterized as T = exp(u) so T > 0 always."""

    default_lr = 0.05

    def __init__(self):
        self.log_temperature_ = 0.0

    @property
    def temperature_(self) -> float:
        return float(np.exp(self.log_temperature_))

    def transform(self, logits: np.ndarray) -> np.ndarray:
        logits = np.asarray(logits, dtype=np.float64)
        return logits * np.exp(-self.log_temperature_)

    def _init_params(self, n_classes: int):
        self._param_dim = 1

    def _get_params_vector(self):
        return np.array([self.log_temperature_])

    def _set_params_vector(self, params):
        self.log_temperature_ = float(params[0])

    def _nll_and_grad(self, params, archive):
        u = params[0]
        scaled = archive.logits * np.exp(-u)
        s, _, p_true = _archive_nll_terms(scaled, archive.labels)
        nll = -np.log(p_true).sum()
        d_scaled = _d_nll_d_scaled(s, p_true, archive.labels)
        # d scaled/d u = -scaled
        return nll, np.array([-(d_scaled * scaled).sum()])


class VectorScaler(_LogitScaler):
    """Per-class diagonal scale factors, initialized to the 1-vector."""

    default_lr = 0.05

    def __init__(self):
        self.scale_ = None

    def transform(self, logits: np.ndarray) -> np.ndarray:
        logits = np.asarray(logits, dtype=np.float64)
        if self.scale_ is None:
            return logits.copy()
        return logits * self.scale_

    def _init_params(self, n_classes: int):
        self._param_dim = n_classes
        if self.scale_ is None or self.scale_.shape[0] != n_classes:
            self.scale_ = np.ones(n_classes)

    def _get_params_vector(self):
        return self.scale_.copy()

    def _set_params_vector(self, params):
        self.scale_ = params.copy()

    def _nll_and_grad(self, params, archive):
        scaled = archive.logits * params
        s, _, p_true = _archive_nll_terms(scaled, archive.labels)
        nll = -np.log(p_true).sum()
        d_scaled = _d_nll_d_scaled(s, p_true, archive.labels)
        grad = (d_scaled * archive.logits).sum(axis=(0, 1))
        return nll, grad


class AuxScaler(_LogitScaler):
    """Two-layer C-unit recalibration net with leaky-ReLU hidden activation.

    Both weight matrices start at the identity and biases at zero, so the
    initial transform is the identity on all-positive logits (negative entries
    pass through the leaky slope). Optional weight decay pulls the parameters
    back toward that identity start; optional early stopping monitors a
    held-out fraction of the calibration archive.
    """

    default_lr = 0.01

    def __init__(
        self,
        leaky_slope: float = 0.01,
        weight_decay: float = 0.0,
        early_stopping: bool = False,
        validation_fraction: float = 0.2,
        patience: int = 10,
    ):
        if not 0.0 < leaky_slope < 1.0:
            raise InvalidConfigError("leaky_slope must lie in (0, 1)")
        self.leaky_slope = leaky_slope
        self.weight_decay = weight_decay
        self.early_stopping = early_stopping
        self.validation_fraction = validation_fraction
        self.patience = patience
        self.w1_ = None
        self.b1_ = None
        self.w2_ = None
        self.b2_ = None

    def transform(self, logits: np.ndarray) -> np.ndarray:
        logits = np.asarray(logits, dtype=np.float64)
        if self.w1_ is None:
            return logits.copy()
        h = logits @ self.w1_.T + self.b1_
        a = np.where(h > 0.0, h, self.leaky_slope * h)
        return a @ self.w2_.T + self.b2_

    def _init_params(self, n_classes: int):
        self._n_classes = n_classes
        self._param_dim = 2 * n_classes * n_classes + 2 * n_classes
        if self.w1_ is None or self.w1_.shape[0] != n_classes:
            self.w1_ = np.eye(n_classes)
            self.b1_ = np.zeros(n_classes)
            self.w2_ = np.eye(n_classes)
            self.b2_ = np.zeros(n_classes)

    def _get_params_vector(self):
        return np.concatenate(
            [self.w1_.ravel(), self.b1_, self.w2_.ravel(), self.b2_]
        )

    def _set_params_vector(self, params):
        c = self._n_classes
        self.w1_ = params[: c * c].reshape(c, c).copy()
        self.b1_ = params[c * c : c * c + c].copy()
        self.w2_ = params[c * c + c : 2 * c * c + c].reshape(c, c).copy()
        self.b2_ = params[2 * c * c + c :].copy()

    def _identity_point(self):
        c = self._n_classes
        return np.concatenate(
            [np.eye(c).ravel(), np.zeros(c), np.eye(c).ravel(), np.zeros(c)]
        )

    def _nll_and_grad(self, params, archive):
        c = self._n_classes
        w1 = params[: c * c].reshape(c, c)
        b1 = params[c * c : c * c + c]
        w2 = params[c * c + c : 2 * c * c + c].reshape(c, c)
        b2 = params[2 * c * c + c :]
        z = archive.logits
        h = z @ w1.T + b1
        slope = np.where(h > 0.0, 1.0, self.leaky_slope)
        a = h * slope
        scaled = a @ w2.T + b2
        s, _, p_true = _archive_nll_terms(scaled, archive.labels)
        nll = -np.log(p_true).sum()
        d_scaled = _d_nll_d_scaled(s, p_true, archive.labels)  # (n, N, C)
        flat_d = d_scaled.reshape(-1, c)
        flat_a = a.reshape(-1, c)
        flat_z = z.reshape(-1, c)
        d_w2 = flat_d.T @ flat_a
        d_b2 = flat_d.sum(axis=0)
        d_h = (flat_d @ w2) * slope.reshape(-1, c)
        d_w1 = d_h.T @ flat_z
        d_b1 = d_h.sum(axis=0)
        grad = np.concatenate([d_w1.ravel(), d_b1, d_w2.ravel(), d_b2])
        if self.weight_decay > 0.0:
            delta = params - self._identity_point()
            nll += 0.5 * self.weight_decay * float(delta @ delta)
            grad = grad + self.weight_decay * delta
        return nll, grad

    def fit(self, archive: LogitArchive, cfg: FitConfig | None = None):
        if not self.early_stopping:
            return super().fit(archive, cfg)
        cfg = cfg if cfg is not None else FitConfig(learning_rate=self.default_lr)
        n = archive.n
        n_val = max(1, int(round(self.validation_fraction * n)))
        if n_val >= n:
            raise InvalidInputError("archive too small for the validation split")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
        order = rng.permutation(n)
        val_idx, fit_idx = order[:n_val], order[n_val:]
        fit_arch = LogitArchive(archive.logits[fit_idx], archive.labels[fit_idx])
        val_arch = LogitArchive(archive.logits[val_idx], archive.labels[val_idx])
        self._init_params(archive.n_classes)
        best = self._get_params_vector()
        best_val = self._nll_and_grad(best, val_arch)[0]
        bad = 0
        inner = FitConfig(cfg.learning_rate, 1, cfg.convergence_tol, cfg.seed)
        for _ in range(cfg.max_iters):
            super().fit(fit_arch, inner)
            params = self._get_params_vector()
            val = self._nll_and_grad(params, val_arch)[0]
            if val < best_val:
                best, best_val, bad = params, val, 0
            else:
                bad += 1
                if bad >= self.patience:
                    break
        self._set_params_vector(best)
        return self
