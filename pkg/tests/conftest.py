"""Shared fixtures and independent naive oracles for the test suite.

The oracle implementations here deliberately use plain Python double loops and
sequential accumulation so they share no code (and no vectorized shortcuts)
with the library, yet accumulate floating-point terms in the same record
order, allowing exact equality checks.
"""

import numpy as np
import pytest

from uncal import EvalRecord, LogitArchive, RngStream, softmax


# ---------------------------------------------------------------------------
# naive metric oracles (sequential double loops)
# ---------------------------------------------------------------------------

def naive_bin(v, n_bins):
    b = int(v * n_bins)
    return n_bins - 1 if b >= n_bins else b


def _naive_gap(pairs, n_bins):
    """pairs: list of (stat, outcome) floats; sequential per-bin accumulation."""
    n = len(pairs)
    total = 0.0
    for m in range(n_bins):
        count = 0
        stat_sum = 0.0
        outcome_sum = 0.0
        for stat, outcome in pairs:
            if naive_bin(stat, n_bins) == m:
                count += 1
                stat_sum += stat
                outcome_sum += outcome
        if count > 0:
            total += (count / n) * abs(outcome_sum / count - stat_sum / count)
    return total


def naive_ece(records, n_bins):
    return _naive_gap(
        [(r.confidence, float(r.predicted == r.label)) for r in records], n_bins
    )


def naive_uce(records, n_bins):
    return _naive_gap(
        [(r.uncertainty, float(r.predicted != r.label)) for r in records], n_bins
    )


def naive_classwise_uce(records, n_bins):
    n_classes = records[0].probs.shape[0]
    values = []
    for c in range(n_classes):
        subset = [r for r in records if r.label == c]
        if subset:
            values.append(naive_uce(subset, n_bins))
    total = 0.0
    for v in values:
        total += v
    return total / len(values)


def naive_classwise_ece(records, n_bins):
    n_classes = records[0].probs.shape[0]
    total = 0.0
    for c in range(n_classes):
        pairs = [(float(r.probs[c]), float(r.label == c)) for r in records]
        total += _naive_gap(pairs, n_bins)
    return total / n_classes


# ---------------------------------------------------------------------------
# synthetic record builders
# ---------------------------------------------------------------------------

def random_records(rng: RngStream, n: int, n_classes: int):
    """Records with random logit-derived probabilities and random labels."""
    logits = 2.0 * rng.standard_normal((n, n_classes))
    probs = softmax(logits)
    labels = rng.integers(0, n_classes, size=n)
    return [EvalRecord.from_probs(p, int(y)) for p, y in zip(probs, labels)]


def calibrated_records(rng: RngStream, n: int, n_classes: int = 4):
    """Records whose label is wrong with probability equal to the uncertainty.

    This is the fixed point of uncertainty calibration: within any bin the
    expected top-1 error rate equals the mean uncertainty, so UCE tends to 0
    as n grows.
    """
    scale = 0.5 + 2.5 * rng.random(n)
    probs = softmax(scale[:, None] * rng.standard_normal((n, n_classes)))
    flip = rng.random(n)
    wrong_pick = rng.integers(0, n_classes - 1, size=n)
    records = []
    for i in range(n):
        pred = int(np.argmax(probs[i]))
        base = EvalRecord.from_probs(probs[i], pred)
        label = pred
        if flip[i] < base.uncertainty:
            k = int(wrong_pick[i])
            label = k if k < pred else k + 1
        records.append(base if label == pred else EvalRecord.from_probs(probs[i], label))
    return records


def sampled_label_archive(
    rng: RngStream, n: int, n_classes: int, t_star: float = 1.0, n_mc: int = 1
) -> LogitArchive:
    """Archive whose labels are drawn from softmax(z / t_star).

    The NLL-optimal temperature for such data is t_star, making this a
    recovery oracle for the temperature fit.
    """
    logits = 3.0 * rng.standard_normal((n, n_classes))
    p = softmax(logits / t_star)
    u = rng.random(n)
    labels = (u[:, None] > p.cumsum(axis=1)).sum(axis=1)
    stacked = np.repeat(logits[:, None, :], n_mc, axis=1)
    return LogitArchive(logits=stacked, labels=labels.astype(np.int64))


def random_archive(rng: RngStream, n: int, n_mc: int, n_classes: int) -> LogitArchive:
    logits = rng.standard_normal((n, n_mc, n_classes))
    labels = rng.integers(0, n_classes, size=n).astype(np.int64)
    return LogitArchive(logits=logits, labels=labels)


# ---------------------------------------------------------------------------
# finite-difference gradient checks
# ---------------------------------------------------------------------------

def rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(numeric), 1e-6)


def model_gradient_errors(beta: float, seed: int = 0, h: float = 1e-5):
    """Relative errors of every model-parameter gradient vs central differences.

    Uses a tiny 2-3-2 network with frozen dropout noise so the loss is a
    smooth deterministic function of the parameters.
    """
    from uncal.network import DenseLayer, _draw_eps, _loss_and_grads

    rng = RngStream(seed)
    layers = [
        DenseLayer(0.7 * rng.standard_normal((2, 3)), 0.1 * rng.standard_normal(3), 0.0),
        DenseLayer(0.7 * rng.standard_normal((3, 2)), 0.1 * rng.standard_normal(2), 0.3),
    ]
    x = rng.standard_normal((4, 2))
    y = np.array([0, 1, 1, 0])
    eps_list = _draw_eps(layers, (4,), rng)

    def loss_only():
        return _loss_and_grads(layers, x, y, beta, eps_list)[0]

    _, grads = _loss_and_grads(layers, x, y, beta, eps_list)
    errors = []
    for layer, (dw, db) in zip(layers, grads):
        for arr, grad in ((layer.weights, dw), (layer.bias, db)):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + h
                plus = loss_only()
                arr[idx] = orig - h
                minus = loss_only()
                arr[idx] = orig
                errors.append(rel_err(grad[idx], (plus - minus) / (2.0 * h)))
    return errors


def scaler_gradient_errors(scaler, archive: LogitArchive, h: float = 1e-6):
    """Relative errors of a scaler's analytic NLL gradient vs central differences."""
    scaler._init_params(archive.n_classes)
    params = scaler._get_params_vector()
    _, grad = scaler._nll_and_grad(params, archive)
    errors = []
    for i in range(params.shape[0]):
        plus = params.copy()
        plus[i] += h
        minus = params.copy()
        minus[i] -= h
        fd = (
            scaler._nll_and_grad(plus, archive)[0]
            - scaler._nll_and_grad(minus, archive)[0]
        ) / (2.0 * h)
        errors.append(rel_err(grad[i], fd))
    return errors


@pytest.fixture
def rng():
    return RngStream(12345)
