import numpy as np
import pytest
from sklearn.base import clone

from conftest import model_gradient_errors
from uncal import (
    DenseLayer,
    GaussianDropoutClassifier,
    InvalidConfigError,
    InvalidInputError,
    RngStream,
    TemperatureScaler,
    TrainConfig,
    UncalError,
    bernoulli_dropout_forward,
    dump_archive,
    gaussian_dropout_forward,
    mc_forward,
    mc_predict,
    normalized_entropy,
    train,
)
from uncal.network import forward_logits


def small_layer(seed=0, n_in=6, n_out=4, p=0.3):
    rng = RngStream(seed)
    return DenseLayer(
        weights=rng.standard_normal((n_in, n_out)),
        bias=rng.standard_normal(n_out),
        dropout_rate=p,
    )


class TestDenseLayer:
    def test_rejects_dropout_rate_one(self):
        with pytest.raises(InvalidConfigError):
            DenseLayer(np.eye(2), np.zeros(2), dropout_rate=1.0)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            DenseLayer(np.eye(2), np.zeros(3))

    def test_rejects_non_finite_weights(self):
        with pytest.raises(InvalidInputError):
            DenseLayer(np.array([[np.nan, 0.0]]), np.zeros(2))

    def test_variance_factor(self):
        assert small_layer(p=0.5).variance_factor == pytest.approx(1.0)
        assert small_layer(p=0.2).variance_factor == pytest.approx(0.25)


class TestGaussianDropoutForward:
    def test_zero_rate_is_exact_affine_map(self):
        layer = small_layer(p=0.0)
        x = RngStream(1).standard_normal(6)
        out = gaussian_dropout_forward(layer, x, RngStream(2))
        assert np.array_equal(out, x @ layer.weights + layer.bias)

    def test_frozen_eps_matches_closed_form(self):
        layer = small_layer(p=0.5)  # variance factor exactly 1
        x = RngStream(1).standard_normal(6)
        eps = np.ones(4)
        out = gaussian_dropout_forward(layer, x, None, eps=eps)
        mu = x @ layer.weights + layer.bias
        sigma = np.sqrt(x**2 @ layer.weights**2)
        assert np.allclose(out, mu + sigma, atol=1e-12)

    def test_bias_excluded_from_variance(self):
        layer = small_layer(p=0.5)
        shifted = DenseLayer(layer.weights, layer.bias + 100.0, layer.dropout_rate)
        x = RngStream(1).standard_normal(6)
        eps = RngStream(3).standard_normal(4)
        a = gaussian_dropout_forward(layer, x, None, eps=eps)
        b = gaussian_dropout_forward(shifted, x, None, eps=eps)
        # a huge bias shift moves the mean but not the noise magnitude
        assert np.allclose(b - a, 100.0, atol=1e-9)

    def test_empirical_mean_matches_mu(self):
        layer = small_layer(p=0.2)
        x = RngStream(1).standard_normal(6)
        tiled = np.tile(x, (100_000, 1))
        draws = gaussian_dropout_forward(layer, tiled, RngStream(4))
        mu = x @ layer.weights + layer.bias
        sigma = np.sqrt(layer.variance_factor * (x**2 @ layer.weights**2))
        assert np.all(np.abs(draws.mean(axis=0) - mu) < 4.0 * sigma / np.sqrt(100_000))

    def test_rejects_non_finite_input(self):
        with pytest.raises(InvalidInputError):
            gaussian_dropout_forward(small_layer(), np.array([np.nan] * 6), RngStream(0))


class TestBernoulliMomentMatch:
    def test_zero_rate_exact(self):
        layer = small_layer(p=0.0)
        x = RngStream(1).standard_normal(6)
        out = bernoulli_dropout_forward(layer, x, RngStream(2))
        assert np.array_equal(out, x @ layer.weights + layer.bias)

    def test_mean_and_variance_match_gaussian_moments(self):
        layer = small_layer(seed=9, p=0.2)
        x = RngStream(1).standard_normal(6)
        n = 100_000
        draws = bernoulli_dropout_forward(layer, np.tile(x, (n, 1)), RngStream(5))
        mu = x @ layer.weights + layer.bias
        var = layer.variance_factor * (x**2 @ layer.weights**2)
        se = np.sqrt(var / n)
        assert np.all(np.abs(draws.mean(axis=0) - mu) < 5.0 * se)
        assert np.all(np.abs(draws.var(axis=0) - var) < 0.05 * var)


class TestMcForward:
    def layers(self):
        rng = RngStream(11)
        return [
            DenseLayer(rng.standard_normal((3, 5)), np.zeros(5), 0.0),
            DenseLayer(rng.standard_normal((5, 4)), np.zeros(4), 0.2),
        ]

    def test_shape_and_determinism(self):
        layers = self.layers()
        x = RngStream(1).standard_normal(3)
        a = mc_forward(layers, x, 7, RngStream(42))
        b = mc_forward(layers, x, 7, RngStream(42))
        assert a.shape == (7, 4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a[0], a[1])

    def test_no_dropout_single_pass_is_plain_forward(self):
        rng = RngStream(12)
        layers = [
            DenseLayer(rng.standard_normal((3, 5)), np.zeros(5), 0.0),
            DenseLayer(rng.standard_normal((5, 4)), np.zeros(4), 0.0),
        ]
        x = RngStream(1).standard_normal(3)
        out = mc_forward(layers, x, 1, RngStream(0))
        assert np.allclose(out[0], forward_logits(layers, x), atol=1e-12)

    def test_rejects_zero_passes(self):
        with pytest.raises(InvalidInputError):
            mc_forward(self.layers(), np.zeros(3), 0, RngStream(0))

    def test_mc_predict_matches_brute_force(self):
        layers = self.layers()
        x = RngStream(1).standard_normal(3)
        logits = mc_forward(layers, x, 25, RngStream(9))
        expected = np.zeros(4)
        for i in range(25):
            z = logits[i]
            e = np.exp(z - z.max())
            expected += e / e.sum()
        expected /= 25
        got = mc_predict(layers, x, 25, RngStream(9))
        assert np.allclose(got, expected, atol=1e-12)

    def test_identity_scaler_equals_unit_temperature(self):
        layers = self.layers()
        x = RngStream(1).standard_normal(3)
        plain = mc_predict(layers, x, 10, RngStream(3))
        scaled = mc_predict(layers, x, 10, RngStream(3), scaler=TemperatureScaler())
        assert np.array_equal(plain, scaled)

    def test_infinite_temperature_limit_is_uniform(self):
        layers = self.layers()
        x = RngStream(1).standard_normal(3)
        hot = TemperatureScaler()
        hot.log_temperature_ = np.log(1e6)
        p = mc_predict(layers, x, 10, RngStream(3), scaler=hot)
        assert np.all(np.abs(p - 0.25) < 1e-4)

    def test_mc_predict_is_valid_prob_vector(self):
        layers = self.layers()
        for k in range(10):
            p = mc_predict(layers, RngStream(k).standard_normal(3), 5, RngStream(k))
            assert abs(p.sum() - 1.0) < 1e-9
            assert np.all(p >= 0.0)


class TestTraining:
    def separable_data(self):
        rng = RngStream(21)
        x0 = rng.standard_normal((40, 2)) + np.array([4.0, 0.0])
        x1 = rng.standard_normal((40, 2)) + np.array([-4.0, 0.0])
        x = np.vstack([x0, x1])
        y = np.array([0] * 40 + [1] * 40)
        return x, y

    def test_separable_data_reaches_full_accuracy(self):
        x, y = self.separable_data()
        model = GaussianDropoutClassifier(
            hidden_units=(8,), dropout_rate=0.0, learning_rate=0.2, epochs=200, seed=0
        ).fit(x, y)
        assert np.mean(model.predict(x) == y) == 1.0

    def test_full_batch_small_lr_loss_non_increasing(self):
        x, y = self.separable_data()
        rng = RngStream(0)
        layers = [
            DenseLayer(rng.standard_normal((2, 8)) * 0.5, np.zeros(8), 0.0),
            DenseLayer(rng.standard_normal((8, 2)) * 0.5, np.zeros(2), 0.0),
        ]
        cfg = TrainConfig(learning_rate=1e-3, epochs=30, batch_size=80)
        _, history = train(layers, x, y, cfg)
        diffs = np.diff(history)
        assert np.all(diffs <= 1e-9)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_training_failure_on_divergence(self):
        x, y = self.separable_data()
        with pytest.raises(UncalError):
            GaussianDropoutClassifier(
                hidden_units=(8,), learning_rate=1e9, epochs=5, seed=0
            ).fit(x * 100, y)

    def test_gradients_match_finite_differences(self):
        for beta in (0.0, 0.1):
            errors = model_gradient_errors(beta)
            assert max(errors) < 1e-4

    def test_confidence_penalty_raises_entropy(self):
        x, y = self.separable_data()
        kwargs = dict(hidden_units=(8,), learning_rate=0.2, epochs=100, seed=0)
        plain = GaussianDropoutClassifier(penalty_beta=0.0, **kwargs).fit(x, y)
        pen = GaussianDropoutClassifier(penalty_beta=0.5, **kwargs).fit(x, y)
        h = lambda m: np.mean(normalized_entropy(m.predict_proba(x, rng=RngStream(99))))
        assert h(pen) > h(plain)

    def test_rejects_bad_inputs(self):
        with pytest.raises(InvalidInputError):
            GaussianDropoutClassifier().fit(np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(InvalidInputError):
            GaussianDropoutClassifier().fit(np.zeros((4, 2)), np.zeros(3, dtype=int))

    def test_invalid_train_config(self):
        with pytest.raises(InvalidConfigError):
            TrainConfig(learning_rate=-1.0)
        with pytest.raises(InvalidConfigError):
            TrainConfig(penalty_beta=-0.5)

    def test_dropout_layout_first_layer_deterministic(self):
        x, y = self.separable_data()
        model = GaussianDropoutClassifier(hidden_units=(8, 8), epochs=1, seed=0).fit(x, y)
        rates = [layer.dropout_rate for layer in model.layers_]
        assert rates == [0.0, 0.2, 0.2]

    def test_sklearn_estimator_surface(self):
        model = GaussianDropoutClassifier(hidden_units=(8,), epochs=3)
        params = model.get_params()
        assert params["hidden_units"] == (8,)
        other = clone(model)
        assert other.get_params() == params
        x, y = self.separable_data()
        model.fit(x, y)
        assert list(model.classes_) == [0, 1]
        assert len(model.loss_history_) == 3


class TestDumpArchive:
    def layers(self):
        rng = RngStream(31)
        return [
            DenseLayer(rng.standard_normal((2, 6)), np.zeros(6), 0.0),
            DenseLayer(rng.standard_normal((6, 4)), np.zeros(4), 0.2),
        ]

    def test_shape_and_labels_echoed(self):
        x = RngStream(1).standard_normal((3, 2))
        y = np.array([2, 0, 3])
        arch = dump_archive(self.layers(), x, y, 2, RngStream(0))
        assert arch.logits.shape == (3, 2, 4)
        assert arch.logits.size == 24
        assert np.array_equal(arch.labels, y)

    def test_determinism(self):
        x = RngStream(1).standard_normal((5, 2))
        y = np.zeros(5, dtype=int)
        a = dump_archive(self.layers(), x, y, 3, RngStream(7))
        b = dump_archive(self.layers(), x, y, 3, RngStream(7))
        assert a == b

    def test_per_input_streams_match_mc_forward(self):
        # batch dumping must reproduce per-input sequential evaluation exactly
        layers = self.layers()
        x = RngStream(1).standard_normal((4, 2))
        y = np.zeros(4, dtype=int)
        arch = dump_archive(layers, x, y, 3, RngStream(5))
        for i in range(4):
            expected = mc_forward(layers, x[i], 3, RngStream(5).child(i))
            assert np.array_equal(arch.logits[i], expected)
