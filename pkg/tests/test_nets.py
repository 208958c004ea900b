import math

import numpy as np
import pytest

from robustlab.errors import ShapeError, UsageError
from robustlab.nets import (Mlp, MlpSpec, Pipeline, PriorSpec, build_pipeline, build_plain,
                            sample_prior)


def _small_pipeline(seed=0):
    return build_pipeline(np.random.default_rng(seed), input_dim=10, latent_dim=3,
                          n_classes=4, enc_hidden=(8,), cla_hidden=(6,), disc_hidden=(6,))


class TestMlpSpec:
    def test_requires_hidden_layer(self):
        with pytest.raises(UsageError):
            MlpSpec((4, 2))

    def test_rejects_zero_width(self):
        with pytest.raises(UsageError):
            MlpSpec((4, 0, 2))

    def test_rejects_unknown_activation(self):
        with pytest.raises(UsageError):
            MlpSpec((4, 3, 2), "sigmoid")


class TestPipelineConstruction:
    def test_width_chain_enforced(self):
        rng = np.random.default_rng(0)
        enc = Mlp.init(MlpSpec((10, 8, 3)), rng)
        cla_bad = Mlp.init(MlpSpec((5, 6, 4)), rng)
        disc = Mlp.init(MlpSpec((3, 6, 1)), rng)
        with pytest.raises(ShapeError):
            Pipeline(enc, cla_bad, disc)

    def test_discriminator_must_output_scalar(self):
        rng = np.random.default_rng(0)
        enc = Mlp.init(MlpSpec((10, 8, 3)), rng)
        cla = Mlp.init(MlpSpec((3, 6, 4)), rng)
        disc_bad = Mlp.init(MlpSpec((3, 6, 2)), rng)
        with pytest.raises(ShapeError):
            Pipeline(enc, cla, disc_bad)


class TestEncode:
    def test_identical_rows_identical_codes(self):
        p = _small_pipeline()
        row = np.random.default_rng(1).uniform(0, 1, 10)
        z = p.encode(np.stack([row, row]))
        assert np.array_equal(z[0], z[1])

    def test_zero_input_gives_output_bias(self):
        p = _small_pipeline()
        z = p.encode(np.zeros((1, 10)))
        # relu(0 @ W + 0) = 0 through the hidden layer, so only the last bias remains
        assert np.array_equal(z[0], p.encoder.biases[-1])

    def test_shape_contract(self):
        p = _small_pipeline()
        z = p.encode(np.random.default_rng(2).uniform(0, 1, (7, 10)))
        assert z.shape == (7, 3)

    def test_wrong_width_rejected(self):
        p = _small_pipeline()
        with pytest.raises(ShapeError):
            p.encode(np.zeros((2, 11)))


class TestClassifyAndPredict:
    def test_shapes_and_determinism(self):
        p = _small_pipeline()
        z = np.random.default_rng(3).standard_normal((5, 3))
        logits = p.classify(z)
        assert logits.shape == (5, 4)
        assert np.array_equal(logits, p.classify(z))

    def test_predict_composes_encode_classify(self):
        p = _small_pipeline()
        x = np.random.default_rng(4).uniform(0, 1, (6, 10))
        assert np.array_equal(p.predict(x), np.argmax(p.classify(p.encode(x)), axis=1))

    def test_additive_logit_shift_keeps_prediction(self):
        p = _small_pipeline()
        x = np.random.default_rng(5).uniform(0, 1, (6, 10))
        logits = p.logits(x)
        assert np.array_equal(np.argmax(logits, axis=1), np.argmax(logits + 7.5, axis=1))

    def test_tie_break_lowest_index(self):
        assert np.argmax(np.zeros((1, 4)), axis=1)[0] == 0


class TestDiscriminate:
    def test_shape_contract(self):
        p = _small_pipeline()
        scores = p.discriminate(np.random.default_rng(6).standard_normal((5, 3)))
        assert scores.shape == (5, 1)

    def test_clipped_critic_bounded_on_box(self):
        from robustlab.tensor import clip_weights
        p = _small_pipeline()
        c = 0.01
        clipped = clip_weights(p.discriminator.params(), c)
        p.discriminator.set_params(clipped)
        z = np.random.default_rng(7).uniform(-3, 3, (200, 3))
        # layer-wise linf bound: |out| <= prod(c * fan_in) * max|z| + bias-free slack
        widths = p.discriminator.spec.widths
        bound = max(3.0, 1.0)
        for fan_in in widths[:-1]:
            bound = c * fan_in * bound
        assert np.max(np.abs(p.discriminate(z))) <= bound + 1e-9

    def test_deterministic(self):
        p = _small_pipeline()
        z = np.random.default_rng(8).standard_normal((4, 3))
        assert np.array_equal(p.discriminate(z), p.discriminate(z))


class TestPrior:
    def test_same_seed_same_sample(self):
        a = sample_prior(PriorSpec(4, np.random.default_rng(42)), 50)
        b = sample_prior(PriorSpec(4, np.random.default_rng(42)), 50)
        assert np.array_equal(a, b)

    def test_shape_contract(self):
        z = sample_prior(PriorSpec(5, np.random.default_rng(0)), 9)
        assert z.shape == (9, 5)

    def test_moments_at_large_n(self):
        z = sample_prior(PriorSpec(4, np.random.default_rng(123)), 100_000)
        mean = z.mean(axis=0)
        var = z.var(axis=0)
        assert np.all(mean > -0.02) and np.all(mean < 0.02)
        assert np.all(var > 0.97) and np.all(var < 1.03)

    def test_kolmogorov_smirnov_against_standard_normal(self):
        # one fixed seed, significance 1e-3 via the asymptotic KS threshold
        n = 100_000
        z = sample_prior(PriorSpec(1, np.random.default_rng(7)), n)[:, 0]
        z.sort()
        cdf = 0.5 * (1.0 + np.array([math.erf(v / math.sqrt(2)) for v in z]))
        empirical_hi = np.arange(1, n + 1) / n
        empirical_lo = np.arange(0, n) / n
        d_stat = max(np.max(np.abs(empirical_hi - cdf)), np.max(np.abs(cdf - empirical_lo)))
        threshold = math.sqrt(math.log(2.0 / 1e-3) / (2.0 * n))
        assert d_stat < threshold

    def test_invalid_count_rejected(self):
        with pytest.raises(UsageError):
            sample_prior(PriorSpec(3, np.random.default_rng(0)), 0)


class TestPlainClassifier:
    def test_predict_shape(self):
        m = build_plain(np.random.default_rng(0), input_dim=10, n_classes=3, hidden=(8,))
        labels = m.predict(np.random.default_rng(1).uniform(0, 1, (5, 10)))
        assert labels.shape == (5,)
        assert set(labels) <= {0, 1, 2}
