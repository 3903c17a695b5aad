import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podfl.data import Dataset
from podfl.errors import ConfigError, EmptyShardError
from podfl.models import (
    ModelSpec,
    TrainConfig,
    accuracy,
    client_update,
    functionally_equivalent,
    init_params,
    loss_and_grad,
    model_distance,
)


def batch_of(features, labels, num_classes):
    return Dataset(np.asarray(features, dtype=np.float64), np.asarray(labels), num_classes)


class TestModelSpec:
    def test_param_counts(self):
        assert ModelSpec("logistic-regression", 4, 3).param_count == 4 * 3 + 3
        assert ModelSpec("mlp-one-hidden", 4, 3, hidden_dim=5).param_count == 4 * 5 + 5 + 5 * 3 + 3

    def test_rejects_bad_shapes(self):
        with pytest.raises(ConfigError):
            ModelSpec("logistic-regression", 0, 3)
        with pytest.raises(ConfigError):
            ModelSpec("logistic-regression", 4, 1)
        with pytest.raises(ConfigError):
            ModelSpec("mlp-one-hidden", 4, 3, hidden_dim=0)
        with pytest.raises(ConfigError):
            ModelSpec("logistic-regression", 4, 3, hidden_dim=2)
        with pytest.raises(ConfigError):
            ModelSpec("resnet", 4, 3)


class TestLossAndGrad:
    def test_zero_weights_balanced_two_class_loss_is_ln2(self):
        spec = ModelSpec("logistic-regression", 3, 2)
        w = np.zeros(spec.param_count)
        batch = batch_of([[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]], [0, 1], 2)
        loss, _ = loss_and_grad(spec, w, batch)
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_zero_weights_loss_is_ln_num_classes(self):
        spec = ModelSpec("mlp-one-hidden", 2, 5, hidden_dim=3)
        w = np.zeros(spec.param_count)
        batch = batch_of([[0.3, -0.2]], [4], 5)
        loss, _ = loss_and_grad(spec, w, batch)
        assert loss == pytest.approx(math.log(5), abs=1e-12)

    def test_duplicated_batch_matches_single(self):
        spec = ModelSpec("logistic-regression", 3, 2)
        rng = np.random.default_rng(0)
        w = rng.standard_normal(spec.param_count)
        feats = rng.standard_normal((4, 3))
        labels = np.array([0, 1, 1, 0])
        single = batch_of(feats, labels, 2)
        doubled = batch_of(np.vstack([feats, feats]), np.concatenate([labels, labels]), 2)
        loss1, grad1 = loss_and_grad(spec, w, single)
        loss2, grad2 = loss_and_grad(spec, w, doubled)
        assert loss1 == pytest.approx(loss2, rel=1e-15)
        np.testing.assert_allclose(grad1, grad2, rtol=1e-14)

    @pytest.mark.parametrize(
        "spec",
        [
            ModelSpec("logistic-regression", 5, 3),
            ModelSpec("mlp-one-hidden", 4, 3, hidden_dim=6),
        ],
        ids=["logistic", "mlp"],
    )
    def test_grad_matches_finite_differences(self, spec):
        rng = np.random.default_rng(17)
        w = 0.5 * rng.standard_normal(spec.param_count)
        batch = batch_of(rng.standard_normal((8, spec.input_dim)), rng.integers(0, spec.num_classes, 8), spec.num_classes)
        _, grad = loss_and_grad(spec, w, batch)

        # central finite differences, the independent oracle
        h = 1e-6
        fd = np.empty_like(grad)
        for i in range(w.size):
            wp, wm = w.copy(), w.copy()
            wp[i] += h
            wm[i] -= h
            fd[i] = (loss_and_grad(spec, wp, batch)[0] - loss_and_grad(spec, wm, batch)[0]) / (2 * h)
        denom = np.maximum(np.abs(fd), 1.0)
        assert np.max(np.abs(grad - fd) / denom) < 1e-4

    def test_dimension_mismatch_is_config_error(self):
        spec = ModelSpec("logistic-regression", 3, 2)
        batch = batch_of([[1.0, 2.0]], [0], 2)
        with pytest.raises(ConfigError):
            loss_and_grad(spec, np.zeros(spec.param_count), batch)

    def test_empty_batch_is_skip_signal(self):
        spec = ModelSpec("logistic-regression", 3, 2)
        empty = Dataset(np.empty((0, 3)), np.empty(0, dtype=np.int64), 2)
        with pytest.raises(EmptyShardError):
            loss_and_grad(spec, np.zeros(spec.param_count), empty)


class TestClientUpdate:
    def test_zero_learning_rate_returns_input(self, tiny_spec, tiny_data):
        w = init_params(tiny_spec, 1)
        out = client_update(tiny_spec, w, tiny_data, TrainConfig(1, 0.0, 16), seed=4)
        np.testing.assert_array_equal(out, w)

    def test_single_full_batch_step_closed_form(self, tiny_spec, tiny_data):
        # one epoch, batch covering the shard: w - lr * grad(full shard)
        w = init_params(tiny_spec, 2)
        cfg = TrainConfig(local_epochs=1, learning_rate=0.25, batch_size=tiny_data.n)
        out = client_update(tiny_spec, w, tiny_data, cfg, seed=11)
        _, grad = loss_and_grad(tiny_spec, w, tiny_data)
        # the epoch shuffle reorders the sum, so equality is up to float assoc.
        np.testing.assert_allclose(out, w - 0.25 * grad, rtol=1e-12, atol=1e-15)

    def test_same_seed_bit_identical(self, tiny_spec, tiny_data):
        w = init_params(tiny_spec, 3)
        cfg = TrainConfig(local_epochs=3, learning_rate=0.1, batch_size=8)
        a = client_update(tiny_spec, w, tiny_data, cfg, seed=7)
        b = client_update(tiny_spec, w, tiny_data, cfg, seed=7)
        np.testing.assert_array_equal(a, b)
        c = client_update(tiny_spec, w, tiny_data, cfg, seed=8)
        assert not np.array_equal(a, c)

    def test_empty_shard_raises_skip(self, tiny_spec):
        empty = Dataset(np.empty((0, 4)), np.empty(0, dtype=np.int64), 3)
        with pytest.raises(EmptyShardError):
            client_update(tiny_spec, init_params(tiny_spec, 0), empty, TrainConfig(), seed=0)

    def test_input_not_mutated(self, tiny_spec, tiny_data):
        w = init_params(tiny_spec, 5)
        before = w.copy()
        client_update(tiny_spec, w, tiny_data, TrainConfig(2, 0.1, 16), seed=1)
        np.testing.assert_array_equal(w, before)


class TestModelDistance:
    def test_identity_both_metrics(self):
        a = np.array([0.3, -1.2, 4.0])
        assert model_distance(a, a.copy(), "l2") == 0.0
        assert model_distance(a, a.copy(), "cosine") == 0.0

    def test_orthogonal_unit_vectors(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert model_distance(a, b, "cosine") == pytest.approx(1.0)
        assert model_distance(a, b, "l2") == pytest.approx(math.sqrt(2))

    def test_antipodal_cosine_is_two(self):
        assert model_distance(np.array([1.0, 0.0]), np.array([-1.0, 0.0]), "cosine") == pytest.approx(2.0)

    def test_zero_vector_under_cosine_rejected(self):
        with pytest.raises(ValueError):
            model_distance(np.zeros(2), np.array([1.0, 0.0]), "cosine")

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            model_distance(np.zeros(2), np.zeros(3), "l2")

    def test_unknown_metric_rejected(self):
        with pytest.raises(ValueError):
            model_distance(np.zeros(2), np.zeros(2), "manhattan")

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_metric_axioms_on_random_pairs(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(6) + 0.01
        b = rng.standard_normal(6) + 0.01
        c = rng.standard_normal(6) + 0.01
        for metric in ("l2", "cosine"):
            dab = model_distance(a, b, metric)
            assert dab >= 0
            assert dab == pytest.approx(model_distance(b, a, metric), rel=1e-12)
            assert model_distance(a, a, metric) == 0.0
        assert model_distance(a, b, "cosine") <= 2.0 + 1e-12
        # triangle inequality holds for l2
        assert model_distance(a, c, "l2") <= (
            model_distance(a, b, "l2") + model_distance(b, c, "l2") + 1e-12
        )


class TestFunctionalEquivalence:
    def test_exact_match_at_zero_eps(self):
        a = np.array([1.0, 2.0])
        assert functionally_equivalent(a, a.copy(), 0.0, "l2")

    def test_threshold_strictness_and_boundary(self):
        a = np.array([0.0, 0.0]) + np.array([0.3, 0.0])
        b = np.zeros(2)
        # l2 distance is exactly 0.3
        assert not functionally_equivalent(a, b, 0.2, "l2")
        assert functionally_equivalent(a, b, 0.3, "l2")

    def test_negative_eps_rejected(self):
        with pytest.raises(ValueError):
            functionally_equivalent(np.zeros(2), np.zeros(2), -0.1, "l2")


class TestAccuracy:
    def test_perfect_predictor_scores_one(self):
        spec = ModelSpec("logistic-regression", 2, 2)
        # weights that send class 0 left, class 1 right
        w = np.zeros(spec.param_count)
        w[0] = -5.0  # feature 0 -> logit of class 0
        w[1] = 5.0
        data = batch_of([[1.0, 0.0], [-1.0, 0.0]], [1, 0], 2)
        assert accuracy(spec, w, data) == 1.0
