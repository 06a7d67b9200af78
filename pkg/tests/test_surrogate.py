import math

import numpy as np
import pytest

from psprm.geom import RigidTransform, rotation_about_axis
from psprm.perception import ScoredPose
from psprm.surrogate import (ModelFormatError, SurrogateRegressor, TrainConfig,
                             featurize, featurize_batch, init_model,
                             load_model, loss_and_gradients, predict,
                             save_model, target_frame, train)
from psprm.surrogate import _forward, _fit_features

from conftest import make_target


def random_pose(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return RigidTransform(rotation_about_axis(axis, rng.uniform(-np.pi, np.pi)),
                          rng.normal(scale=2.0, size=3))


class TestFeaturize:
    def test_identity_camera_translation_features(self):
        target = make_target((0.0, 0.0, 2.0))
        x = featurize(RigidTransform.identity(), target, num_classes=1)
        assert np.allclose(x[:3], [0.0, 0.0, 2.0])
        # identity relative rotation -> first two basis columns
        assert np.allclose(x[3:6], [1.0, 0.0, 0.0])
        assert np.allclose(x[6:9], [0.0, 1.0, 0.0])

    def test_one_hot(self):
        target = make_target((1.0, 0.0, 0.0), class_index=1)
        x = featurize(RigidTransform.identity(), target, num_classes=3)
        assert np.allclose(x[9:], [0.0, 1.0, 0.0])
        assert len(x) == 12

    def test_class_out_of_range(self):
        target = make_target((1.0, 0.0, 0.0), class_index=7)
        with pytest.raises(ValueError, match="class index 7"):
            featurize(RigidTransform.identity(), target, num_classes=3)

    def test_relative_pose_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            camera = random_pose(rng)
            target = make_target(rng.normal(size=3) + [0, 0, 3],
                                 facing=rng.normal(size=3))
            rt = target_frame(target.facing)
            base = featurize(camera, target, 2, target_rotation=rt)
            g = random_pose(rng)
            moved_target = make_target(g.apply(target.centroid),
                                       facing=g.apply_direction(target.facing))
            moved = featurize(g.compose(camera), moved_target, 2,
                              target_rotation=g.rotation @ rt)
            assert np.allclose(base, moved, atol=1e-9)

    def test_batch_matches_single_bitwise(self):
        rng = np.random.default_rng(1)
        target = make_target((1.0, -2.0, 1.5), class_index=1,
                             facing=np.array([0.0, 1.0, 0.0]))
        poses = [random_pose(rng) for _ in range(64)]
        batch = featurize_batch(poses, target, num_classes=3)
        for pose, row in zip(poses, batch):
            assert np.array_equal(featurize(pose, target, 3), row)

    def test_target_frame_identity_for_plus_x(self):
        assert np.allclose(target_frame(np.array([1.0, 0.0, 0.0])), np.eye(3))


class TestPredict:
    def test_zero_weights_give_half(self):
        m = init_model(num_classes=1, seed=0)
        zeroed = type(m)([np.zeros_like(w) for w in m.weights],
                         [np.zeros_like(b) for b in m.biases], 1)
        x = np.zeros(m.input_dim)
        assert predict(zeroed, x) == pytest.approx(0.5)

    def test_output_in_open_unit_interval(self):
        rng = np.random.default_rng(2)
        m = init_model(num_classes=2, seed=3)
        X = rng.normal(scale=3.0, size=(200, m.input_dim))
        out = predict(m, X)
        assert np.all((out > 0.0) & (out < 1.0))

    def test_batch_equals_singles_bitwise(self):
        rng = np.random.default_rng(3)
        m = init_model(num_classes=2, seed=1)
        X = rng.normal(size=(257, m.input_dim))
        assert np.array_equal(predict(m, X), np.array([predict(m, x) for x in X]))

    def test_shape_mismatch(self):
        m = init_model(num_classes=1, seed=0)
        with pytest.raises(ValueError, match="input dim"):
            predict(m, np.zeros(m.input_dim + 1))

    def test_lipschitz_probe(self):
        rng = np.random.default_rng(4)
        m = init_model(num_classes=1, seed=2)
        X = rng.normal(size=(100, m.input_dim))
        base = predict(m, X)
        delta = rng.normal(scale=1e-5, size=X.shape)
        moved = predict(m, X + delta)
        ratios = np.abs(moved - base) / np.linalg.norm(delta, axis=1)
        assert np.all(np.isfinite(ratios))
        assert ratios.max() < 1e3


class TestGradients:
    def test_backprop_matches_central_differences(self):
        rng = np.random.default_rng(5)
        m = init_model(num_classes=1, seed=0, hidden_dims=(8,))
        X = rng.normal(size=(4, m.input_dim))
        Y = rng.uniform(size=4)
        _, gw, gb = loss_and_gradients(m.weights, m.biases, X, Y)
        eps = 1e-6

        def loss_with(weights, biases):
            return float(np.mean((_forward(weights, biases, X)[2][:, 0] - Y) ** 2))

        for li, w in enumerate(m.weights):
            for r in range(w.shape[0]):
                for c in range(w.shape[1]):
                    wp = [a.copy() for a in m.weights]
                    wm = [a.copy() for a in m.weights]
                    wp[li][r, c] += eps
                    wm[li][r, c] -= eps
                    fd = (loss_with(wp, m.biases) - loss_with(wm, m.biases)) / (2 * eps)
                    assert abs(fd - gw[li][r, c]) <= 1e-4 * max(abs(fd), 1e-6)
        for li, b in enumerate(m.biases):
            for c in range(len(b)):
                bp = [a.copy() for a in m.biases]
                bm = [a.copy() for a in m.biases]
                bp[li][c] += eps
                bm[li][c] -= eps
                fd = (loss_with(m.weights, bp) - loss_with(m.weights, bm)) / (2 * eps)
                assert abs(fd - gb[li][c]) <= 1e-4 * max(abs(fd), 1e-6)


class TestTraining:
    def test_constant_dataset_learnable(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(64, 10))
        y = np.full(64, 0.7)
        cfg = TrainConfig(epochs=60, batch_size=32, learning_rate=1e-3, seed=0)
        model, _ = _fit_features(X, y, cfg, num_classes=1)
        assert float(np.mean(np.abs(predict(model, X) - 0.7))) <= 0.02

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train([], TrainConfig())

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(7)
        rows = [ScoredPose(RigidTransform.identity()
                           .compose(RigidTransform(np.eye(3), rng.normal(size=3))),
                           0, float(rng.uniform()))
                for _ in range(32)]
        cfg = TrainConfig(epochs=3, batch_size=16, seed=9)
        m1, c1 = train(rows, cfg, num_classes=1)
        m2, c2 = train(rows, cfg, num_classes=1)
        assert c1 == c2
        for a, b in zip(m1.weights, m2.weights):
            assert np.array_equal(a, b)

    def test_loss_curve_decreases(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(200, 10))
        y = 1.0 / (1.0 + np.exp(-X[:, 0]))
        cfg = TrainConfig(epochs=40, batch_size=64, learning_rate=1e-3, seed=0)
        _, curve = _fit_features(X, y, cfg, num_classes=1)
        assert curve[-1][1] < curve[0][1]
        for i in range(len(curve) - 20):
            assert curve[i + 20][1] <= curve[i][1] + 1e-6

    def test_zero_epochs_keeps_init(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(16, 10))
        y = rng.uniform(size=16)
        model, curve = _fit_features(X, y, TrainConfig(epochs=0, seed=4), num_classes=1)
        init = init_model(1, seed=4)
        assert curve == []
        for a, b in zip(model.weights, init.weights):
            assert np.array_equal(a, b)


class TestPersistence:
    def test_roundtrip_bitexact(self, tmp_path):
        rng = np.random.default_rng(10)
        m = init_model(num_classes=3, seed=11)
        path = tmp_path / "model.psrm"
        save_model(m, path)
        loaded = load_model(path)
        assert loaded.num_classes == 3
        X = rng.normal(size=(100, m.input_dim))
        assert np.array_equal(predict(m, X), predict(loaded, X))

    def test_save_is_deterministic(self, tmp_path):
        m = init_model(num_classes=1, seed=0)
        p1, p2 = tmp_path / "a.psrm", tmp_path / "b.psrm"
        save_model(m, p1)
        save_model(m, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupted_magic(self, tmp_path):
        path = tmp_path / "bad.psrm"
        path.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(ModelFormatError, match="not a surrogate model"):
            load_model(path)

    def test_truncated_file(self, tmp_path):
        m = init_model(num_classes=1, seed=0)
        path = tmp_path / "model.psrm"
        save_model(m, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ModelFormatError, match="truncated"):
            load_model(path)

    def test_class_out_of_range_after_load(self, tmp_path):
        m = init_model(num_classes=5, seed=0)
        path = tmp_path / "model.psrm"
        save_model(m, path)
        loaded = load_model(path)
        target = make_target((1.0, 0.0, 0.0), class_index=7)
        with pytest.raises(ValueError, match="class index 7"):
            featurize(RigidTransform.identity(), target, loaded.num_classes)


class TestSurrogateRegressor:
    def test_get_set_params(self):
        reg = SurrogateRegressor(epochs=5)
        params = reg.get_params()
        assert params["epochs"] == 5
        reg.set_params(learning_rate=1e-3, seed=2)
        assert reg.learning_rate == 1e-3 and reg.seed == 2
        with pytest.raises(ValueError, match="invalid parameter"):
            reg.set_params(bogus=1)

    def test_fit_predict(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(64, 10))
        y = np.full(64, 0.4)
        reg = SurrogateRegressor(epochs=40, batch_size=32, learning_rate=1e-3, seed=0)
        assert reg.fit(X, y) is reg
        out = reg.predict(X)
        assert out.shape == (64,)
        assert float(np.mean(np.abs(out - 0.4))) < 0.05
        assert len(reg.loss_curve_) == 40

    def test_predict_before_fit(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            SurrogateRegressor().predict(np.zeros((1, 10)))
