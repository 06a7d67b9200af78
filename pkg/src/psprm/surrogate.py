"""Neural surrogate for the perception score: featurization, MLP, training.

The network maps (relative camera-target pose, object one-hot) to a score in
(0, 1): five rectifier hidden layers of 256 units and a logistic output.
Every matmul goes through np.einsum with optimization disabled, which is
bitwise independent of batch size, so batched inference equals per-item
inference exactly and results do not depend on BLAS threading.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geom import RigidTransform
from .perception import PerceptionParams, ScoredPose, occlusion_score
from .robot import RobotModel, batch_fk, forward_kinematics
from .world import Environment, TargetObject

HIDDEN_DIMS = (256, 256, 256, 256, 256)
POSE_FEATURES = 9  # 3 translation + first two rotation columns

MAGIC = b"PSRM"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Model file is corrupted, truncated, or from an unknown version."""


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # einsum(optimize=False) keeps the summation order independent of the
    # number of rows, unlike BLAS gemm/gemv.
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def target_frame(facing: np.ndarray) -> np.ndarray:
    """Orthonormal target frame with +x along facing; identity when facing=+x."""
    x = np.asarray(facing, dtype=float)
    ref = np.array([0.0, 0.0, 1.0])
    if abs(float(x @ ref)) > 0.99:
        ref = np.array([0.0, 1.0, 0.0])
    z = ref - float(ref @ x) * x
    z /= np.linalg.norm(z)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def featurize(camera: RigidTransform, target: TargetObject, num_classes: int,
              target_rotation: np.ndarray | None = None) -> np.ndarray:
    """Input vector: centroid in camera frame, 6-valued relative rotation, one-hot.

    The rotation features are the first two columns of the camera-to-target
    rotation; the target frame is the identity unless the target has a facing
    direction (mapped to the frame's x-axis) or an explicit rotation is given.
    """
    if not 0 <= target.class_index < num_classes:
        raise ValueError(
            f"class index {target.class_index} out of range for {num_classes} classes"
        )
    rc = camera.rotation
    if target_rotation is not None:
        rt = np.asarray(target_rotation, dtype=float)
    elif target.facing is not None:
        rt = target_frame(target.facing)
    else:
        rt = np.eye(3)
    p_rel = np.einsum("ji,j->i", rc, target.centroid - camera.translation, optimize=False)
    r_rel = np.einsum("ji,jk->ik", rt, rc, optimize=False)
    onehot = np.zeros(num_classes)
    onehot[target.class_index] = 1.0
    return np.concatenate([p_rel, r_rel[:, 0], r_rel[:, 1], onehot])


def featurize_batch(poses, target: TargetObject, num_classes: int) -> np.ndarray:
    """Row-stacked featurize over camera poses; bitwise equal to the map."""
    if not 0 <= target.class_index < num_classes:
        raise ValueError(
            f"class index {target.class_index} out of range for {num_classes} classes"
        )
    rc = np.stack([p.rotation for p in poses]) if poses else np.empty((0, 3, 3))
    tc = np.stack([p.translation for p in poses]) if poses else np.empty((0, 3))
    rt = target_frame(target.facing) if target.facing is not None else np.eye(3)
    v = target.centroid[None, :] - tc
    p_rel = np.einsum("nji,nj->ni", rc, v, optimize=False)
    r_rel = np.einsum("ji,njk->nik", rt, rc, optimize=False)
    onehot = np.zeros((len(poses), num_classes))
    onehot[:, target.class_index] = 1.0
    return np.concatenate([p_rel, r_rel[:, :, 0], r_rel[:, :, 1], onehot], axis=1)


def featurize_scored_pose(row: ScoredPose, num_classes: int) -> np.ndarray:
    """Features of a dataset row: the camera pose is already the relative pose."""
    if not 0 <= row.class_index < num_classes:
        raise ValueError(
            f"class index {row.class_index} out of range for {num_classes} classes"
        )
    rc = row.camera.rotation
    p_rel = np.einsum("ji,j->i", rc, -row.camera.translation, optimize=False)
    onehot = np.zeros(num_classes)
    onehot[row.class_index] = 1.0
    return np.concatenate([p_rel, rc[:, 0], rc[:, 1], onehot])


@dataclass
class SurrogateModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    num_classes: int
    version: int = FORMAT_VERSION

    @property
    def input_dim(self) -> int:
        return POSE_FEATURES + self.num_classes

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]


def _round_f32(arrays: list[np.ndarray]) -> list[np.ndarray]:
    # Weights are kept exactly float32-representable so the f32 on-disk
    # format round-trips bit-exactly.
    return [a.astype(np.float32).astype(np.float64) for a in arrays]


def init_model(num_classes: int, seed: int = 0,
               hidden_dims: tuple[int, ...] = HIDDEN_DIMS) -> SurrogateModel:
    """Glorot-uniform weights, zero biases, seeded."""
    rng = np.random.default_rng((int(seed), 1))
    dims = [POSE_FEATURES + num_classes] + list(hidden_dims) + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return SurrogateModel(_round_f32(weights), _round_f32(biases), num_classes)


def _forward(weights, biases, x: np.ndarray):
    """Activations per layer; returns (activations, pre-activations, output)."""
    acts = [x]
    zs = []
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        z = _mm(a, w) + b
        zs.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    z = _mm(a, weights[-1]) + biases[-1]
    zs.append(z)
    return acts, zs, _sigmoid(z)


def predict(model: SurrogateModel, x: np.ndarray) -> float | np.ndarray:
    """Forward pass; accepts a single vector or a row-stacked batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise ValueError(f"expected input dim {model.input_dim}, got {x.shape[1]}")
    out = _forward(model.weights, model.biases, x)[2][:, 0]
    return float(out[0]) if single else out


def loss_and_gradients(weights, biases, x: np.ndarray, y: np.ndarray):
    """Mean-squared-error loss and its gradients by backpropagation."""
    n = len(x)
    acts, zs, pred = _forward(weights, biases, x)
    pred = pred[:, 0]
    err = pred - y
    loss = float(np.mean(err * err))
    dz = (2.0 * err / n * pred * (1.0 - pred))[:, None]
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = np.einsum("ni,nj->ij", acts[layer], dz, optimize=False)
        grads_b[layer] = dz.sum(axis=0)
        if layer > 0:
            da = _mm(dz, weights[layer].T)
            dz = da * (zs[layer - 1] > 0.0)
    return loss, grads_w, grads_b


def _mse(weights, biases, x, y) -> float:
    pred = _forward(weights, biases, x)[2][:, 0]
    return float(np.mean((pred - y) ** 2))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-4
    batch_size: int = 512
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0, 1)")


def _fit_features(x: np.ndarray, y: np.ndarray, cfg: TrainConfig, num_classes: int):
    """Adam training on feature rows; deterministic per seed."""
    n = len(x)
    if n == 0:
        raise ValueError("empty dataset")
    model = init_model(num_classes, cfg.seed)
    weights = [np.array(w) for w in model.weights]
    biases = [np.array(b) for b in model.biases]

    split_rng = np.random.default_rng((int(cfg.seed), 2))
    perm = split_rng.permutation(n)
    n_hold = min(max(1, int(round(cfg.holdout_fraction * n))), n - 1) if n > 1 else 0
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    x_train, y_train = x[train_idx], y[train_idx]
    x_hold, y_hold = x[hold_idx], y[hold_idx]

    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    step = 0
    curve = []
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng((int(cfg.seed), 3, epoch)).permutation(len(x_train))
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            loss, gw, gb = loss_and_gradients(weights, biases, x_train[batch], y_train[batch])
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            step += 1
            scale = cfg.learning_rate * math.sqrt(1.0 - cfg.beta2 ** step) / (1.0 - cfg.beta1 ** step)
            for i in range(len(weights)):
                m_w[i] = cfg.beta1 * m_w[i] + (1.0 - cfg.beta1) * gw[i]
                v_w[i] = cfg.beta2 * v_w[i] + (1.0 - cfg.beta2) * gw[i] * gw[i]
                weights[i] -= scale * m_w[i] / (np.sqrt(v_w[i]) + cfg.eps)
                m_b[i] = cfg.beta1 * m_b[i] + (1.0 - cfg.beta1) * gb[i]
                v_b[i] = cfg.beta2 * v_b[i] + (1.0 - cfg.beta2) * gb[i] * gb[i]
                biases[i] -= scale * m_b[i] / (np.sqrt(v_b[i]) + cfg.eps)
        train_mse = _mse(weights, biases, x_train, y_train)
        hold_mse = _mse(weights, biases, x_hold, y_hold) if n_hold else train_mse
        curve.append((epoch, train_mse, hold_mse))
    fitted = SurrogateModel(_round_f32(weights), _round_f32(biases), num_classes)
    return fitted, curve


def train(rows: list[ScoredPose], cfg: TrainConfig,
          num_classes: int | None = None):
    """Train on dataset rows; returns (model, per-epoch loss curve)."""
    if not rows:
        raise ValueError("empty dataset")
    if num_classes is None:
        num_classes = max(r.class_index for r in rows) + 1
    x = np.stack([featurize_scored_pose(r, num_classes) for r in rows])
    y = np.array([r.score for r in rows])
    return _fit_features(x, y, cfg, num_classes)


def holdout_mae(model: SurrogateModel, rows: list[ScoredPose], cfg: TrainConfig) -> float:
    """MAE on the same holdout split the training run used."""
    x = np.stack([featurize_scored_pose(r, model.num_classes) for r in rows])
    y = np.array([r.score for r in rows])
    split_rng = np.random.default_rng((int(cfg.seed), 2))
    perm = split_rng.permutation(len(rows))
    n_hold = min(max(1, int(round(cfg.holdout_fraction * len(rows)))), len(rows) - 1)
    hold = perm[:n_hold]
    pred = predict(model, x[hold])
    return float(np.mean(np.abs(pred - y[hold])))


def save_loss_curve(path, curve) -> None:
    lines = ["epoch,train_mse,holdout_mse"]
    lines += [f"{e},{repr(tr)},{repr(ho)}" for e, tr, ho in curve]
    Path(path).write_text("\n".join(lines) + "\n")


def save_model(model: SurrogateModel, path) -> None:
    """Binary little-endian format: PSRM magic, version, shapes, f32 payload."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<III", model.version, model.num_classes, len(model.weights))
    for w, b in zip(model.weights, model.biases):
        rows, cols = w.shape
        buf += struct.pack("<II", rows, cols)
        buf += w.astype("<f4").tobytes(order="C")
        buf += b.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(bytes(buf))


def load_model(path) -> SurrogateModel:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a surrogate model file")
    version, num_classes, n_layers = struct.unpack_from("<III", data, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    offset = 16
    weights, biases = [], []
    for _ in range(n_layers):
        if offset + 8 > len(data):
            raise ModelFormatError(f"{path}: truncated layer header")
        rows, cols = struct.unpack_from("<II", data, offset)
        offset += 8
        w_bytes = rows * cols * 4
        if offset + w_bytes + cols * 4 > len(data):
            raise ModelFormatError(f"{path}: truncated layer payload")
        w = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=offset)
        offset += w_bytes
        b = np.frombuffer(data, dtype="<f4", count=cols, offset=offset)
        offset += cols * 4
        weights.append(w.reshape(rows, cols).astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(data):
        raise ModelFormatError(f"{path}: {len(data) - offset} trailing bytes")
    model = SurrogateModel(weights, biases, int(num_classes), int(version))
    for a, b in zip(model.weights[:-1], model.weights[1:]):
        if a.shape[1] != b.shape[0]:
            raise ModelFormatError(f"{path}: inconsistent layer shapes")
    return model


class SurrogateScorer:
    """Batched surrogate scoring with the same occlusion rule as the oracle."""

    name = "surrogate"

    def __init__(self, model: SurrogateModel, params: PerceptionParams):
        self.model = model
        self.params = params

    def raw(self, camera: RigidTransform, target: TargetObject) -> float:
        return predict(self.model, featurize(camera, target, self.model.num_classes))

    def score_config(self, env: Environment, model: RobotModel, q: np.ndarray,
                     pose: RigidTransform | None = None) -> float:
        poses = [pose if pose is not None else forward_kinematics(model, q)]
        return float(self.score_configs(env, model, [q], poses)[0])

    def score_configs(self, env: Environment, model: RobotModel, qs,
                      poses=None) -> np.ndarray:
        if poses is None:
            poses = batch_fk(model, qs)
        if not len(poses):
            return np.zeros(0)
        total = np.zeros(len(poses))
        for target in env.monitored_targets():
            feats = featurize_batch(poses, target, self.model.num_classes)
            preds = predict(self.model, feats)
            occluded = np.array([
                occlusion_score(env, pose, target, self.params) > self.params.occlusion_threshold
                for pose in poses
            ])
            total += np.where(occluded, 0.0, preds)
        return total / len(env.monitored)


class SurrogateRegressor:
    """Estimator-style wrapper over the MLP: fit(X, y) / predict(X).

    X is a feature matrix as produced by featurize (shape (n, 9 + classes)).
    Follows the scikit-learn parameter conventions so the model drops into
    pipelines and search utilities.
    """

    def __init__(self, num_classes=None, epochs=200, learning_rate=1e-4,
                 batch_size=512, holdout_fraction=0.1, seed=0):
        self.num_classes = num_classes
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.holdout_fraction = holdout_fraction
        self.seed = seed

    def get_params(self, deep=True):
        return {
            "num_classes": self.num_classes,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "holdout_fraction": self.holdout_fraction,
            "seed": self.seed,
        }

    def set_params(self, **params):
        valid = self.get_params()
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for SurrogateRegressor")
            setattr(self, key, value)
        return self

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        num_classes = self.num_classes
        if num_classes is None:
            num_classes = X.shape[1] - POSE_FEATURES
            if num_classes < 1:
                raise ValueError("cannot infer num_classes from feature width")
        cfg = TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            holdout_fraction=self.holdout_fraction,
            seed=self.seed,
        )
        self.model_, self.loss_curve_ = _fit_features(X, y, cfg, num_classes)
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise RuntimeError("SurrogateRegressor is not fitted yet")
        X = np.asarray(X, dtype=float)
        return predict(self.model_, X)
