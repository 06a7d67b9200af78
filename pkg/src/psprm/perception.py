"""Analytic perception-score oracle, ray-cast occlusion and dataset generation.

The oracle stands in for a detector's confidence: a distance bell around an
optimal range, a centering falloff toward the frustum edge and an optional
facing factor for face-like targets. Occlusion is the fraction of camera-to-
target rays blocked by other geometry; past a threshold it zeroes the score.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .geom import (Aabb, CameraIntrinsics, Frustum, RigidTransform,
                   frustum_signed_distance, ray_boxes_entry, rotation_about_axis)
from .robot import RobotModel, batch_fk, forward_kinematics
from .world import Environment, TargetObject


@dataclass(frozen=True)
class PerceptionParams:
    d_opt: float = 2.0
    sigma_d: float = 1.0
    center_exponent: float = 2.0
    facing_exponent: float = 1.0
    occlusion_threshold: float = 0.5
    rays_per_check: int = 9

    def __post_init__(self):
        if self.sigma_d <= 0:
            raise ValueError("sigma_d must be positive")
        if not 0.0 <= self.occlusion_threshold <= 1.0:
            raise ValueError("occlusion_threshold must be in [0, 1]")
        if self.rays_per_check < 1:
            raise ValueError("rays_per_check must be >= 1")
        if self.center_exponent < 0 or self.facing_exponent < 0:
            raise ValueError("exponents must be >= 0")


@dataclass(frozen=True)
class ScoredPose:
    camera: RigidTransform
    class_index: int
    score: float


def oracle_score(params: PerceptionParams, camera: RigidTransform,
                 target: TargetObject, cam_geom: CameraIntrinsics) -> float:
    """Closed-form stand-in for detector confidence, in [0, 1].

    Zero outside the frustum; inside it is the product of a Gaussian bell in
    distance around d_opt, cos(beta)^gamma centering falloff, and, when the
    target has a facing direction, cos(theta_face)^facing_exponent.
    """
    frustum = Frustum.from_pose(camera, cam_geom)
    centroid = target.centroid
    if frustum_signed_distance(frustum, centroid) > 0.0:
        return 0.0
    v = centroid - frustum.apex
    d = float(np.linalg.norm(v))
    if d < 1e-12:
        return 0.0
    cos_beta = max(0.0, min(1.0, float(frustum.forward @ v) / d))
    score = math.exp(-((d - params.d_opt) ** 2) / (2.0 * params.sigma_d ** 2))
    score *= cos_beta ** params.center_exponent
    if target.facing is not None:
        cos_face = max(0.0, float(target.facing @ (-v)) / d)
        score *= cos_face ** params.facing_exponent
    return score


def ray_target_points(target: TargetObject) -> np.ndarray:
    """The 9 canonical ray endpoints: centroid, then lexicographic box corners."""
    return np.vstack([target.centroid[None, :], target.box.corners()])


def occlusion_score(env: Environment, camera: RigidTransform,
                    target: TargetObject, params: PerceptionParams) -> float:
    """Fraction of camera-to-target rays blocked before the target's box.

    A ray counts as blocked when some other box has a strictly smaller entry
    distance or when the ray misses the target box entirely.
    """
    apex = camera.translation
    points = ray_target_points(target)[: min(params.rays_per_check, 9)]
    blocker_mins, blocker_maxs = _blocker_bounds(env, target)
    tgt_min, tgt_max = target.box.min_corner, target.box.max_corner
    blocked = 0
    for point in points:
        direction = point - apex
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            continue
        direction = direction / norm
        t_target = ray_boxes_entry(apex, direction, tgt_min[None, :], tgt_max[None, :])[0]
        if math.isnan(t_target):
            blocked += 1
            continue
        if len(blocker_mins):
            hits = ray_boxes_entry(apex, direction, blocker_mins, blocker_maxs)
            if np.any(hits[~np.isnan(hits)] < t_target):
                blocked += 1
    return blocked / len(points)


def _blocker_bounds(env: Environment, target: TargetObject):
    boxes = list(env.obstacles) + [t.box for t in env.targets if t is not target]
    if not boxes:
        return np.empty((0, 3)), np.empty((0, 3))
    return (np.array([b.min_corner for b in boxes]),
            np.array([b.max_corner for b in boxes]))


def combined_score(env: Environment, model: RobotModel, q: np.ndarray,
                   target: TargetObject, params: PerceptionParams, scorer) -> float:
    """Scorer output zeroed when the occlusion score strictly exceeds the threshold.

    `scorer` maps (camera pose, target) to a raw score; it is either the
    closed-form oracle or a trained surrogate.
    """
    camera = forward_kinematics(model, q)
    raw = scorer(camera, target)
    if occlusion_score(env, camera, target, params) > params.occlusion_threshold:
        return 0.0
    return raw


class OracleScorer:
    """Per-configuration direct scoring: oracle evaluation plus occlusion rule.

    Evaluation is intentionally pointwise, one pose at a time, mirroring a
    render-and-detect pipeline; the batch entry point is the sequential map.
    """

    name = "oracle"

    def __init__(self, params: PerceptionParams, cam_geom: CameraIntrinsics):
        self.params = params
        self.cam_geom = cam_geom

    def raw(self, camera: RigidTransform, target: TargetObject) -> float:
        return oracle_score(self.params, camera, target, self.cam_geom)

    def score_config(self, env: Environment, model: RobotModel, q: np.ndarray,
                     pose: RigidTransform | None = None) -> float:
        if pose is None:
            pose = forward_kinematics(model, q)
        total = 0.0
        for target in env.monitored_targets():
            if occlusion_score(env, pose, target, self.params) > self.params.occlusion_threshold:
                continue
            total += self.raw(pose, target)
        return total / len(env.monitored)

    def score_configs(self, env: Environment, model: RobotModel, qs,
                      poses=None) -> np.ndarray:
        if poses is None:
            poses = batch_fk(model, qs)
        return np.array([self.score_config(env, model, q, pose)
                         for q, pose in zip(qs, poses)])


def _aimed_camera_rotation(forward: np.ndarray, roll: float) -> np.ndarray:
    """Rotation whose x-axis is `forward`, with up completed from world z then rolled."""
    ref = np.array([0.0, 0.0, 1.0])
    if abs(float(forward @ ref)) > 0.99:
        ref = np.array([1.0, 0.0, 0.0])
    up = ref - float(ref @ forward) * forward
    up /= np.linalg.norm(up)
    up = rotation_about_axis(forward, roll) @ up
    y_axis = np.cross(up, forward)
    return np.column_stack([forward, y_axis, up])


def camera_pose_looking_at(position, point, roll: float = 0.0) -> RigidTransform:
    """Camera pose at `position` with the optical axis through `point`."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(point, dtype=float) - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position coincides with the look-at point")
    return RigidTransform(_aimed_camera_rotation(forward / norm, roll), position)


def canonical_target(target: TargetObject) -> TargetObject:
    """The target moved to the origin with facing (if any) along +x."""
    facing = None if target.facing is None else np.array([1.0, 0.0, 0.0])
    return TargetObject(
        label=target.label,
        centroid=np.zeros(3),
        box=Aabb(np.zeros(3), target.box.half_extents),
        class_index=target.class_index,
        facing=facing,
    )


def generate_dataset(targets, cam_geom: CameraIntrinsics, params: PerceptionParams,
                     n_samples: int, seed: int) -> list[ScoredPose]:
    """Rejection-sample in-frustum camera poses around canonical targets.

    Poses live in the target's local frame (target at the origin, facing +x),
    so each row's camera transform is directly the relative pose the
    surrogate consumes. Scores come from the oracle in an occlusion-free
    scene. Deterministic per seed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    canon = [canonical_target(t) for t in targets]
    if not canon:
        raise ValueError("at least one target is required")
    max_aim = 0.8 * min(0.5 * cam_geom.vertical_fov,
                        math.atan(cam_geom.aspect * math.tan(0.5 * cam_geom.vertical_fov)))
    rows: list[ScoredPose] = []
    budget = 100 * n_samples
    attempts = 0
    for i in range(n_samples):
        rng = np.random.default_rng((seed, i))
        target = canon[int(rng.integers(len(canon)))]
        while True:
            attempts += 1
            if attempts > budget:
                raise RuntimeError(
                    f"dataset sampling exhausted {budget} attempts at row {len(rows)}"
                )
            d = rng.uniform(cam_geom.near + 0.1, cam_geom.far - 0.2)
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            position = d * u
            aim = -u
            tilt_axis = rng.normal(size=3)
            tilt_axis -= float(tilt_axis @ aim) * aim
            tilt_axis /= np.linalg.norm(tilt_axis)
            forward = rotation_about_axis(tilt_axis, rng.uniform(0.0, max_aim)) @ aim
            pose = RigidTransform(
                _aimed_camera_rotation(forward, rng.uniform(0.0, 2.0 * math.pi)),
                position,
            )
            frustum = Frustum.from_pose(pose, cam_geom)
            if frustum_signed_distance(frustum, target.centroid) <= 0.0:
                break
        rows.append(ScoredPose(pose, target.class_index,
                               oracle_score(params, pose, target, cam_geom)))
    return rows


DATASET_HEADER = ["tx", "ty", "tz",
                  "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22",
                  "class", "score"]


def save_dataset(path, rows: list[ScoredPose], params: PerceptionParams,
                 cam_geom: CameraIntrinsics, seed: int, num_classes: int) -> None:
    """Write the dataset CSV plus a JSON sidecar recording params and seed."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_HEADER)
        for row in rows:
            t = row.camera.translation
            r = row.camera.rotation.reshape(-1)
            writer.writerow([repr(float(v)) for v in t] + [repr(float(v)) for v in r]
                            + [row.class_index, repr(float(row.score))])
    sidecar = {
        "seed": seed,
        "num_classes": num_classes,
        "count": len(rows),
        "perception": asdict(params),
        "camera": asdict(cam_geom),
    }
    path.with_suffix(path.suffix + ".meta.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )


def load_dataset(path) -> tuple[list[ScoredPose], dict]:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DATASET_HEADER:
            raise ValueError(f"unexpected dataset header in {path}")
        for rec in reader:
            t = np.array([float(v) for v in rec[0:3]])
            r = np.array([float(v) for v in rec[3:12]]).reshape(3, 3)
            rows.append(ScoredPose(RigidTransform(r, t), int(rec[12]), float(rec[13])))
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return rows, meta
