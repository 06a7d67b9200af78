"""Kinematic robot models: joint chains, camera FK, metric and interpolation.

A configuration is a plain float ndarray of length k, one value per joint in
chain order. Angular joints whose limits span the full circle wrap into
(-pi, pi]; partial-range angular joints behave linearly so interpolation can
never leave the limit interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geom import CameraIntrinsics, Frustum, RigidTransform, rotation_about_axis

TWO_PI = 2.0 * math.pi

ANGULAR_KINDS = frozenset({"planar_yaw", "revolute"})
LINEAR_KINDS = frozenset({"planar_x", "planar_y", "prismatic"})
JOINT_KINDS = ANGULAR_KINDS | LINEAR_KINDS


class JointLimitError(ValueError):
    """A configuration value lies outside its joint's limits."""


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return math.pi - (math.pi - a) % TWO_PI


@dataclass(frozen=True)
class JointSpec:
    kind: str
    limits: tuple[float, float]
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    origin_offset: RigidTransform = field(default_factory=RigidTransform.identity)
    metric_weight: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise ValueError(f"unknown joint kind {self.kind!r}")
        lo, hi = self.limits
        if not lo < hi:
            raise ValueError(f"joint {self.name!r}: limits must satisfy lo < hi")
        if self.metric_weight <= 0:
            raise ValueError(f"joint {self.name!r}: metric_weight must be positive")

    @property
    def angular(self) -> bool:
        return self.kind in ANGULAR_KINDS

    @property
    def wraps(self) -> bool:
        # Only full-circle angular joints wrap; partial ranges stay linear so
        # shortest-arc interpolation cannot cross out of the limit interval.
        return self.angular and (self.limits[1] - self.limits[0]) >= TWO_PI - 1e-9


@dataclass(frozen=True)
class CollisionSphere:
    frame: int
    center: tuple[float, float, float]
    radius: float


@dataclass(frozen=True)
class RobotModel:
    joints: tuple[JointSpec, ...]
    camera_mount: RigidTransform
    camera: CameraIntrinsics
    collision_spheres: tuple[CollisionSphere, ...] = ()
    aim_joints: tuple[int, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        if not self.joints:
            raise ValueError("robot needs at least one joint")
        for sphere in self.collision_spheres:
            if not 0 <= sphere.frame < len(self.joints):
                raise ValueError(f"collision sphere frame {sphere.frame} out of range")

    @property
    def k(self) -> int:
        return len(self.joints)

    @cached_property
    def limits_lo(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @cached_property
    def limits_hi(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    @cached_property
    def metric_weights(self) -> np.ndarray:
        return np.array([j.metric_weight for j in self.joints])

    @cached_property
    def wrap_mask(self) -> np.ndarray:
        return np.array([j.wraps for j in self.joints])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.limits_lo, self.limits_hi)

    def wrap(self, q: np.ndarray) -> np.ndarray:
        out = np.array(q, dtype=float)
        for i in np.flatnonzero(self.wrap_mask):
            out[i] = wrap_angle(out[i])
        return out

    def validate(self, q: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.k,):
            raise ValueError(f"configuration must have shape ({self.k},), got {q.shape}")
        bad = (q < self.limits_lo - tol) | (q > self.limits_hi + tol)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise JointLimitError(
                f"joint {i} ({self.joints[i].name or self.joints[i].kind}) value "
                f"{q[i]:.6g} outside limits {self.joints[i].limits}"
            )
        return q


def _joint_motion(joint: JointSpec, value: float) -> tuple[np.ndarray | None, np.ndarray]:
    """Rotation (or None for pure translations) and translation of one joint."""
    if joint.kind == "planar_x":
        return None, np.array([value, 0.0, 0.0])
    if joint.kind == "planar_y":
        return None, np.array([0.0, value, 0.0])
    if joint.kind == "prismatic":
        return None, value * np.asarray(joint.axis, dtype=float)
    if joint.kind == "planar_yaw":
        return rotation_about_axis(np.array([0.0, 0.0, 1.0]), value), np.zeros(3)
    return rotation_about_axis(np.asarray(joint.axis, dtype=float), value), np.zeros(3)


def frame_poses(model: RobotModel, q: np.ndarray) -> list[RigidTransform]:
    """World pose of each joint frame (after the joint's own motion)."""
    q = model.validate(q)
    rot = np.eye(3)
    trans = np.zeros(3)
    poses = []
    for joint, value in zip(model.joints, q):
        off = joint.origin_offset
        trans = rot @ off.translation + trans
        rot = rot @ off.rotation
        joint_rot, joint_trans = _joint_motion(joint, float(value))
        trans = rot @ joint_trans + trans
        if joint_rot is not None:
            rot = rot @ joint_rot
        poses.append(RigidTransform(rot, trans))
    return poses


def forward_kinematics(model: RobotModel, q: np.ndarray) -> RigidTransform:
    """Camera pose in the world frame for configuration q."""
    last = frame_poses(model, q)[-1]
    return last.compose(model.camera_mount)


def batch_fk(model: RobotModel, qs) -> list[RigidTransform]:
    """Elementwise forward_kinematics; bit-identical to the sequential map."""
    out = []
    for i, q in enumerate(qs):
        try:
            out.append(forward_kinematics(model, q))
        except (JointLimitError, ValueError) as exc:
            raise type(exc)(f"batch item {i}: {exc}") from exc
    return out


def _rodrigues_batch(axis, angles: np.ndarray) -> np.ndarray:
    x, y, z = float(axis[0]), float(axis[1]), float(axis[2])
    c = np.cos(angles)
    s = np.sin(angles)
    t = 1.0 - c
    m = np.empty((len(angles), 3, 3))
    m[:, 0, 0] = t * x * x + c
    m[:, 0, 1] = t * x * y - s * z
    m[:, 0, 2] = t * x * z + s * y
    m[:, 1, 0] = t * x * y + s * z
    m[:, 1, 1] = t * y * y + c
    m[:, 1, 2] = t * y * z - s * x
    m[:, 2, 0] = t * x * z - s * y
    m[:, 2, 1] = t * y * z + s * x
    m[:, 2, 2] = t * z * z + c
    return m


def camera_frames_array(model: RobotModel, configs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Camera rotations (m, 3, 3) and positions (m, 3) for stacked configs.

    Vectorized fast path for numeric inner loops (projection Jacobians);
    configs are assumed already clamped to the joint limits.
    """
    q = np.atleast_2d(np.asarray(configs, dtype=float))
    m = len(q)
    rot = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
    pos = np.zeros((m, 3))
    for j, joint in enumerate(model.joints):
        off = joint.origin_offset
        if off.translation.any():
            pos += np.einsum("mij,j->mi", rot, off.translation, optimize=False)
        if not np.array_equal(off.rotation, np.eye(3)):
            rot = np.einsum("mij,jk->mik", rot, off.rotation, optimize=False)
        kind = joint.kind
        if kind == "planar_x":
            pos += q[:, j, None] * rot[:, :, 0]
        elif kind == "planar_y":
            pos += q[:, j, None] * rot[:, :, 1]
        elif kind == "prismatic":
            axis_world = np.einsum("mij,j->mi", rot, np.asarray(joint.axis, float),
                                   optimize=False)
            pos += q[:, j, None] * axis_world
        elif kind == "planar_yaw":
            rot = np.einsum("mij,mjk->mik", rot,
                            _rodrigues_batch((0.0, 0.0, 1.0), q[:, j]), optimize=False)
        else:
            rot = np.einsum("mij,mjk->mik", rot,
                            _rodrigues_batch(joint.axis, q[:, j]), optimize=False)
    mount = model.camera_mount
    if mount.translation.any():
        pos += np.einsum("mij,j->mi", rot, mount.translation, optimize=False)
    if not np.array_equal(mount.rotation, np.eye(3)):
        rot = np.einsum("mij,jk->mik", rot, mount.rotation, optimize=False)
    return rot, pos


def camera_frustum(model: RobotModel, q: np.ndarray) -> Frustum:
    return Frustum.from_pose(forward_kinematics(model, q), model.camera)


def collision_sphere_centers(model: RobotModel, q: np.ndarray) -> list[tuple[np.ndarray, float]]:
    poses = frame_poses(model, q)
    return [
        (poses[s.frame].apply(np.asarray(s.center, dtype=float)), s.radius)
        for s in model.collision_spheres
    ]


def _joint_deltas(model: RobotModel, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    d = np.asarray(q2, dtype=float) - np.asarray(q1, dtype=float)
    out = np.array(d)
    for i in np.flatnonzero(model.wrap_mask):
        out[i] = wrap_angle(out[i])
    return out


def config_distance(model: RobotModel, q1: np.ndarray, q2: np.ndarray) -> float:
    """Weighted metric: sqrt(sum_j w_j d_j^2) with wrapped angular deltas."""
    d = _joint_deltas(model, q1, q2)
    return float(math.sqrt(float(np.sum(model.metric_weights * d * d))))


def neighbor_pairs(model: RobotModel, configs: np.ndarray, radius: float,
                   chunk: int = 256) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All index pairs (u < v) within the weighted metric radius.

    Returns (u, v, d) arrays ordered row-major by (u, v). Chunked so the
    n x n distance computation never materializes in full.
    """
    n = len(configs)
    wrap_idx = np.flatnonzero(model.wrap_mask)
    us, vs, ds = [], [], []
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diffs = configs[start:stop, None, :] - configs[None, :, :]
        for i in wrap_idx:
            diffs[:, :, i] -= TWO_PI * np.round(diffs[:, :, i] / TWO_PI)
        d = np.sqrt(np.einsum("uvj,j->uv", diffs * diffs, model.metric_weights))
        row, col = np.nonzero(d <= radius)
        keep = (row + start) < col
        us.append(row[keep] + start)
        vs.append(col[keep])
        ds.append(d[row[keep], col[keep]])
    if not us:
        empty = np.empty(0)
        return empty.astype(int), empty.astype(int), empty
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ds)


def distances_to(model: RobotModel, configs: np.ndarray, q: np.ndarray) -> np.ndarray:
    diffs = configs - np.asarray(q, dtype=float)[None, :]
    for i in np.flatnonzero(model.wrap_mask):
        diffs[:, i] -= TWO_PI * np.round(diffs[:, i] / TWO_PI)
    return np.sqrt(np.einsum("nj,j->n", diffs * diffs, model.metric_weights))


def interpolate(model: RobotModel, q1: np.ndarray, q2: np.ndarray, s: float) -> np.ndarray:
    """Linear blend per joint with shortest-arc handling on wrapping joints."""
    q1 = np.asarray(q1, dtype=float)
    d = _joint_deltas(model, q1, q2)
    out = q1 + s * d
    for i in np.flatnonzero(model.wrap_mask):
        out[i] = wrap_angle(out[i])
    return out


def aim_at(model: RobotModel, q: np.ndarray, point) -> np.ndarray:
    """Point the optical axis at a world point using the two aim joints.

    Requires a pan-about-local-z joint immediately followed by a
    tilt-about-local-y joint, with the tilt offset purely along the pan axis
    and a forward-only camera mount; the bundled presets satisfy this. Joint
    values are clamped to their limits.
    """
    if len(model.aim_joints) != 2:
        raise ValueError(f"robot {model.name!r} does not define pan/tilt aim joints")
    i_pan, i_tilt = model.aim_joints
    if i_tilt != i_pan + 1:
        raise ValueError("aim joints must be consecutive (pan then tilt)")
    pan, tilt = model.joints[i_pan], model.joints[i_tilt]
    if not np.allclose(pan.axis, (0, 0, 1)) or not np.allclose(tilt.axis, (0, 1, 0)):
        raise ValueError("aim solver expects pan about local z and tilt about local y")
    off = tilt.origin_offset
    if np.any(off.rotation != np.eye(3)) or abs(off.translation[0]) > 1e-12 or abs(off.translation[1]) > 1e-12:
        raise ValueError("tilt origin offset must be a translation along the pan axis")
    mount = model.camera_mount
    if np.any(mount.rotation != np.eye(3)) or abs(mount.translation[1]) > 1e-12 or abs(mount.translation[2]) > 1e-12:
        raise ValueError("aim solver expects a forward-only camera mount")

    q = model.validate(q)
    rot = np.eye(3)
    trans = np.zeros(3)
    for joint, value in zip(model.joints[:i_pan], q[:i_pan]):
        o = joint.origin_offset
        trans = rot @ o.translation + trans
        rot = rot @ o.rotation
        jr, jt = _joint_motion(joint, float(value))
        trans = rot @ jt + trans
        if jr is not None:
            rot = rot @ jr
    o = pan.origin_offset
    trans = rot @ o.translation + trans
    rot = rot @ o.rotation
    base = RigidTransform(rot, trans)

    local = base.inverse().apply(np.asarray(point, dtype=float)) - off.translation
    out = np.array(q)
    out[i_pan] = wrap_angle(math.atan2(local[1], local[0]))
    out[i_tilt] = math.atan2(-local[2], math.hypot(local[0], local[1]))
    return model.clamp(out)


# ---------------------------------------------------------------------------
# Presets mirroring the three mobile-robot platforms used in the experiments.
# ---------------------------------------------------------------------------

_DEFAULT_CAMERA = CameraIntrinsics(
    vertical_fov=math.radians(42.5), aspect=640.0 / 480.0, near=0.3, far=6.0
)


def _planar_base(span: float = 10.0) -> list[JointSpec]:
    return [
        JointSpec("planar_x", (-span, span), name="base_x"),
        JointSpec("planar_y", (-span, span), name="base_y"),
        JointSpec("planar_yaw", (-math.pi, math.pi), name="base_yaw"),
    ]


def stretch_like(camera: CameraIntrinsics = _DEFAULT_CAMERA,
                 span: float = 10.0) -> RobotModel:
    """Planar base with a mast-top pan/tilt camera (k = 5)."""
    joints = _planar_base(span) + [
        JointSpec("revolute", (-2.35, 2.35), axis=(0, 0, 1),
                  origin_offset=RigidTransform.from_translation((0.0, 0.0, 1.2)),
                  name="camera_pan"),
        JointSpec("revolute", (-1.1, 1.1), axis=(0, 1, 0), name="camera_tilt"),
    ]
    return RobotModel(
        joints=tuple(joints),
        camera_mount=RigidTransform.from_translation((0.06, 0.0, 0.0)),
        camera=camera,
        collision_spheres=(
            CollisionSphere(2, (0.0, 0.0, 0.25), 0.28),
            CollisionSphere(2, (0.0, 0.0, 0.75), 0.22),
            CollisionSphere(2, (0.0, 0.0, 1.15), 0.18),
        ),
        aim_joints=(3, 4),
        name="stretch_like",
    )


def fetch_like(camera: CameraIntrinsics = _DEFAULT_CAMERA) -> RobotModel:
    """Planar base, torso lift and a pan/tilt head (k = 6)."""
    joints = _planar_base() + [
        JointSpec("prismatic", (0.0, 0.4), axis=(0, 0, 1),
                  origin_offset=RigidTransform.from_translation((0.0, 0.0, 0.72)),
                  name="torso_lift"),
        JointSpec("revolute", (-math.pi / 2, math.pi / 2), axis=(0, 0, 1),
                  origin_offset=RigidTransform.from_translation((0.0, 0.0, 0.34)),
                  name="head_pan"),
        JointSpec("revolute", (-0.76, 1.45), axis=(0, 1, 0), name="head_tilt"),
    ]
    return RobotModel(
        joints=tuple(joints),
        camera_mount=RigidTransform.from_translation((0.055, 0.0, 0.0)),
        camera=camera,
        collision_spheres=(
            CollisionSphere(2, (0.0, 0.0, 0.2), 0.3),
            CollisionSphere(3, (0.0, 0.0, -0.25), 0.26),
            CollisionSphere(4, (0.0, 0.0, 0.0), 0.2),
        ),
        aim_joints=(4, 5),
        name="fetch_like",
    )


def ur5_on_base(camera: CameraIntrinsics = _DEFAULT_CAMERA) -> RobotModel:
    """Planar base carrying a 6-joint arm with a wrist camera (k = 9)."""
    joints = _planar_base() + [
        JointSpec("revolute", (-math.pi, math.pi), axis=(0, 0, 1),
                  origin_offset=RigidTransform.from_translation((0.1, 0.0, 0.45)),
                  name="shoulder_pan"),
        JointSpec("revolute", (-2.2, 2.2), axis=(0, 1, 0),
                  origin_offset=RigidTransform.from_translation((0.0, 0.0, 0.15)),
                  name="shoulder_lift"),
        JointSpec("revolute", (-2.5, 2.5), axis=(0, 1, 0),
                  origin_offset=RigidTransform.from_translation((0.35, 0.0, 0.0)),
                  name="elbow"),
        JointSpec("revolute", (-2.2, 2.2), axis=(0, 1, 0),
                  origin_offset=RigidTransform.from_translation((0.3, 0.0, 0.0)),
                  name="wrist_1"),
        JointSpec("revolute", (-math.pi, math.pi), axis=(0, 0, 1),
                  origin_offset=RigidTransform.from_translation((0.1, 0.0, 0.0)),
                  name="wrist_2"),
        JointSpec("revolute", (-1.9, 1.9), axis=(0, 1, 0),
                  origin_offset=RigidTransform.from_translation((0.0, 0.0, 0.08)),
                  name="wrist_3"),
    ]
    return RobotModel(
        joints=tuple(joints),
        camera_mount=RigidTransform.from_translation((0.05, 0.0, 0.0)),
        camera=camera,
        collision_spheres=(
            CollisionSphere(2, (0.0, 0.0, 0.2), 0.3),
            CollisionSphere(3, (0.0, 0.0, 0.1), 0.18),
            CollisionSphere(5, (0.0, 0.0, 0.0), 0.12),
            CollisionSphere(7, (0.0, 0.0, 0.0), 0.1),
        ),
        aim_joints=(7, 8),
        name="ur5_on_base",
    )


PRESETS = {
    "stretch_like": stretch_like,
    "fetch_like": fetch_like,
    "ur5_on_base": ur5_on_base,
}


def preset(name: str, camera: CameraIntrinsics | None = None) -> RobotModel:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown robot preset {name!r}; choices: {sorted(PRESETS)}") from None
    return factory(camera) if camera is not None else factory()
