"""Rigid transforms, camera frustum geometry and ray/AABB intersection.

Everything here is a pure function over immutable values; all distances are
in meters and all angles in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    ax = np.asarray(axis, dtype=float)
    x, y, z = ax
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def is_rotation(matrix: np.ndarray, tol: float = _ORTHO_TOL) -> bool:
    """True if matrix is orthonormal with determinant +1 within tol."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3):
        return False
    return (
        np.max(np.abs(m.T @ m - np.eye(3))) <= tol
        and abs(np.linalg.det(m) - 1.0) <= tol
    )


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation, composing on the right (world = T * local)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(t) -> "RigidTransform":
        return RigidTransform(np.eye(3), np.asarray(t, dtype=float))

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return RigidTransform(rotation_about_axis(np.asarray(axis, float), angle),
                              np.asarray(translation, float))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def apply(self, point) -> np.ndarray:
        """Map a point (3,) or points (n, 3) from local to world."""
        p = np.asarray(point, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def apply_direction(self, direction) -> np.ndarray:
        d = np.asarray(direction, dtype=float)
        if d.ndim == 1:
            return self.rotation @ d
        return d @ self.rotation.T

    def is_valid(self, tol: float = _ORTHO_TOL) -> bool:
        return is_rotation(self.rotation, tol)


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by center and strictly positive half extents."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))
        if np.any(self.half_extents <= 0):
            raise ValueError(f"half extents must be positive, got {self.half_extents}")

    @property
    def min_corner(self) -> np.ndarray:
        return self.center - self.half_extents

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + self.half_extents

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.min_corner) and np.all(p <= self.max_corner))

    def closest_point(self, point) -> np.ndarray:
        return np.clip(np.asarray(point, dtype=float), self.min_corner, self.max_corner)

    def distance_to_point(self, point) -> float:
        p = np.asarray(point, dtype=float)
        return float(np.linalg.norm(p - self.closest_point(p)))

    def corners(self) -> np.ndarray:
        """All 8 corners in lexicographic (x, y, z) order, shape (8, 3)."""
        lo = self.min_corner
        hi = self.max_corner
        out = np.empty((8, 3))
        i = 0
        for x in (lo[0], hi[0]):
            for y in (lo[1], hi[1]):
                for z in (lo[2], hi[2]):
                    out[i] = (x, y, z)
                    i += 1
        return out

    def translated(self, offset) -> "Aabb":
        return Aabb(self.center + np.asarray(offset, dtype=float), self.half_extents)


@dataclass(frozen=True)
class Ray:
    """Half-line from origin along a unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if not math.isfinite(n) or abs(n - 1.0) > _ORTHO_TOL:
            raise ValueError(f"ray direction must be unit length, |d| = {n}")
        object.__setattr__(self, "direction", d)


def ray_aabb_hit(ray: Ray, box: Aabb) -> float | None:
    """Entry distance of a ray into a box by the slab method.

    Returns the smallest t >= 0 with origin + t * direction on or inside the
    box, or None when the ray misses it. Zero direction components divide to
    +-inf; a NaN (origin exactly on a slab plane with a parallel ray) relaxes
    that slab, giving closed-box semantics.
    """
    lo, hi = _slab_interval(ray.origin, ray.direction, box.min_corner, box.max_corner)
    if hi < lo or hi < 0.0:
        return None
    return max(lo, 0.0)


def _slab_interval(origin, direction, box_min, box_max):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (box_min - origin) / direction
        t2 = (box_max - origin) / direction
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    near = np.where(np.isnan(near), -np.inf, near)
    far = np.where(np.isnan(far), np.inf, far)
    return float(near.max()), float(far.min())


def ray_boxes_entry(origin, direction, box_mins, box_maxs) -> np.ndarray:
    """Vectorized entry distances of one ray against stacked boxes.

    box_mins/box_maxs have shape (n, 3); returns (n,) with NaN for misses.
    """
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (box_mins - o) / d
        t2 = (box_maxs - o) / d
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    near = np.where(np.isnan(near), -np.inf, near)
    far = np.where(np.isnan(far), np.inf, far)
    lo = near.max(axis=1)
    hi = far.min(axis=1)
    entry = np.maximum(lo, 0.0)
    miss = (hi < lo) | (hi < 0.0)
    return np.where(miss, np.nan, entry)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole viewing volume parameters shared by every frustum we build."""

    vertical_fov: float
    aspect: float
    near: float
    far: float

    def __post_init__(self):
        if not 0.0 < self.near < self.far:
            raise ValueError(f"need 0 < near < far, got {self.near}, {self.far}")
        if not 0.0 < self.vertical_fov < math.pi:
            raise ValueError(f"vertical fov out of range: {self.vertical_fov}")
        if self.aspect <= 0:
            raise ValueError("aspect must be positive")


@dataclass(frozen=True)
class Frustum:
    """Truncated viewing pyramid with 6 derived inward-facing planes.

    The camera convention is forward = +x, up = +z, right = forward x up
    of the camera frame. Planes are stored as rows (nx, ny, nz, d) with
    n . p + d >= 0 for interior points.
    """

    apex: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    right: np.ndarray
    vertical_fov: float
    aspect: float
    near: float
    far: float
    planes: np.ndarray = field(init=False)

    def __post_init__(self):
        for name in ("apex", "forward", "up", "right"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not 0.0 < self.near < self.far:
            raise ValueError("need 0 < near < far")
        basis = np.column_stack([self.forward, self.up, self.right])
        if np.max(np.abs(basis.T @ basis - np.eye(3))) > 1e-7:
            raise ValueError("forward/up/right must be orthonormal")
        object.__setattr__(self, "planes", self._build_planes())

    @staticmethod
    def from_pose(pose: RigidTransform, cam: CameraIntrinsics) -> "Frustum":
        forward = pose.rotation[:, 0]
        up = pose.rotation[:, 2]
        right = np.cross(forward, up)
        return Frustum(pose.translation, forward, up, right,
                       cam.vertical_fov, cam.aspect, cam.near, cam.far)

    def _build_planes(self) -> np.ndarray:
        half_v = 0.5 * self.vertical_fov
        half_h = math.atan(self.aspect * math.tan(half_v))
        sv, cv = math.sin(half_v), math.cos(half_v)
        sh, ch = math.sin(half_h), math.cos(half_h)
        f, u, r = self.forward, self.up, self.right
        normals = [
            f,                    # near
            -f,                   # far
            sv * f - cv * u,      # top
            sv * f + cv * u,      # bottom
            sh * f - ch * r,      # right
            sh * f + ch * r,      # left
        ]
        points = [self.apex + self.near * f, self.apex + self.far * f] + [self.apex] * 4
        planes = np.empty((6, 4))
        for i, (n, p) in enumerate(zip(normals, points)):
            planes[i, :3] = n
            planes[i, 3] = -float(n @ p)
        return planes


def frustum_signed_distance(frustum: Frustum, point) -> float:
    """Signed distance to the frustum boundary: negative inside, 0 on it.

    Taken as the max over the 6 negated in-plane distances, so it is exact on
    the boundary and inside and a conservative lower bound outside.
    """
    p = np.asarray(point, dtype=float)
    return float(-(frustum.planes[:, :3] @ p + frustum.planes[:, 3]).min())


def frustum_contains(frustum: Frustum, point) -> bool:
    p = np.asarray(point, dtype=float)
    return bool(np.all(frustum.planes[:, :3] @ p + frustum.planes[:, 3] >= 0.0))


def point_to_optical_axis_distance(frustum: Frustum, point) -> float:
    """Perpendicular distance from a point to the forward optical ray.

    For points behind the apex (no positive projection onto the forward
    axis), returns the full distance to the apex so that descent directions
    always pull the target back in front of the camera.
    """
    v = np.asarray(point, dtype=float) - frustum.apex
    along = float(v @ frustum.forward)
    if along > 0.0:
        return float(np.linalg.norm(v - along * frustum.forward))
    return float(np.linalg.norm(v))
