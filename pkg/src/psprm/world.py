"""Environment model: obstacles, scored targets, motion scripts and collision.

Environments are immutable snapshots; the scripted environment is a pure
function of time via env_at_time.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import Aabb
from .robot import RobotModel, collision_sphere_centers, config_distance, interpolate


@dataclass(frozen=True)
class TargetObject:
    label: str
    centroid: np.ndarray
    box: Aabb
    class_index: int = 0
    facing: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=float))
        if self.facing is not None:
            f = np.asarray(self.facing, dtype=float)
            n = np.linalg.norm(f)
            if n < 1e-12:
                raise ValueError(f"target {self.label!r}: facing must be nonzero")
            object.__setattr__(self, "facing", f / n)
        if not self.box.contains(self.centroid):
            raise ValueError(f"target {self.label!r}: centroid must lie inside its box")
        if self.class_index < 0:
            raise ValueError(f"target {self.label!r}: class_index must be >= 0")


@dataclass(frozen=True)
class Keyframe:
    time: float
    centroid: np.ndarray
    facing: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=float))
        if self.facing is not None:
            f = np.asarray(self.facing, dtype=float)
            object.__setattr__(self, "facing", f / np.linalg.norm(f))


@dataclass(frozen=True)
class Environment:
    obstacles: tuple[Aabb, ...]
    targets: tuple[TargetObject, ...]
    monitored: tuple[int, ...] = (0,)
    scripts: dict[int, tuple[Keyframe, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for i in self.monitored:
            if not 0 <= i < len(self.targets):
                raise ValueError(f"monitored target index {i} out of range")
        if not self.monitored:
            raise ValueError("at least one monitored target is required")
        for i, frames in self.scripts.items():
            times = [kf.time for kf in frames]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError(f"script for target {i}: times must strictly increase")

    def monitored_targets(self) -> list[TargetObject]:
        return [self.targets[i] for i in self.monitored]

    def monitor_point(self) -> np.ndarray:
        """Constraint aim point: centroid of the monitored targets' centroids."""
        return np.mean([t.centroid for t in self.monitored_targets()], axis=0)

    def num_classes(self) -> int:
        return max(t.class_index for t in self.targets) + 1 if self.targets else 0

    def obstacle_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.obstacles:
            return np.empty((0, 3)), np.empty((0, 3))
        return (np.array([b.min_corner for b in self.obstacles]),
                np.array([b.max_corner for b in self.obstacles]))

    def content_hash(self) -> str:
        payload = {
            "obstacles": [[b.center.tolist(), b.half_extents.tolist()] for b in self.obstacles],
            "targets": [
                [t.label, t.centroid.tolist(), t.box.center.tolist(),
                 t.box.half_extents.tolist(), t.class_index,
                 None if t.facing is None else t.facing.tolist()]
                for t in self.targets
            ],
            "monitored": list(self.monitored),
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def slerp_unit(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    """Spherical interpolation between unit vectors.

    Antipodal pairs are rotated through a deterministic perpendicular pivot.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.clip(a @ b, -1.0, 1.0))
    omega = math.acos(dot)
    if omega < 1e-12:
        return np.array(a)
    if math.pi - omega < 1e-9:
        ref = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        pivot = np.cross(a, ref)
        pivot /= np.linalg.norm(pivot)
        half = slerp_unit(a, pivot, 2.0 * s) if s <= 0.5 else slerp_unit(pivot, b, 2.0 * s - 1.0)
        return half
    so = math.sin(omega)
    out = (math.sin((1.0 - s) * omega) * a + math.sin(s * omega) * b) / so
    return out / np.linalg.norm(out)


def _scripted_pose(frames: tuple[Keyframe, ...], base: TargetObject, t: float):
    if t <= frames[0].time:
        kf = frames[0]
        return kf.centroid, kf.facing if kf.facing is not None else base.facing
    if t >= frames[-1].time:
        kf = frames[-1]
        return kf.centroid, kf.facing if kf.facing is not None else base.facing
    for a, b in zip(frames, frames[1:]):
        if a.time <= t <= b.time:
            s = (t - a.time) / (b.time - a.time)
            centroid = (1.0 - s) * a.centroid + s * b.centroid
            fa = a.facing if a.facing is not None else base.facing
            fb = b.facing if b.facing is not None else base.facing
            if fa is None or fb is None:
                facing = fa if fb is None else fb
            else:
                facing = slerp_unit(fa, fb, s)
            return centroid, facing
    raise AssertionError("unreachable")


def env_at_time(env: Environment, t: float) -> Environment:
    """Snapshot with scripted targets moved to time t; static targets unchanged."""
    if t < 0:
        raise ValueError("time must be >= 0")
    if not env.scripts:
        return env
    targets = list(env.targets)
    for i, frames in env.scripts.items():
        base = env.targets[i]
        centroid, facing = _scripted_pose(frames, base, t)
        targets[i] = TargetObject(
            label=base.label,
            centroid=centroid,
            box=base.box.translated(centroid - base.centroid),
            class_index=base.class_index,
            facing=facing,
        )
    return replace(env, targets=tuple(targets))


def target_displacement(env_a: Environment, env_b: Environment) -> float:
    """Largest centroid shift (m) or facing rotation (rad) between snapshots."""
    worst = 0.0
    for ta, tb in zip(env_a.targets, env_b.targets):
        worst = max(worst, float(np.linalg.norm(tb.centroid - ta.centroid)))
        if ta.facing is not None and tb.facing is not None:
            dot = float(np.clip(ta.facing @ tb.facing, -1.0, 1.0))
            worst = max(worst, math.acos(dot))
    return worst


def config_in_collision(env: Environment, model: RobotModel, q: np.ndarray) -> bool:
    """True iff any collision sphere touches any obstacle box (closed test)."""
    if not env.obstacles:
        return False
    for center, radius in collision_sphere_centers(model, q):
        for box in env.obstacles:
            if box.distance_to_point(center) <= radius:
                return True
    return False


def edge_in_collision(env: Environment, model: RobotModel, q1: np.ndarray,
                      q2: np.ndarray, resolution: float = 0.05) -> bool:
    """Check interpolated configurations at spacing <= resolution, endpoints included."""
    d = config_distance(model, q1, q2)
    steps = max(1, int(math.ceil(d / resolution)))
    for i in range(steps + 1):
        if config_in_collision(env, model, interpolate(model, q1, q2, i / steps)):
            return True
    return False


def batch_collision(env: Environment, model: RobotModel, qs) -> list[bool]:
    """Elementwise config_in_collision; bit-identical to the sequential map."""
    out = []
    for i, q in enumerate(qs):
        try:
            out.append(config_in_collision(env, model, q))
        except ValueError as exc:
            raise type(exc)(f"batch item {i}: {exc}") from exc
    return out


@dataclass(frozen=True)
class GoalRegion:
    """Axis-aligned interval box in configuration space."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("goal region needs lo <= hi componentwise")

    def contains(self, q: np.ndarray) -> bool:
        return bool(np.all(q >= self.lo) and np.all(q <= self.hi))


@dataclass(frozen=True)
class PlanningProblem:
    q_start: np.ndarray
    goals: tuple[np.ndarray | GoalRegion, ...]
    alpha: float = 0.75

    def __post_init__(self):
        object.__setattr__(self, "q_start", np.asarray(self.q_start, dtype=float))
        goals = tuple(
            g if isinstance(g, GoalRegion) else np.asarray(g, dtype=float)
            for g in self.goals
        )
        if not goals:
            raise ValueError("at least one goal is required")
        object.__setattr__(self, "goals", goals)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
