"""Visibility-manifold constraints, damped Gauss-Newton projection and sampling.

Both built-in constraint kinds reduce to a single scalar residual h(q) >= 0
whose zero set is the visibility manifold: the optical-axis distance to the
monitored point (line of sight) or the clamped frustum signed distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import Frustum, frustum_signed_distance, point_to_optical_axis_distance
from .robot import RobotModel, camera_frames_array, forward_kinematics, interpolate
from .world import Environment, config_in_collision

KINDS = ("line_of_sight", "frustum")


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str = "line_of_sight"
    tolerance: float = 1e-4
    max_iterations: int = 50
    fd_step: float = 1e-6
    damping: float = 1e-6
    max_step: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}; choices: {KINDS}")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")


@dataclass
class ProjectionResult:
    q: np.ndarray
    residual: float
    iterations: int
    converged: bool


def constraint_value(spec: ConstraintSpec, model: RobotModel, env: Environment,
                     q: np.ndarray) -> float:
    """Scalar residual h(q) >= 0; zero iff the visibility constraint holds."""
    frustum = Frustum.from_pose(forward_kinematics(model, q), model.camera)
    point = env.monitor_point()
    if spec.kind == "line_of_sight":
        return point_to_optical_axis_distance(frustum, point)
    return max(0.0, frustum_signed_distance(frustum, point))


def _alignment_objective(model: RobotModel, env: Environment):
    """Distance from the target to the viewable part of the optical axis.

    Clamping the axis projection at the near distance removes the spurious
    apex-on-target attractor of the raw perpendicular distance: a camera
    sitting on the target reads near instead of ~0. Vectorized over rows of
    stacked configurations.
    """
    point = env.monitor_point()
    near = model.camera.near

    def fn(configs: np.ndarray) -> np.ndarray:
        rot, pos = camera_frames_array(model, configs)
        fwd = rot[:, :, 0]
        v = point[None, :] - pos
        along = np.einsum("mi,mi->m", v, fwd, optimize=False)
        rest = v - np.maximum(along, near)[:, None] * fwd
        return np.sqrt(np.einsum("mi,mi->m", rest, rest, optimize=False))

    return fn


def _range_objective(model: RobotModel, env: Environment, margin: float,
                     bounded_far: bool):
    """How far the target range lies outside [near + margin, far - margin].

    Line of sight has no upper range bound. Moving the camera position fixes
    range violations directly, so this phase repairs states the alignment
    descent cannot (closer to the target than the near distance, or beyond
    the far plane).
    """
    point = env.monitor_point()
    near = model.camera.near + margin
    far = model.camera.far - margin if bounded_far else np.inf

    def fn(configs: np.ndarray) -> np.ndarray:
        _, pos = camera_frames_array(model, configs)
        r = np.linalg.norm(point[None, :] - pos, axis=1)
        return np.maximum(0.0, np.maximum(near - r, r - far))

    return fn


def _fd_jacobian(objective, model: RobotModel, q: np.ndarray, h0: float,
                 fd_step: float) -> np.ndarray:
    jac = np.zeros(model.k)
    for j in range(model.k):
        step = fd_step
        if q[j] + step > model.limits_hi[j]:
            step = -step
        qj = np.array(q)
        qj[j] += step
        jac[j] = (objective(qj) - h0) / step
    return jac


def constraint_jacobian(spec: ConstraintSpec, model: RobotModel, env: Environment,
                        q: np.ndarray, h0: float | None = None) -> np.ndarray:
    """Forward-difference row Jacobian of h, flipping sides at joint limits."""
    if h0 is None:
        h0 = constraint_value(spec, model, env, q)
    return _fd_jacobian(lambda qq: constraint_value(spec, model, env, qq),
                        model, q, h0, spec.fd_step)


def _gn_descent(objective, spec: ConstraintSpec, model: RobotModel,
                q: np.ndarray, budget: int, tolerance: float):
    """Damped Gauss-Newton with a trust-region cap and backtracking.

    Each step solves the scalar damped least-squares system
    q <- clamp(q - J^T h / (J J^T + damping)), capped at max_step and halved
    while it fails to decrease |h|. The objective is vectorized, so the whole
    finite-difference Jacobian costs one kernel call. Returns
    (q, h, iterations_used).
    """
    k = model.k
    idx = np.arange(k)
    h = float(objective(q[None, :])[0])
    for it in range(budget):
        if abs(h) <= tolerance:
            return q, h, it
        steps = np.full(k, spec.fd_step)
        steps[q + spec.fd_step > model.limits_hi] = -spec.fd_step
        probes = np.tile(q, (k, 1))
        probes[idx, idx] += steps
        jac = (objective(probes) - h) / steps
        # project out components pushing into an active joint limit, else the
        # clamp eats the step and progress stalls on the remaining entries
        at_hi = (q >= model.limits_hi - 1e-12) & (jac < 0)
        at_lo = (q <= model.limits_lo + 1e-12) & (jac > 0)
        jac[at_hi | at_lo] = 0.0
        denom = float(jac @ jac) + spec.damping
        if denom <= 2.0 * spec.damping:
            return q, h, it + 1
        step = jac * (h / denom)
        norm = float(np.linalg.norm(step))
        cap = max(spec.max_step, 0.5 * abs(h))
        if norm > cap:
            step = step * (cap / norm)
        q_next, h_next = q, h
        for _ in range(6):
            trial = model.wrap(model.clamp(q - step))
            h_trial = float(objective(trial[None, :])[0])
            q_next, h_next = trial, h_trial
            if abs(h_trial) < abs(h):
                break
            step = 0.5 * step
        q, h = q_next, h_next
    return q, h, budget


def project_to_manifold(spec: ConstraintSpec, model: RobotModel, env: Environment,
                        q0: np.ndarray) -> ProjectionResult:
    """Retract q0 onto the visibility manifold; non-convergence is reported.

    Alternates two damped Gauss-Newton phases: aligning the optical axis
    with the target (near-clamped axis distance, which has no spurious
    apex-on-target attractor) and sliding the camera position until the
    range is viewable. An aligned in-range camera satisfies either
    constraint kind. Alternation matters for arm cameras, where the slide
    bends joints that also rotate the camera. Convergence is always judged
    on the public residual, which the alignment objective upper-bounds.
    """
    q = model.wrap(model.clamp(np.asarray(q0, dtype=float)))
    align = _alignment_objective(model, env)
    # slide well clear of the near/far boundaries; alignment descent can pull
    # the base slightly toward the target and must not re-enter the sub-near
    # pocket it was just pushed out of
    margin = 0.1 * (model.camera.far - model.camera.near)
    slide = _range_objective(model, env, margin=margin,
                             bounded_far=spec.kind == "frustum")

    def public_residual(qq: np.ndarray) -> float:
        if spec.kind == "line_of_sight":
            return float(align(qq[None, :])[0])
        return constraint_value(spec, model, env, qq)

    h_true = public_residual(q)
    if h_true <= spec.tolerance:
        return ProjectionResult(q, h_true, 0, True)
    used = 0
    # bounded slices so a crawling phase cannot starve its partner
    slice_budget = max(8, spec.max_iterations // 4)
    while used < spec.max_iterations:
        q, _, n = _gn_descent(align, spec, model, q,
                              min(slice_budget, spec.max_iterations - used),
                              spec.tolerance)
        used += max(n, 1)
        h_true = public_residual(q)
        if h_true <= spec.tolerance or used >= spec.max_iterations:
            break
        q, _, n = _gn_descent(slide, spec, model, q,
                              min(slice_budget, spec.max_iterations - used), 0.0)
        used += max(n, 1)
        h_true = public_residual(q)
        if h_true <= spec.tolerance:
            break
    return ProjectionResult(q, h_true, min(used, spec.max_iterations),
                            h_true <= spec.tolerance)


def _as_seed_tuple(seed) -> tuple[int, ...]:
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def sample_on_manifold(spec: ConstraintSpec, model: RobotModel, env: Environment,
                       seed, max_attempts: int = 100, project: bool = True,
                       box: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray | None:
    """Draw a collision-free configuration on the manifold, or None.

    Each attempt uses its own generator keyed by (seed..., attempt), so the
    result is independent of how attempts are scheduled across workers. With
    project=False the sampler degenerates to pure accept/reject (the
    rejection baseline). `box` narrows the uniform sampling volume, e.g. to a
    goal region intersected with the joint limits.
    """
    lo = model.limits_lo if box is None else np.maximum(model.limits_lo, box[0])
    hi = model.limits_hi if box is None else np.minimum(model.limits_hi, box[1])
    if np.any(lo > hi):
        return None
    key = _as_seed_tuple(seed)
    for attempt in range(max_attempts):
        rng = np.random.default_rng(key + (attempt,))
        q = rng.uniform(lo, hi)
        if project:
            result = project_to_manifold(spec, model, env, q)
            if not result.converged:
                continue
            q = result.q
        elif constraint_value(spec, model, env, q) != 0.0:
            continue
        if not config_in_collision(env, model, q):
            return q
    return None


def constrained_interpolate(spec: ConstraintSpec, model: RobotModel, env: Environment,
                            q1: np.ndarray, q2: np.ndarray, n: int) -> list[np.ndarray] | None:
    """Project n evenly spaced interpolants onto the manifold.

    Returns None as soon as any intermediate fails to project or collides,
    which rejects the edge upstream.
    """
    out = []
    for i in range(1, n + 1):
        s = i / (n + 1)
        result = project_to_manifold(spec, model, env, interpolate(model, q1, q2, s))
        if not result.converged:
            return None
        if config_in_collision(env, model, result.q):
            return None
        out.append(result.q)
    return out
