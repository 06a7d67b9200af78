import math

import numpy as np
import pytest

from psprm.constraint import (ConstraintSpec, constrained_interpolate,
                              constraint_jacobian, constraint_value,
                              project_to_manifold, sample_on_manifold)
from psprm.geom import Aabb
from psprm.robot import aim_at, config_distance, forward_kinematics, interpolate
from psprm.world import Environment, config_in_collision

from conftest import make_target

LOS = ConstraintSpec("line_of_sight")
FRUSTUM = ConstraintSpec("frustum")


def line_distance_oracle(apex, direction, point):
    """Independent point-to-ray distance via the cross product."""
    v = np.asarray(point) - np.asarray(apex)
    d = np.asarray(direction)
    if float(v @ d) <= 0:
        return float(np.linalg.norm(v))
    return float(np.linalg.norm(np.cross(v, d)) / np.linalg.norm(d))


class TestConstraintValue:
    def test_aimed_camera_zero(self, stretch, open_env):
        q = aim_at(stretch, np.zeros(5), open_env.monitor_point())
        assert constraint_value(LOS, stretch, open_env, q) < 1e-9

    def test_frustum_clamps_interior_to_zero(self, stretch, open_env):
        q = aim_at(stretch, np.zeros(5), open_env.monitor_point())
        assert constraint_value(FRUSTUM, stretch, open_env, q) == 0.0

    def test_los_value_matches_line_distance_oracle(self, stretch):
        # camera at origin pointing +x, target at (1, 1, camera height)
        env = Environment(obstacles=(), targets=(make_target((1.0, 1.0, 1.2)),))
        q = np.zeros(5)
        pose = forward_kinematics(stretch, q)
        expected = line_distance_oracle(pose.translation, pose.rotation[:, 0],
                                        env.monitor_point())
        value = constraint_value(LOS, stretch, env, q)
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_gradient_matches_central_differences(self, stretch, open_env):
        rng = np.random.default_rng(1)
        checked = 0
        for _ in range(40):
            q = rng.uniform(stretch.limits_lo * 0.8, stretch.limits_hi * 0.8)
            h = constraint_value(LOS, stretch, open_env, q)
            if h < 0.05:
                continue
            jac = constraint_jacobian(LOS, stretch, open_env, q)
            step = 1e-4
            central = np.zeros(stretch.k)
            for j in range(stretch.k):
                qp, qm = np.array(q), np.array(q)
                qp[j] += step
                qm[j] -= step
                central[j] = (constraint_value(LOS, stretch, open_env, qp)
                              - constraint_value(LOS, stretch, open_env, qm)) / (2 * step)
            denom = max(np.linalg.norm(central), 1e-9)
            assert np.linalg.norm(jac - central) / denom < 1e-3
            checked += 1
        assert checked >= 20


class TestProjection:
    def test_already_on_manifold_zero_iterations(self, stretch, open_env):
        q = aim_at(stretch, np.zeros(5), open_env.monitor_point())
        result = project_to_manifold(LOS, stretch, open_env, q)
        assert result.converged
        assert result.iterations == 0
        assert np.allclose(result.q, q, atol=1e-12)

    def test_pan_only_symmetric_solution(self):
        from psprm.geom import CameraIntrinsics, RigidTransform
        from psprm.robot import JointSpec, RobotModel

        pan_bot = RobotModel(
            joints=(JointSpec("revolute", (-math.pi, math.pi), axis=(0, 0, 1),
                              origin_offset=RigidTransform.from_translation((0, 0, 1.2)),
                              name="pan"),),
            camera_mount=RigidTransform.identity(),
            camera=CameraIntrinsics(math.radians(42.5), 4 / 3, 0.3, 6.0),
        )
        env = Environment(obstacles=(), targets=(make_target((1.0, 1.0, 1.2)),))
        result = project_to_manifold(LOS, pan_bot, env, np.zeros(1))
        assert result.converged
        assert result.q[0] == pytest.approx(math.pi / 4, abs=1e-4)

    def test_descent_property(self, stretch, open_env):
        rng = np.random.default_rng(2)
        for _ in range(100):
            q0 = rng.uniform(stretch.limits_lo, stretch.limits_hi)
            h0 = constraint_value(LOS, stretch, open_env, q0)
            result = project_to_manifold(LOS, stretch, open_env, q0)
            assert result.converged or result.residual <= h0 + 10 * LOS.tolerance

    @pytest.mark.parametrize("spec", [LOS, FRUSTUM], ids=["los", "frustum"])
    def test_statistical_convergence(self, spec, stretch, open_env):
        rng = np.random.default_rng(3)
        converged = 0
        for _ in range(100):
            q0 = rng.uniform(stretch.limits_lo, stretch.limits_hi)
            result = project_to_manifold(spec, stretch, open_env, q0)
            if result.converged:
                converged += 1
                assert abs(constraint_value(spec, stretch, open_env, result.q)) <= 1e-4
        assert converged >= 95

    def test_nonconvergence_is_reported_not_raised(self, stretch):
        # target far outside every camera reach: below the floor, behind walls
        env = Environment(obstacles=(), targets=(make_target((0.0, 0.0, -50.0)),))
        spec = ConstraintSpec("line_of_sight", max_iterations=3)
        result = project_to_manifold(spec, stretch, env, np.zeros(5))
        assert isinstance(result.converged, bool)


class TestSampling:
    def test_blocked_scene_returns_none(self, stretch):
        everywhere = Aabb(np.array([0.0, 0.0, 1.0]), np.array([50.0, 50.0, 1.0]))
        env = Environment(obstacles=(everywhere,), targets=(make_target((0.0, 0.0, 1.0)),))
        assert sample_on_manifold(LOS, stretch, env, seed=0, max_attempts=20) is None

    def test_samples_valid_and_collision_free(self, stretch, cluttered_env):
        accepted = 0
        for i in range(200):
            q = sample_on_manifold(LOS, stretch, cluttered_env, seed=(7, i))
            if q is None:
                continue
            accepted += 1
            assert abs(constraint_value(LOS, stretch, cluttered_env, q)) <= 1e-4
            assert not config_in_collision(cluttered_env, stretch, q)
            assert np.all(q >= stretch.limits_lo) and np.all(q <= stretch.limits_hi)
        assert accepted >= 150

    def test_same_seed_identical(self, stretch, open_env):
        a = sample_on_manifold(LOS, stretch, open_env, seed=42)
        b = sample_on_manifold(LOS, stretch, open_env, seed=42)
        assert a is not None and np.array_equal(a, b)

    def test_rejection_mode_requires_exact_zero(self, stretch, open_env):
        for i in range(50):
            q = sample_on_manifold(FRUSTUM, stretch, open_env, seed=(9, i),
                                   project=False)
            if q is not None:
                assert constraint_value(FRUSTUM, stretch, open_env, q) == 0.0

    def test_box_restriction(self, stretch, open_env):
        lo = np.array([-1.0, -1.0, -math.pi, -2.35, -1.1])
        hi = np.array([1.0, 1.0, math.pi, 2.35, 1.1])
        q = sample_on_manifold(LOS, stretch, open_env, seed=1, box=(lo, hi))
        assert q is not None
        assert -1.0 <= q[0] <= 1.0 and -1.0 <= q[1] <= 1.0


class TestConstrainedInterpolate:
    def on_manifold_pair(self, stretch, env, seed):
        q1 = sample_on_manifold(LOS, stretch, env, seed=(seed, 0))
        q2 = sample_on_manifold(LOS, stretch, env, seed=(seed, 1))
        assert q1 is not None and q2 is not None
        return q1, q2

    def test_zero_intermediates(self, stretch, open_env):
        q1, q2 = self.on_manifold_pair(stretch, open_env, 11)
        assert constrained_interpolate(LOS, stretch, open_env, q1, q2, 0) == []

    def test_degenerate_segment(self, stretch, open_env):
        q1, _ = self.on_manifold_pair(stretch, open_env, 12)
        out = constrained_interpolate(LOS, stretch, open_env, q1, q1, 5)
        assert out is not None and len(out) == 5
        for q in out:
            assert np.allclose(q, q1, atol=1e-9)

    def test_intermediates_revalidate(self, stretch, open_env):
        rng = np.random.default_rng(13)
        done = 0
        for seed in range(20):
            q1, q2 = self.on_manifold_pair(stretch, open_env, 100 + seed)
            if config_distance(stretch, q1, q2) > 3.0:
                continue
            out = constrained_interpolate(LOS, stretch, open_env, q1, q2, 5)
            if out is None:
                continue
            done += 1
            for q in out:
                assert abs(constraint_value(LOS, stretch, open_env, q)) <= 1e-4
                assert not config_in_collision(open_env, stretch, q)
        assert done >= 5

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ConstraintSpec("barrier")
        with pytest.raises(ValueError):
            ConstraintSpec("frustum", tolerance=0.0)
