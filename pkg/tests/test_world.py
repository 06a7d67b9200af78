import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation, Slerp

from psprm.geom import Aabb
from psprm.world import (Environment, GoalRegion, Keyframe, PlanningProblem,
                         batch_collision, config_in_collision, edge_in_collision,
                         env_at_time, slerp_unit, target_displacement)

from conftest import make_target


def sphere_box_overlap_sampled(center, radius, box, n=4000):
    """Oracle: dense sphere-surface sampling, axis directions included."""
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    axes = np.vstack([np.eye(3), -np.eye(3)])
    dirs = np.vstack([dirs, axes])
    for scale in (1.0, 0.999999, 0.5, 0.0):
        pts = center + scale * radius * dirs
        inside = np.all(np.abs(pts - box.center) <= box.half_extents + 1e-9, axis=1)
        if inside.any():
            return True
    return False


class TestCollision:
    def test_sphere_inside_obstacle(self, stretch):
        env = Environment(
            obstacles=(Aabb(np.array([0.0, 0.0, 0.3]), np.array([1.0, 1.0, 1.0])),),
            targets=(make_target((5.0, 0.0, 1.0)),),
        )
        assert config_in_collision(env, stretch, np.zeros(5))

    def test_empty_obstacles_free(self, stretch, open_env):
        assert not config_in_collision(open_env, stretch, np.zeros(5))

    def test_exact_touch_is_collision(self, stretch):
        # stretch base sphere: frame 2, center (0,0,0.25), radius 0.28
        box = Aabb(np.array([1.28, 0.0, 0.25]), np.array([1.0, 0.5, 0.25]))
        env = Environment(obstacles=(box,), targets=(make_target((5.0, 0.0, 1.0)),))
        assert config_in_collision(env, stretch, np.zeros(5))
        assert sphere_box_overlap_sampled(np.array([0.0, 0.0, 0.25]), 0.28, box)
        # just beyond the touch distance: free
        box_far = Aabb(np.array([1.2800001, 0.0, 0.25]), np.array([1.0, 0.5, 0.25]))
        env_far = Environment(obstacles=(box_far,), targets=(make_target((5.0, 0.0, 1.0)),))
        assert not config_in_collision(env_far, stretch, np.zeros(5))

    def test_removing_obstacle_monotone(self, stretch, cluttered_env):
        rng = np.random.default_rng(3)
        fewer = Environment(obstacles=cluttered_env.obstacles[:1],
                            targets=cluttered_env.targets)
        for _ in range(200):
            q = rng.uniform(stretch.limits_lo, stretch.limits_hi)
            if not config_in_collision(cluttered_env, stretch, q):
                assert not config_in_collision(fewer, stretch, q)


class TestEdgeCollision:
    def test_degenerate_edge(self, stretch, open_env):
        q = np.zeros(5)
        assert not edge_in_collision(open_env, stretch, q, q, 0.05)

    def test_crossing_slab_detected(self, stretch):
        slab = Aabb(np.array([0.0, 0.0, 0.5]), np.array([0.2, 5.0, 0.5]))
        env = Environment(obstacles=(slab,), targets=(make_target((0.0, 8.0, 1.0)),))
        q1 = np.array([-2.0, 0.0, 0.0, 0.0, 0.0])
        q2 = np.array([2.0, 0.0, 0.0, 0.0, 0.0])
        assert not config_in_collision(env, stretch, q1)
        assert not config_in_collision(env, stretch, q2)
        assert edge_in_collision(env, stretch, q1, q2, 0.05)
        # dense sampling oracle agrees
        dense_hit = any(
            config_in_collision(env, stretch, q1 + s * (q2 - q1))
            for s in np.linspace(0, 1, 4001)
        )
        assert dense_hit

    def test_open_scene_edges_free(self, stretch, open_env):
        rng = np.random.default_rng(4)
        for _ in range(20):
            q1 = rng.uniform(stretch.limits_lo, stretch.limits_hi)
            q2 = rng.uniform(stretch.limits_lo, stretch.limits_hi)
            assert not edge_in_collision(open_env, stretch, q1, q2, 0.2)


class TestBatchCollision:
    def test_empty(self, stretch, open_env):
        assert batch_collision(open_env, stretch, []) == []

    def test_equals_sequential(self, stretch, cluttered_env):
        rng = np.random.default_rng(5)
        qs = [rng.uniform(stretch.limits_lo, stretch.limits_hi) for _ in range(1000)]
        batch = batch_collision(cluttered_env, stretch, qs)
        assert batch == [config_in_collision(cluttered_env, stretch, q) for q in qs]

    def test_all_inside(self, stretch):
        env = Environment(
            obstacles=(Aabb(np.zeros(3) + [0, 0, 1.0], np.array([20.0, 20.0, 1.0])),),
            targets=(make_target((0.0, 0.0, 1.0)),),
        )
        rng = np.random.default_rng(6)
        qs = [rng.uniform(stretch.limits_lo, stretch.limits_hi) for _ in range(50)]
        assert all(batch_collision(env, stretch, qs))


class TestScriptedEnvironment:
    def scripted_env(self):
        target = make_target((0.0, 0.0, 1.0), facing=np.array([1.0, 0.0, 0.0]))
        frames = (
            Keyframe(0.0, np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])),
            Keyframe(5.0, np.array([1.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0])),
            Keyframe(10.0, np.array([2.0, 0.0, 1.0]), np.array([-1.0, 0.0, 0.0])),
        )
        return Environment(obstacles=(), targets=(target,), scripts={0: frames})

    def test_time_zero_initial(self):
        env = self.scripted_env()
        snap = env_at_time(env, 0.0)
        assert np.allclose(snap.targets[0].centroid, [0, 0, 1])
        assert np.allclose(snap.targets[0].facing, [1, 0, 0])

    def test_linear_midpoint(self):
        target = make_target((0.0, 0.0, 1.0))
        frames = (Keyframe(0.0, np.array([0.0, 0.0, 1.0])),
                  Keyframe(10.0, np.array([2.0, 0.0, 1.0])))
        env = Environment(obstacles=(), targets=(target,), scripts={0: frames})
        snap = env_at_time(env, 5.0)
        assert np.allclose(snap.targets[0].centroid, [1.0, 0.0, 1.0])
        assert snap.targets[0].box.contains(snap.targets[0].centroid)

    def test_facing_slerp_against_scipy(self):
        env = self.scripted_env()
        # 180 degrees over 10 s through two 90-degree segments; t=2.5 is 45 deg
        snap = env_at_time(env, 2.5)
        expected = np.array([math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0])
        assert np.allclose(snap.targets[0].facing, expected, atol=1e-9)
        # scipy quaternion slerp oracle on the first segment
        rots = Rotation.from_matrix([np.eye(3),
                                     Rotation.from_euler("z", math.pi / 2).as_matrix()])
        oracle = Slerp([0.0, 5.0], rots)(2.5).apply([1.0, 0.0, 0.0])
        assert np.allclose(snap.targets[0].facing, oracle, atol=1e-9)

    def test_holds_beyond_last_keyframe(self):
        env = self.scripted_env()
        snap = env_at_time(env, 99.0)
        assert np.allclose(snap.targets[0].centroid, [2, 0, 1])
        assert np.allclose(snap.targets[0].facing, [-1, 0, 0])

    def test_continuity_bound(self):
        env = self.scripted_env()
        max_speed = 0.2  # 1 m per 5 s segments
        for t in np.linspace(0, 10, 101):
            a = env_at_time(env, float(t)).targets[0].centroid
            b = env_at_time(env, float(t) + 0.01).targets[0].centroid
            assert np.linalg.norm(b - a) <= max_speed * 0.01 + 1e-9

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            env_at_time(self.scripted_env(), -1.0)

    def test_displacement_measure(self):
        env = self.scripted_env()
        snap = env_at_time(env, 5.0)
        assert target_displacement(env, snap) >= 1.0


class TestSlerpUnit:
    def test_endpoints(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        assert np.allclose(slerp_unit(a, b, 0.0), a)
        assert np.allclose(slerp_unit(a, b, 1.0), b)

    def test_unit_norm_along_arc(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=3)
        a /= np.linalg.norm(a)
        b = rng.normal(size=3)
        b /= np.linalg.norm(b)
        for s in np.linspace(0, 1, 11):
            v = slerp_unit(a, b, float(s))
            assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    def test_antipodal_does_not_blow_up(self):
        a = np.array([1.0, 0.0, 0.0])
        v = slerp_unit(a, -a, 0.5)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-9
        assert abs(float(v @ a)) < 1e-9


class TestProblemTypes:
    def test_goal_region_contains(self):
        region = GoalRegion(np.zeros(3), np.ones(3))
        assert region.contains(np.array([0.5, 0.5, 0.5]))
        assert not region.contains(np.array([1.5, 0.5, 0.5]))

    def test_problem_validation(self):
        with pytest.raises(ValueError):
            PlanningProblem(np.zeros(3), goals=(), alpha=0.5)
        with pytest.raises(ValueError):
            PlanningProblem(np.zeros(3), goals=(np.ones(3),), alpha=1.5)

    def test_monitor_point_midpoint_rule(self):
        t1 = make_target((0.0, 0.0, 1.0), label="n1", class_index=0)
        t2 = make_target((2.0, 0.0, 1.0), label="n2", class_index=1)
        env = Environment(obstacles=(), targets=(t1, t2), monitored=(0, 1))
        assert np.allclose(env.monitor_point(), [1.0, 0.0, 1.0])
        assert env.num_classes() == 2
