import math

import numpy as np
import pytest

from psprm.geom import (Aabb, CameraIntrinsics, Frustum, Ray, RigidTransform,
                        frustum_contains, frustum_signed_distance,
                        point_to_optical_axis_distance, ray_aabb_hit,
                        rotation_about_axis)


def random_transform(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return RigidTransform(rotation_about_axis(axis, rng.uniform(-np.pi, np.pi)),
                          rng.normal(scale=2.0, size=3))


def marching_entry(ray, box, step=1e-3, t_max=None):
    """Brute-force oracle: first sampled point on/in the box along the ray."""
    if t_max is None:
        t_max = float(np.linalg.norm(box.center - ray.origin)
                      + np.linalg.norm(box.half_extents) + 1.0)
    ts = np.arange(0.0, t_max, step)
    pts = ray.origin + ts[:, None] * ray.direction
    inside = np.all(np.abs(pts - box.center) <= box.half_extents + 1e-12, axis=1)
    hits = np.flatnonzero(inside)
    return float(ts[hits[0]]) if len(hits) else None


class TestRigidTransform:
    def test_identity_roundtrip(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            t = random_transform(rng)
            back = t.compose(t.inverse())
            assert np.allclose(back.rotation, np.eye(3), atol=1e-9)
            assert np.allclose(back.translation, 0.0, atol=1e-9)

    def test_composition_associative(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            a, b, c = (random_transform(rng) for _ in range(3))
            left = a.compose(b).compose(c)
            right = a.compose(b.compose(c))
            assert np.allclose(left.rotation, right.rotation, atol=1e-12)
            assert np.allclose(left.translation, right.translation, atol=1e-12)

    def test_rotation_stays_orthonormal(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            t = random_transform(rng)
            assert t.is_valid()
            assert abs(np.linalg.det(t.rotation) - 1.0) < 1e-9

    def test_apply_points_matches_single(self):
        rng = np.random.default_rng(4)
        t = random_transform(rng)
        pts = rng.normal(size=(10, 3))
        many = t.apply(pts)
        for p, m in zip(pts, many):
            assert np.allclose(t.apply(p), m, atol=1e-12)


class TestRayAabb:
    def test_axis_aligned_hit(self):
        ray = Ray(np.zeros(3), np.array([1.0, 0.0, 0.0]))
        box = Aabb(np.array([5.0, 0.0, 0.0]), np.ones(3))
        assert ray_aabb_hit(ray, box) == pytest.approx(4.0)

    def test_pointing_away_misses(self):
        ray = Ray(np.zeros(3), np.array([-1.0, 0.0, 0.0]))
        box = Aabb(np.array([5.0, 0.0, 0.0]), np.ones(3))
        assert ray_aabb_hit(ray, box) is None

    def test_origin_inside_hits_at_zero(self):
        ray = Ray(np.array([5.0, 0.2, -0.3]), np.array([0.0, 1.0, 0.0]))
        box = Aabb(np.array([5.0, 0.0, 0.0]), np.ones(3))
        assert ray_aabb_hit(ray, box) == pytest.approx(0.0)

    def test_diagonal_matches_marching_oracle(self):
        d = np.array([1.0, 1.0, 0.3])
        d /= np.linalg.norm(d)
        ray = Ray(np.zeros(3), d)
        box = Aabb(np.array([4.0, 4.0, 1.0]), np.full(3, 0.5))
        t = ray_aabb_hit(ray, box)
        oracle = marching_entry(ray, box, step=1e-4)
        assert t is not None and oracle is not None
        assert abs(t - oracle) < 1e-3

    def test_parallel_ray_outside_slab(self):
        ray = Ray(np.array([0.0, 5.0, 0.0]), np.array([1.0, 0.0, 0.0]))
        box = Aabb(np.array([5.0, 0.0, 0.0]), np.ones(3))
        assert ray_aabb_hit(ray, box) is None

    def test_random_pairs_agree_with_marching(self):
        rng = np.random.default_rng(7)
        mismatches = 0
        for _ in range(800):
            origin = rng.uniform(-3, 3, size=3)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            box = Aabb(rng.uniform(-3, 3, size=3), rng.uniform(0.2, 1.5, size=3))
            got = ray_aabb_hit(Ray(origin, direction), box)
            want = marching_entry(Ray(origin, direction), box)
            if (got is None) != (want is None):
                mismatches += 1
            elif got is not None and abs(got - want) > 1e-3:
                mismatches += 1
        assert mismatches == 0


def default_frustum(apex=(0.0, 0.0, 0.0)):
    return Frustum(np.asarray(apex, dtype=float),
                   np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]),
                   np.array([0.0, -1.0, 0.0]),
                   vertical_fov=math.radians(42.5), aspect=640 / 480,
                   near=0.3, far=6.0)


def contains_by_angles(f, p):
    """Independent containment oracle via explicit angle and range checks."""
    v = np.asarray(p, dtype=float) - f.apex
    x = float(v @ f.forward)
    if not f.near <= x <= f.far:
        return False
    if x <= 0:
        return False
    up = float(v @ f.up)
    right = float(v @ f.right)
    half_v = 0.5 * f.vertical_fov
    half_h = math.atan(f.aspect * math.tan(half_v))
    return abs(math.atan2(up, x)) <= half_v and abs(math.atan2(right, x)) <= half_h


class TestFrustum:
    def test_near_plane_center_is_boundary(self):
        f = default_frustum()
        p = f.apex + f.near * f.forward
        assert abs(frustum_signed_distance(f, p)) < 1e-9

    def test_deep_interior_negative(self):
        f = default_frustum()
        p = f.apex + 0.5 * (f.near + f.far) * f.forward
        assert frustum_signed_distance(f, p) < 0

    def test_behind_apex_positive(self):
        f = default_frustum()
        assert frustum_signed_distance(f, f.apex - 1.0 * f.forward) > 0

    def test_sign_matches_angle_oracle(self):
        f = default_frustum(apex=(0.5, -0.2, 1.0))
        rng = np.random.default_rng(11)
        strict_disagreements = 0
        for _ in range(1000):
            p = rng.uniform(-2, 8, size=3)
            sd = frustum_signed_distance(f, p)
            if abs(sd) < 1e-9:
                continue
            if (sd < 0) != contains_by_angles(f, p):
                strict_disagreements += 1
        assert strict_disagreements == 0

    def test_from_pose_camera_convention(self, wide_camera):
        pose = RigidTransform(rotation_about_axis(np.array([0, 0, 1.0]), math.pi / 2),
                              np.array([1.0, 2.0, 1.0]))
        f = Frustum.from_pose(pose, wide_camera)
        assert np.allclose(f.forward, [0, 1, 0], atol=1e-12)
        assert np.allclose(f.up, [0, 0, 1], atol=1e-12)
        assert frustum_contains(f, pose.translation + np.array([0.0, 2.0, 0.0]))

    def test_invalid_near_far(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(1.0, 1.0, 2.0, 1.0)


class TestOpticalAxisDistance:
    def test_on_axis(self):
        f = default_frustum()
        assert point_to_optical_axis_distance(f, f.apex + 2.0 * f.forward) == pytest.approx(0.0)

    def test_perpendicular_offset(self):
        f = default_frustum()
        p = f.apex + 2.0 * f.forward + 0.5 * f.up
        assert point_to_optical_axis_distance(f, p) == pytest.approx(0.5)

    def test_behind_apex_penalty(self):
        f = default_frustum()
        p = f.apex - 3.0 * f.forward
        assert point_to_optical_axis_distance(f, p) == pytest.approx(3.0)

    def test_rigid_invariance(self):
        rng = np.random.default_rng(13)
        f = default_frustum(apex=(0.2, 0.4, 1.1))
        for _ in range(100):
            p = rng.uniform(-4, 4, size=3)
            base = point_to_optical_axis_distance(f, p)
            g = random_transform(rng)
            moved = Frustum(g.apply(f.apex), g.apply_direction(f.forward),
                            g.apply_direction(f.up), g.apply_direction(f.right),
                            f.vertical_fov, f.aspect, f.near, f.far)
            assert abs(point_to_optical_axis_distance(moved, g.apply(p)) - base) < 1e-9


class TestAabb:
    def test_contains_center(self):
        box = Aabb(np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.5, 0.5]))
        assert box.contains(box.center)
        assert np.all(box.min_corner <= box.max_corner)

    def test_corners_lexicographic(self):
        box = Aabb(np.zeros(3), np.ones(3))
        corners = box.corners()
        as_tuples = [tuple(c) for c in corners]
        assert as_tuples == sorted(as_tuples)

    def test_positive_half_extents_required(self):
        with pytest.raises(ValueError):
            Aabb(np.zeros(3), np.array([1.0, 0.0, 1.0]))

    def test_ray_direction_must_be_unit(self):
        with pytest.raises(ValueError):
            Ray(np.zeros(3), np.array([1.0, 1.0, 0.0]))
