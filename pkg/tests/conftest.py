import math

import numpy as np
import pytest

from psprm.geom import Aabb, CameraIntrinsics
from psprm.robot import preset
from psprm.world import Environment, TargetObject


@pytest.fixture(scope="session")
def stretch():
    return preset("stretch_like")


@pytest.fixture(scope="session")
def wide_camera():
    return CameraIntrinsics(vertical_fov=math.radians(42.5), aspect=640 / 480,
                            near=0.3, far=6.0)


def make_target(centroid, half=(0.15, 0.15, 0.15), label="cup", class_index=0,
                facing=None):
    centroid = np.asarray(centroid, dtype=float)
    return TargetObject(label=label, centroid=centroid,
                        box=Aabb(centroid, np.asarray(half, dtype=float)),
                        class_index=class_index, facing=facing)


@pytest.fixture(scope="session")
def open_env():
    """Obstacle-free room with a single target at head height."""
    return Environment(obstacles=(), targets=(make_target((2.0, 1.0, 1.2)),))


@pytest.fixture(scope="session")
def cluttered_env():
    """One target plus a blocking slab between the left half-space and the target."""
    return Environment(
        obstacles=(
            Aabb(np.array([0.0, 1.0, 0.75]), np.array([0.3, 1.2, 0.75])),
            Aabb(np.array([3.0, -2.0, 0.5]), np.array([0.8, 0.5, 0.5])),
        ),
        targets=(make_target((2.0, 1.0, 1.2)),),
    )
