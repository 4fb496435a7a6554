import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from physimetrics.bodymodel import load_body_config
from physimetrics.kinematics import PoseSequence, Skeleton, default_skeleton, matrix_to_rot6d

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


@pytest.fixture(scope="session")
def body(skeleton):
    return load_body_config(None, skeleton)


@pytest.fixture(scope="session")
def spheres(body):
    return body[1]


@pytest.fixture
def chain():
    """Three joints in a line along x, unit bones."""
    return Skeleton([-1, 0, 1], [[0, 0, 0], [1, 0, 0], [1, 0, 0]], ["root", "mid", "tip"],
                    root_index=0, left_foot_index=2, right_foot_index=2)


def random_rot6d(rng, shape, max_angle=np.pi / 4):
    """6D rotations with uniformly random axes and angles in [0, max_angle]."""
    n = int(np.prod(shape))
    axis = rng.normal(size=(n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    angle = rng.uniform(0, max_angle, size=(n, 1))
    m = Rotation.from_rotvec(axis * angle).as_matrix()
    return matrix_to_rot6d(m).reshape(tuple(shape) + (6,))


def random_pose_sequence(rng, skeleton, frames=30, max_angle=np.pi / 4, fps=30.0):
    """Smooth sequence: per-joint rotations interpolated between two random rotations of bounded angle."""
    j = skeleton.joint_count
    axes = rng.normal(size=(2, j, 3))
    axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
    rotvec = axes * rng.uniform(0, max_angle, size=(2, j, 1))
    w = np.linspace(0, 1, frames)[:, None, None]
    rv = (1 - w) * rotvec[0] + w * rotvec[1]      # |rv| <= max_angle by convexity
    rot = matrix_to_rot6d(Rotation.from_rotvec(rv.reshape(-1, 3)).as_matrix()).reshape(frames, j, 6)
    root = np.cumsum(rng.normal(scale=0.01, size=(frames, 3)), axis=0) + [0, 0, 0.9]
    return PoseSequence(root, rot, fps)


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
