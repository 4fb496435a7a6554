"""Closed-form test motions: a static body, a straight glide, and two people approaching.

All clips use the rest pose, placed so the lowest sphere surface touches the
ground plus ``height_offset``. Motions are deterministic; ``noise`` adds seeded
Gaussian jitter to the root trajectory.
"""
from __future__ import annotations

import numpy as np

from .bodymodel import SphereBody, sphere_centers
from .kinematics import PoseSequence, Skeleton, axis_angle_to_matrix, matrix_to_rot6d
from .representation import InteractionClip, rep_from_motion

KINDS = ("static", "walk-line", "two-person-approach")


def ground_clearance_offset(s: Skeleton, sb: SphereBody) -> float:
    """Root height that puts the rest-pose body's lowest sphere surface at z = 0."""
    centers, radius = sphere_centers(s.rest_positions(), sb)
    return float(-np.min(centers[:, 2] - radius))


def _pose(s, roots, yaw, fps):
    frames = len(roots)
    rot = PoseSequence.rest(s, frames).local_rotation.copy()
    rot[:, s.root_index] = matrix_to_rot6d(axis_angle_to_matrix(np.array([0.0, 0.0, yaw])))
    return PoseSequence(roots, rot, fps)


def _jitter(roots, noise, rng):
    if noise > 0:
        roots = roots + rng.normal(scale=noise, size=roots.shape)
    return roots


def static(s, sb, frames=10, fps=30.0, height_offset=0.0, noise=0.0, seed=0):
    base = np.array([0.0, 0.0, ground_clearance_offset(s, sb) + height_offset])
    roots = _jitter(np.tile(base, (frames, 1)), noise, np.random.default_rng(seed))
    return [_pose(s, roots, 0.0, fps)]


def walk_line(s, sb, frames=30, fps=20.0, speed=0.012, height_offset=0.0, noise=0.0, seed=0):
    """Rigid glide along +x at ``speed`` meters per frame."""
    roots = np.zeros((frames, 3))
    roots[:, 0] = speed * np.arange(frames)
    roots[:, 2] = ground_clearance_offset(s, sb) + height_offset
    return [_pose(s, _jitter(roots, noise, np.random.default_rng(seed)), 0.0, fps)]


def two_person_approach(s, sb, frames=30, fps=30.0, gap=0.5, start_gap=2.0, height_offset=0.0,
                        noise=0.0, seed=0):
    """Two facing people whose root separation along x shrinks linearly from ``start_gap`` to ``gap``."""
    rng = np.random.default_rng(seed)
    sep = np.linspace(start_gap, gap, frames)
    z = ground_clearance_offset(s, sb) + height_offset
    out = []
    for sign, yaw in ((-1.0, 0.0), (1.0, np.pi)):
        roots = np.zeros((frames, 3))
        roots[:, 0] = sign * sep / 2.0
        roots[:, 2] = z
        out.append(_pose(s, _jitter(roots, noise, rng), yaw, fps))
    return out


def generate(kind, s, sb, **params):
    """Pose sequences (one per person) for a named synthetic motion."""
    table = {"static": static, "walk-line": walk_line, "two-person-approach": two_person_approach}
    if kind not in table:
        raise ValueError(f"unknown synthetic motion {kind!r}; choose from {KINDS}")
    return table[kind](s, sb, **params)


def generate_clip(kind, s, sb, text=None, **params) -> InteractionClip:
    return InteractionClip([rep_from_motion(s, pose) for pose in generate(kind, s, sb, **params)], text)
