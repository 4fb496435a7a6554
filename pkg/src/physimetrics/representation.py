"""The per-person ``[positions | velocities | 6D rotations]`` motion representation.

A frame of the flattened representation is laid out as ``p`` (J*3), ``v``
(J*3), then ``r`` (J*6), joints in skeleton order. With the 22-joint body this
is 66 + 66 + 132 = 264 values.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRotation, ShapeMismatch, TooShort
from .kinematics import PoseSequence, Skeleton, bone_lengths, forward_kinematics

REP_JOINTS = 22
FRAME_WIDTH = REP_JOINTS * 3 + REP_JOINTS * 3 + REP_JOINTS * 6


@dataclass(frozen=True, eq=False)
class MotionRep:
    """Positions ``p`` (T, J, 3) m, velocities ``v`` (T, J, 3) m/frame, rotations ``r`` (T, J, 6)."""

    p: np.ndarray
    v: np.ndarray
    r: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        p, v, r = (np.asarray(x) for x in (self.p, self.v, self.r))
        if p.ndim != 3 or p.shape[2] != 3 or v.shape != p.shape or r.shape != p.shape[:2] + (6,):
            raise ShapeMismatch(f"inconsistent rep shapes p{p.shape} v{v.shape} r{r.shape}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "r", r)

    @property
    def frames(self) -> int:
        return self.p.shape[0]

    @property
    def joints(self) -> int:
        return self.p.shape[1]

    def to_array(self) -> np.ndarray:
        """Flatten to ``(T, 12 * J)``; 264 columns for the 22-joint body."""
        t = self.frames
        return np.concatenate([self.p.reshape(t, -1), self.v.reshape(t, -1), self.r.reshape(t, -1)], axis=1)

    @classmethod
    def from_array(cls, x, fps=30.0) -> "MotionRep":
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] % 12:
            raise ShapeMismatch(f"flattened rep width must be a multiple of 12, got {x.shape}")
        j = x.shape[1] // 12
        t = x.shape[0]
        return cls(x[:, : 3 * j].reshape(t, j, 3), x[:, 3 * j: 6 * j].reshape(t, j, 3),
                   x[:, 6 * j:].reshape(t, j, 6), fps)


@dataclass(frozen=True, eq=False)
class InteractionClip:
    persons: list
    text: str | None = None
    fps: float = field(init=False)

    def __post_init__(self):
        persons = list(self.persons)
        if not persons:
            raise ShapeMismatch("a clip needs at least one person")
        t0, fps0 = persons[0].frames, persons[0].fps
        for i, rep in enumerate(persons):
            if rep.frames != t0 or rep.fps != fps0:
                raise ShapeMismatch(f"person {i} disagrees on frame count or fps")
        object.__setattr__(self, "persons", persons)
        object.__setattr__(self, "fps", fps0)

    @property
    def frames(self) -> int:
        return self.persons[0].frames


def compute_velocity(p) -> np.ndarray:
    """Forward differences ``p[t+1] - p[t]``; the last frame repeats the final difference."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[0] < 2:
        raise TooShort("velocity needs at least 2 frames")
    v = np.empty_like(p)
    v[:-1] = p[1:] - p[:-1]
    v[-1] = v[-2]
    return v


def assemble_rep(p, v, r, fps=30.0) -> MotionRep:
    p, v, r = np.asarray(p), np.asarray(v), np.asarray(r)
    if p.ndim != 3 or p.shape[1:] != (REP_JOINTS, 3):
        raise ShapeMismatch(f"positions must be (T, {REP_JOINTS}, 3), got {p.shape}")
    if v.shape != p.shape:
        raise ShapeMismatch(f"velocities {v.shape} do not match positions {p.shape}")
    if r.shape != p.shape[:2] + (6,):
        raise ShapeMismatch(f"rotations must be (T, {REP_JOINTS}, 6), got {r.shape}")
    return MotionRep(p, v, r, fps)


def split_rep(rep: MotionRep):
    return rep.p, rep.v, rep.r


def rep_from_motion(s: Skeleton, pose: PoseSequence) -> MotionRep:
    p = forward_kinematics(s, pose)
    return MotionRep(p, compute_velocity(p), pose.local_rotation.copy(), pose.fps)


def rep_fk_positions(rep: MotionRep, s: Skeleton) -> np.ndarray:
    """Positions implied by the rotation component, rooted at the rep's own root joint."""
    pose = PoseSequence(rep.p[:, s.root_index], rep.r, rep.fps)
    return forward_kinematics(s, pose)


def pos_rot_mpjpe(rep: MotionRep, s: Skeleton) -> float:
    """Mean distance (mm) between the position component and FK of the rotation component."""
    fk = rep_fk_positions(rep, s)
    return float(np.mean(np.linalg.norm(rep.p - fk, axis=-1)) * 1000.0)


@dataclass(frozen=True)
class RepTolerances:
    velocity_residual: float = 1e-6   # mean squared velocity mismatch, m^2
    mpjpe_mm: float = 1.0
    bone_length: float = 1e-3         # max absolute bone length deviation, m


@dataclass(frozen=True)
class Violation:
    kind: str        # finiteness | shape | velocity | mpjpe | bone_length | rotation
    component: str
    value: float
    message: str


def velocity_residual(rep: MotionRep) -> float:
    """Mean over frames/joints of ``|v[t] - (p[t+1] - p[t])|^2`` for the first T-1 frames."""
    d = rep.v[:-1] - (rep.p[1:] - rep.p[:-1])
    return float(np.mean(np.sum(d**2, axis=-1)))


def validate_rep(rep: MotionRep, s: Skeleton, tolerances: RepTolerances | None = None) -> list:
    tol = tolerances or RepTolerances()
    out = []
    if rep.joints != s.joint_count:
        out.append(Violation("shape", "rep", float(rep.joints),
                             f"rep has {rep.joints} joints, skeleton has {s.joint_count}"))
        return out
    if rep.frames < 2:
        out.append(Violation("shape", "rep", float(rep.frames), "rep needs at least 2 frames"))
    finite = True
    for name in ("p", "v", "r"):
        bad = int(np.count_nonzero(~np.isfinite(getattr(rep, name))))
        if bad:
            finite = False
            out.append(Violation("finiteness", name, float(bad), f"{bad} non-finite values in {name}"))
    if not finite or rep.frames < 2:
        return out

    res = velocity_residual(rep)
    if res > tol.velocity_residual:
        out.append(Violation("velocity", "v", res, f"velocity-consistency residual {res:.6g} m^2"))
    try:
        mpjpe = pos_rot_mpjpe(rep, s)
    except DegenerateRotation as exc:
        out.append(Violation("rotation", "r", float("nan"), str(exc)))
    else:
        if mpjpe > tol.mpjpe_mm:
            out.append(Violation("mpjpe", "r", mpjpe, f"pos/rot MPJPE {mpjpe:.4g} mm"))
    dev = float(np.max(np.abs(bone_lengths(s, rep.p) - np.linalg.norm(s.rest_offset[s.bones], axis=-1))))
    if dev > tol.bone_length:
        out.append(Violation("bone_length", "p", dev, f"bone length deviates by {dev:.4g} m"))
    return out
