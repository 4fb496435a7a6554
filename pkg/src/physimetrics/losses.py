"""Training losses as plain scalar functions of numpy arrays.

Every term reduces by the mean over the elements it covers; masked-out
entries stay in the denominator. Masks are hard thresholds, so the losses are
only differentiable away from them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, ShapeMismatch
from .kinematics import Skeleton, bone_lengths, rot6d_to_matrix
from .representation import InteractionClip, MotionRep, rep_fk_positions


@dataclass(frozen=True)
class LossConfig:
    mc_mode: str = "gt_anchored"          # or "internal"
    mi_contact_threshold: float = 0.1     # m
    mi_range_threshold: float = 1.0       # m
    mi_range_mask: str = "pred"           # which distance map gates the alignment term
    foot_height_threshold: float = 0.05   # m
    ground_height: float = 0.0

    def __post_init__(self):
        if self.mc_mode not in ("gt_anchored", "internal"):
            raise InvariantViolation(f"unknown mc_mode {self.mc_mode!r}")
        if self.mi_range_mask not in ("pred", "gt"):
            raise InvariantViolation(f"unknown mi_range_mask {self.mi_range_mask!r}")
        for name in ("mi_contact_threshold", "mi_range_threshold", "foot_height_threshold"):
            if not getattr(self, name) > 0:
                raise InvariantViolation(f"{name} must be positive")
        if not self.mi_contact_threshold < self.mi_range_threshold:
            raise InvariantViolation("contact threshold must be below the range threshold")

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvariantViolation(f"unknown loss config keys: {sorted(extra)}")
        return cls(**d)


def _same_shape(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ShapeMismatch(f"shape {np.shape(a)} does not match {shape}")


def simple_loss(pred: MotionRep, gt: MotionRep) -> float:
    """Reconstruction MSE over every element of the flattened representation."""
    a, b = pred.to_array(), gt.to_array()
    _same_shape(a, b)
    return float(np.mean((a - b) ** 2))


def mc_loss(pred: MotionRep, gt: MotionRep, s: Skeleton, cfg: LossConfig | None = None) -> float:
    """Velocity/position consistency plus position/FK(rotation) consistency.

    ``gt_anchored`` compares gt velocities against differenced predicted
    positions and gt positions against FK of predicted rotations; ``internal``
    uses the prediction's own velocities and positions for both. FK is rooted
    at the predicted root joint position.
    """
    cfg = cfg or LossConfig()
    _same_shape(pred.p, gt.p)
    _same_shape(pred.r, gt.r)
    anchor = gt if cfg.mc_mode == "gt_anchored" else pred
    diff = pred.p[1:] - pred.p[:-1]
    vel_term = np.mean((anchor.v[:-1] - diff) ** 2)
    pos_term = np.mean((anchor.p - rep_fk_positions(pred, s)) ** 2)
    return float(vel_term + pos_term)


def distance_map(ma, mb) -> np.ndarray:
    """Per-frame pairwise distances ``(T, Ka, Kb)`` between two marker sets."""
    d = np.asarray(ma, dtype=np.float64)[:, :, None, :] - np.asarray(mb, dtype=np.float64)[:, None, :, :]
    return np.sqrt(np.sum(d * d, axis=-1))


def mi_loss(pred_a, pred_b, gt_a, gt_b, cfg: LossConfig | None = None) -> float:
    """Marker interaction loss on inter-person marker distance maps."""
    cfg = cfg or LossConfig()
    _same_shape(pred_a, gt_a)
    _same_shape(pred_b, gt_b)
    if np.shape(pred_a)[0] != np.shape(pred_b)[0]:
        raise ShapeMismatch("persons disagree on frame count")
    m_pred = distance_map(pred_a, pred_b)
    m_gt = distance_map(gt_a, gt_b)
    contact = m_gt < cfg.mi_contact_threshold
    in_range = (m_pred if cfg.mi_range_mask == "pred" else m_gt) < cfg.mi_range_threshold
    term1 = np.mean((m_pred * contact) ** 2)
    term2 = np.mean(((m_pred - m_gt) * in_range) ** 2)
    return float(term1 + term2)


def velocity_loss(pred: MotionRep, gt: MotionRep) -> float:
    _same_shape(pred.v, gt.v)
    return float(np.mean((pred.v - gt.v) ** 2))


def foot_contact_loss(pred: MotionRep, gt: MotionRep, s: Skeleton, cfg: LossConfig | None = None) -> float:
    """Mean squared predicted foot velocity over (frame, foot) pairs where the gt foot is grounded."""
    cfg = cfg or LossConfig()
    _same_shape(pred.v, gt.v)
    feet = [s.left_foot_index, s.right_foot_index]
    height = gt.p[:, feet, 2] - cfg.ground_height
    contact = height < cfg.foot_height_threshold
    if not np.any(contact):
        return 0.0
    v = pred.v[:, feet, :][contact]
    return float(np.mean(v ** 2))


def bone_length_loss(pred_p, gt_p, s: Skeleton) -> float:
    _same_shape(pred_p, gt_p)
    return float(np.mean((bone_lengths(s, pred_p) - bone_lengths(s, gt_p)) ** 2))


def facing_angle(rep: MotionRep, root_index: int = 0) -> np.ndarray:
    """Per-frame yaw (radians) of the root rotation about the vertical axis."""
    m = rot6d_to_matrix(rep.r[:, root_index])
    return np.arctan2(m[:, 1, 0], m[:, 0, 0])


def wrap_angle(x):
    """Wrap angles into (-pi, pi]."""
    x = np.asarray(x, dtype=np.float64)
    w = np.mod(x + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def relative_orientation_loss(pred: InteractionClip, gt: InteractionClip, root_index: int = 0) -> float:
    if len(pred.persons) != 2 or len(gt.persons) != 2:
        raise ShapeMismatch("relative orientation needs exactly two persons per clip")
    if pred.frames != gt.frames:
        raise ShapeMismatch("clips disagree on frame count")

    def relative(clip):
        a, b = clip.persons
        return wrap_angle(facing_angle(a, root_index) - facing_angle(b, root_index))

    return float(np.mean(wrap_angle(relative(pred) - relative(gt)) ** 2))


def finite_diff_grad(loss_fn, x, step=1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = loss_fn(x)
        flat[i] = orig - step
        lo = loss_fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad
