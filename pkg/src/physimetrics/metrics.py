"""Physical plausibility metrics on joint trajectories, plus FID* on raw joint positions.

Ground metrics use the sphere body: the lowest body point of a frame is the
lowest sphere surface point. The ground is the plane ``z = height``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .bodymodel import SphereBody, sphere_centers
from .errors import RankDeficient, ShapeMismatch, SinglePerson, TooShort
from .kinematics import Skeleton
from .representation import InteractionClip, pos_rot_mpjpe

FID_EPS = 1e-10
EIG_TOL = 1e-8
PFC_SCALE = 100.0


@dataclass(frozen=True)
class GroundPlane:
    height: float = 0.0
    up_axis: str = "z"

    def __post_init__(self):
        if not math.isfinite(self.height):
            raise ValueError("ground height must be finite")
        if self.up_axis != "z":
            raise ValueError("the canonical up axis is z")


@dataclass
class MetricsReport:
    penetration_mm: float = 0.0
    float_mm: float = 0.0
    foot_contact_mm: float = 0.0
    skate_cm_s: float = 0.0
    pfc: float = 0.0
    interpenetration_cm3: float | None = None
    mpjpe_mm: float | None = None
    fid_star: float | None = None
    frames: int = 0
    persons: int = 0
    clips: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _check_positions(positions):
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 3 or positions.shape[-1] != 3:
        raise ShapeMismatch(f"positions must be (T, J, 3), got {positions.shape}")
    return positions


def lowest_point(positions, sb: SphereBody, g: GroundPlane) -> np.ndarray:
    """Per-frame height (m) of the lowest sphere surface point above the ground."""
    centers, radius = sphere_centers(_check_positions(positions), sb)
    return np.min(centers[..., 2] - radius, axis=-1) - g.height


def ground_contact_metrics(positions, sb: SphereBody, g: GroundPlane | None = None):
    """``(penetration_mm, float_mm, foot_contact_mm)`` averaged over frames."""
    g = g or GroundPlane()
    z_min = lowest_point(positions, sb, g)
    penetration = float(np.mean(np.maximum(0.0, -z_min)) * 1000.0)
    floating = float(np.mean(np.maximum(0.0, z_min)) * 1000.0)
    return penetration, floating, penetration + floating


def skate(positions, sb: SphereBody, g: GroundPlane | None = None, fps=30.0, contact_eps=0.005) -> float:
    """Mean horizontal speed (cm/s) of spheres touching or below the ground.

    Contact is tested at frame t and the speed is taken over the step t -> t+1.
    """
    g = g or GroundPlane()
    positions = _check_positions(positions)
    if positions.shape[0] < 2:
        raise TooShort("skate needs at least 2 frames")
    centers, radius = sphere_centers(positions, sb)
    contact = (centers[:-1, :, 2] - radius) <= g.height + contact_eps
    if not np.any(contact):
        return 0.0
    step = np.linalg.norm(centers[1:, :, :2] - centers[:-1, :, :2], axis=-1)
    return float(np.mean(step[contact]) * fps * 100.0)


def pfc(positions, s: Skeleton, fps=30.0) -> float:
    """Mean per-frame product of both horizontal foot speeds and root acceleration, x100.

    Speeds (m/s) and acceleration (m/s^2) use central differences, so the first
    and last frames are dropped.
    """
    positions = _check_positions(positions)
    if positions.shape[0] < 3:
        raise TooShort("PFC needs at least 3 frames")
    vel = (positions[2:] - positions[:-2]) * (fps / 2.0)
    acc = (positions[2:] - 2.0 * positions[1:-1] + positions[:-2]) * fps**2
    left = np.linalg.norm(vel[:, s.left_foot_index, :2], axis=-1)
    right = np.linalg.norm(vel[:, s.right_foot_index, :2], axis=-1)
    root = np.linalg.norm(acc[:, s.root_index], axis=-1)
    return float(np.mean(left * right * root) * PFC_SCALE)


def sphere_overlap_volume(c1, r1, c2, r2):
    """Intersection volume (m^3) of two spheres; broadcasts over leading axes."""
    c1, c2 = np.asarray(c1, dtype=np.float64), np.asarray(c2, dtype=np.float64)
    r1, r2 = np.asarray(r1, dtype=np.float64), np.asarray(r2, dtype=np.float64)
    d = np.linalg.norm(c1 - c2, axis=-1)
    return _overlap_from_distance(d, r1, r2)


def _overlap_from_distance(d, r1, r2):
    d, r1, r2 = np.broadcast_arrays(d, r1, r2)
    out = np.zeros(d.shape)
    inside = d <= np.abs(r1 - r2)
    lens = (d < r1 + r2) & ~inside
    rmin = np.minimum(r1, r2)
    out[inside] = 4.0 / 3.0 * np.pi * rmin[inside] ** 3
    dl, a, b = d[lens], r1[lens], r2[lens]
    out[lens] = np.pi * (a + b - dl) ** 2 * (dl**2 + 2 * dl * (a + b) - 3 * (a - b) ** 2) / (12 * dl)
    return out[()] if out.ndim == 0 else out


def _interpenetration_positions(per_person, sb: SphereBody) -> float:
    centers = [sphere_centers(p, sb)[0] for p in per_person]
    radius = sb.radius
    total = np.zeros(centers[0].shape[0])
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            d = np.linalg.norm(centers[i][:, :, None, :] - centers[j][:, None, :, :], axis=-1)
            vol = _overlap_from_distance(d, radius[:, None], radius[None, :])
            total += vol.sum(axis=(1, 2))
    return float(np.mean(total) * 1e6)


def interpenetration(clip, sb: SphereBody) -> float:
    """Mean over frames of summed cross-person sphere overlap, in cm^3.

    Accepts an ``InteractionClip`` or a sequence of ``(T, J, 3)`` position arrays.
    """
    per_person = [rep.p for rep in clip.persons] if isinstance(clip, InteractionClip) else list(clip)
    if len(per_person) < 2:
        raise SinglePerson("interpenetration needs at least two persons")
    return _interpenetration_positions(per_person, sb)


def frechet_distance(mu1, sigma1, mu2, sigma2) -> float:
    """Frechet distance between two Gaussians.

    The cross term uses the symmetric form sqrt(S1) S2 sqrt(S1), whose
    eigenvalues are those of S1 S2.
    """
    mu1, mu2 = np.atleast_1d(mu1).astype(np.float64), np.atleast_1d(mu2).astype(np.float64)
    sigma1 = np.atleast_2d(sigma1).astype(np.float64)
    sigma2 = np.atleast_2d(sigma2).astype(np.float64)
    if mu1.shape != mu2.shape or sigma1.shape != sigma2.shape or sigma1.shape != mu1.shape * 2:
        raise ShapeMismatch("means and covariances disagree in dimension")

    def attempt(s1, s2):
        w, vec = np.linalg.eigh((s1 + s1.T) / 2)
        if w.min() < -EIG_TOL:
            raise RankDeficient(f"covariance has eigenvalue {w.min():.3g}")
        root1 = (vec * np.sqrt(np.clip(w, 0.0, None))) @ vec.T
        mid = root1 @ s2 @ root1
        lam = np.linalg.eigvalsh((mid + mid.T) / 2)
        if lam.min() < -EIG_TOL:
            raise RankDeficient(f"product covariance has eigenvalue {lam.min():.3g}")
        return np.trace(s1) + np.trace(s2) - 2.0 * np.sum(np.sqrt(np.clip(lam, 0.0, None)))

    diff = mu1 - mu2
    try:
        cross = attempt(sigma1, sigma2)
    except (np.linalg.LinAlgError, RankDeficient):
        cross = np.nan
    if not np.isfinite(cross):
        eps = FID_EPS * np.eye(len(mu1))
        try:
            cross = attempt(sigma1 + eps, sigma2 + eps)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient(str(exc)) from None
        if not np.isfinite(cross):
            raise RankDeficient("Frechet distance is not finite even after regularization")
    return float(diff @ diff + cross)


def fid_star(set_a, set_b, root_centered=False, root_index=0) -> float:
    """FID* between two sets of pose frames, each ``(frames, J*3)`` or ``(frames, J, 3)``."""
    feats = []
    for x in (set_a, set_b):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            if root_centered:
                x = x - x[:, root_index: root_index + 1]
            x = x.reshape(len(x), -1)
        elif root_centered:
            y = x.reshape(len(x), -1, 3)
            x = (y - y[:, root_index: root_index + 1]).reshape(len(x), -1)
        if x.ndim != 2 or len(x) < 2:
            raise ShapeMismatch(f"feature set must be (frames>=2, dims), got {x.shape}")
        feats.append(x)
    a, b = feats
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch("feature sets disagree in dimension")
    return frechet_distance(a.mean(0), np.cov(a, rowvar=False), b.mean(0), np.cov(b, rowvar=False))


def evaluate_positions(per_person, s: Skeleton, sb: SphereBody, g: GroundPlane | None = None,
                       fps=30.0, contact_eps=0.005) -> MetricsReport:
    """Metrics for one clip given per-person ``(T, J, 3)`` joint positions."""
    g = g or GroundPlane()
    per_person = [_check_positions(p) for p in per_person]
    if not per_person:
        raise ShapeMismatch("clip has no persons")
    pen, flo, fc, sk, pf = [], [], [], [], []
    for p in per_person:
        a, b, c = ground_contact_metrics(p, sb, g)
        pen.append(a)
        flo.append(b)
        fc.append(c)
        sk.append(skate(p, sb, g, fps, contact_eps))
        pf.append(pfc(p, s, fps))
    report = MetricsReport(
        penetration_mm=float(np.mean(pen)),
        float_mm=float(np.mean(flo)),
        foot_contact_mm=float(np.mean(fc)),
        skate_cm_s=float(np.mean(sk)),
        pfc=float(np.mean(pf)),
        frames=int(per_person[0].shape[0]),
        persons=len(per_person),
    )
    if len(per_person) >= 2:
        report.interpenetration_cm3 = _interpenetration_positions(per_person, sb)
    return report


def evaluate_clip(clip: InteractionClip, s: Skeleton, sb: SphereBody, g: GroundPlane | None = None,
                  fps=None, contact_eps=0.005) -> MetricsReport:
    fps = clip.fps if fps is None else fps
    report = evaluate_positions([rep.p for rep in clip.persons], s, sb, g, fps, contact_eps)
    report.mpjpe_mm = float(np.mean([pos_rot_mpjpe(rep, s) for rep in clip.persons]))
    return report


def aggregate_reports(reports) -> MetricsReport:
    """Dataset-level means in input order; optional fields average over clips that have them."""
    reports = list(reports)
    if not reports:
        raise ShapeMismatch("nothing to aggregate")
    out = MetricsReport(clips=len(reports))
    for name in ("penetration_mm", "float_mm", "foot_contact_mm", "skate_cm_s", "pfc"):
        setattr(out, name, float(np.mean([getattr(r, name) for r in reports])))
    for name in ("interpenetration_cm3", "mpjpe_mm"):
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        setattr(out, name, float(np.mean(vals)) if vals else None)
    out.frames = int(sum(r.frames for r in reports))
    out.persons = int(sum(r.persons for r in reports))
    return out
