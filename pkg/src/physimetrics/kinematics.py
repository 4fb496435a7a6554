"""Skeletons, 6D rotations, forward kinematics and position-based IK fitting.

Conventions: rotation matrices act on column vectors, a 6D rotation is stored
as the flat 6-vector ``(a, b)`` holding the first two matrix columns, and the
global rotation of a joint is ``G[parent] @ R[joint]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DegenerateRotation, InvariantViolation, NonFinite, NotARotation, ParseError, ShapeMismatch

DEGENERATE_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Joint tree with rest offsets (meters, offset from parent in the rest pose).

    ``parent[root_index]`` is -1.
    """

    parent: np.ndarray
    rest_offset: np.ndarray
    joint_names: tuple
    root_index: int = 0
    left_foot_index: int = 0
    right_foot_index: int = 0
    order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64)
        offset = np.asarray(self.rest_offset, dtype=np.float64)
        n = len(parent)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "rest_offset", offset)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        if offset.shape != (n, 3) or len(self.joint_names) != n:
            raise InvariantViolation(f"skeleton arrays disagree on joint count {n}")
        for name, idx in (("root", self.root_index), ("left_foot", self.left_foot_index),
                          ("right_foot", self.right_foot_index)):
            if not 0 <= idx < n:
                raise InvariantViolation(f"{name} index {idx} is not a valid joint")
        roots = np.flatnonzero(parent < 0)
        if roots.tolist() != [self.root_index]:
            raise InvariantViolation(f"expected exactly one root at {self.root_index}, found {roots.tolist()}")
        if np.any(parent >= n):
            raise InvariantViolation("parent index out of range")
        # topological order; a cycle leaves joints unvisited
        children = [[] for _ in range(n)]
        for j, p in enumerate(parent):
            if p >= 0:
                children[p].append(j)
        order = [self.root_index]
        for j in order:
            order.extend(children[j])
        if len(order) != n:
            raise InvariantViolation("parent table contains a cycle")
        norms = np.linalg.norm(offset, axis=1)
        bad = [j for j in range(n) if j != self.root_index and not norms[j] > 0]
        if bad:
            raise InvariantViolation(f"non-root joints with zero rest offset: {[self.joint_names[j] for j in bad]}")
        object.__setattr__(self, "order", np.array(order, dtype=np.int64))

    @property
    def joint_count(self) -> int:
        return len(self.parent)

    @property
    def bones(self) -> np.ndarray:
        """Child joint index of every bone, in joint order (root excluded)."""
        return np.array([j for j in range(self.joint_count) if j != self.root_index], dtype=np.int64)

    def index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise KeyError(f"unknown joint {name!r}") from None

    def ancestors(self) -> np.ndarray:
        """Boolean matrix ``anc[j, k]``: joint j is a strict ancestor of joint k."""
        n = self.joint_count
        anc = np.zeros((n, n), dtype=bool)
        for k in self.order:
            p = self.parent[k]
            if p >= 0:
                anc[:, k] = anc[:, p]
                anc[p, k] = True
        return anc

    def rest_positions(self) -> np.ndarray:
        pos = np.zeros((self.joint_count, 3))
        for j in self.order[1:]:
            pos[j] = pos[self.parent[j]] + self.rest_offset[j]
        return pos

    def to_dict(self) -> dict:
        names = self.joint_names
        return {
            "joints": [
                {"name": names[j],
                 "parent": None if self.parent[j] < 0 else names[self.parent[j]],
                 "offset": [float(x) for x in self.rest_offset[j]]}
                for j in range(self.joint_count)
            ],
            "root": names[self.root_index],
            "left_foot": names[self.left_foot_index],
            "right_foot": names[self.right_foot_index],
        }


def skeleton_from_dict(cfg: dict) -> Skeleton:
    joints = cfg["joints"]
    names = [j["name"] for j in joints]
    lookup = {n: i for i, n in enumerate(names)}

    def resolve(ref):
        if ref is None:
            return -1
        if isinstance(ref, int):
            return ref
        if ref not in lookup:
            raise InvariantViolation(f"unknown joint reference {ref!r}")
        return lookup[ref]

    parent = [resolve(j["parent"]) for j in joints]
    offset = [j["offset"] for j in joints]
    return Skeleton(parent, offset, names,
                    root_index=resolve(cfg["root"]),
                    left_foot_index=resolve(cfg["left_foot"]),
                    right_foot_index=resolve(cfg["right_foot"]))


def load_skeleton(path=None) -> Skeleton:
    """Load a skeleton JSON file; ``None`` loads the shipped 22-joint SMPL skeleton."""
    if path is None:
        text = resources.files("physimetrics.data").joinpath("smpl22_skeleton.json").read_text()
        path = "<default skeleton>"
    else:
        text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, location=exc.lineno) from None
    try:
        return skeleton_from_dict(cfg)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing or malformed field {exc}", path=path) from None


def default_skeleton() -> Skeleton:
    return load_skeleton(None)


# --------------------------------------------------------------------------
# rotation algebra


def rot6d_to_matrix(r6d) -> np.ndarray:
    """Decode ``(..., 6)`` rotations into ``(..., 3, 3)`` matrices by Gram-Schmidt."""
    r6d = np.asarray(r6d, dtype=np.float64)
    a, b = r6d[..., :3], r6d[..., 3:]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if not np.all(np.isfinite(r6d)):
        raise DegenerateRotation("6D rotation has non-finite components")
    if np.any(na < DEGENERATE_EPS):
        raise DegenerateRotation("first 6D column is (near-)zero")
    c1 = a / na
    e = b - np.sum(b * c1, axis=-1, keepdims=True) * c1
    ne = np.linalg.norm(e, axis=-1, keepdims=True)
    if np.any(ne < DEGENERATE_EPS):
        raise DegenerateRotation("6D columns are (near-)parallel")
    # second projection pass: nearly parallel columns lose orthogonality to cancellation
    e = e - np.sum(e * c1, axis=-1, keepdims=True) * c1
    ne = np.linalg.norm(e, axis=-1, keepdims=True)
    c2 = e / ne
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


def matrix_to_rot6d(m, tol=1e-4) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise ShapeMismatch(f"expected (..., 3, 3) matrices, got {m.shape}")
    gram = np.swapaxes(m, -1, -2) @ m
    if (not np.all(np.isfinite(m))
            or np.any(np.abs(gram - np.eye(3)) > tol)
            or np.any(np.abs(np.linalg.det(m) - 1.0) > tol)):
        raise NotARotation("matrix is not a proper rotation")
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def orthonormalize_6d(r6d) -> np.ndarray:
    """Project 6D parameters onto their canonical (orthonormal) representative."""
    m = rot6d_to_matrix(r6d)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def axis_angle_to_matrix(rotvec) -> np.ndarray:
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(rotvec, axis=-1)[..., None, None]
    k = np.zeros(rotvec.shape[:-1] + (3, 3))
    x, y, z = rotvec[..., 0], rotvec[..., 1], rotvec[..., 2]
    k[..., 0, 1], k[..., 0, 2] = -z, y
    k[..., 1, 0], k[..., 1, 2] = z, -x
    k[..., 2, 0], k[..., 2, 1] = -y, x
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(theta > 1e-12, np.sin(theta) / theta, 1.0)
        c = np.where(theta > 1e-12, (1 - np.cos(theta)) / theta**2, 0.5)
    return np.eye(3) + s * k + c * (k @ k)


def _rot6d_matrix_derivative(r6d):
    """d R[a, b] / d r6d[s] for ``(J, 6)`` input, returned as ``(J, 3, 3, 6)``."""
    a, b = r6d[:, :3], r6d[:, 3:]
    n = len(r6d)
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))
    na = np.linalg.norm(a, axis=-1)
    c1 = a / na[:, None]
    bc = np.sum(b * c1, axis=-1)
    e = b - bc[:, None] * c1
    ne = np.linalg.norm(e, axis=-1)
    c2 = e / ne[:, None]

    proj1 = eye - c1[:, :, None] * c1[:, None, :]
    dc1_da = proj1 / na[:, None, None]
    # e = b - (b.c1) c1
    de_dc1 = -(c1[:, :, None] * b[:, None, :] + bc[:, None, None] * eye)
    de_da = de_dc1 @ dc1_da
    de_db = proj1
    dc2_de = (eye - c2[:, :, None] * c2[:, None, :]) / ne[:, None, None]
    dc2_da = dc2_de @ de_da
    dc2_db = dc2_de @ de_db

    def skew(v):
        s = np.zeros((n, 3, 3))
        s[:, 0, 1], s[:, 0, 2] = -v[:, 2], v[:, 1]
        s[:, 1, 0], s[:, 1, 2] = v[:, 2], -v[:, 0]
        s[:, 2, 0], s[:, 2, 1] = -v[:, 1], v[:, 0]
        return s

    # c3 = c1 x c2
    dc3_da = -skew(c2) @ dc1_da + skew(c1) @ dc2_da
    dc3_db = skew(c1) @ dc2_db

    out = np.zeros((n, 3, 3, 6))
    out[:, :, 0, :3] = dc1_da
    out[:, :, 1, :3] = dc2_da
    out[:, :, 1, 3:] = dc2_db
    out[:, :, 2, :3] = dc3_da
    out[:, :, 2, 3:] = dc3_db
    return out


# --------------------------------------------------------------------------
# forward kinematics


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """Root trajectory ``(T, 3)`` plus local 6D rotations ``(T, J, 6)``."""

    root_translation: np.ndarray
    local_rotation: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        rt = np.asarray(self.root_translation, dtype=np.float64)
        lr = np.asarray(self.local_rotation, dtype=np.float64)
        object.__setattr__(self, "root_translation", rt)
        object.__setattr__(self, "local_rotation", lr)
        if rt.ndim != 2 or rt.shape[1] != 3 or rt.shape[0] < 1:
            raise ShapeMismatch(f"root_translation must be (T>=1, 3), got {rt.shape}")
        if lr.ndim != 3 or lr.shape[0] != rt.shape[0] or lr.shape[2] != 6:
            raise ShapeMismatch(f"local_rotation must be (T, J, 6), got {lr.shape}")
        if not self.fps > 0:
            raise InvariantViolation(f"fps must be positive, got {self.fps}")

    @property
    def frames(self) -> int:
        return self.root_translation.shape[0]

    @classmethod
    def rest(cls, s: Skeleton, frames=1, root_translation=None, fps=30.0) -> "PoseSequence":
        rot = np.tile(np.array([1.0, 0, 0, 0, 1.0, 0]), (frames, s.joint_count, 1))
        if root_translation is None:
            root_translation = np.zeros((frames, 3))
        return cls(np.broadcast_to(root_translation, (frames, 3)).copy(), rot, fps)


def _global_transforms(s: Skeleton, root_translation, rotmats):
    """Global positions and rotations for ``(..., 3)`` roots and ``(..., J, 3, 3)`` local rotations."""
    pos = np.empty(rotmats.shape[:-2] + (3,))
    glob = np.empty_like(rotmats)
    r = s.root_index
    pos[..., r, :] = root_translation
    glob[..., r, :, :] = rotmats[..., r, :, :]
    for j in s.order[1:]:
        p = s.parent[j]
        glob[..., j, :, :] = glob[..., p, :, :] @ rotmats[..., j, :, :]
        pos[..., j, :] = pos[..., p, :] + glob[..., p, :, :] @ s.rest_offset[j]
    return pos, glob


def forward_kinematics(s: Skeleton, pose: PoseSequence) -> np.ndarray:
    """Global joint positions ``(T, J, 3)``."""
    if pose.local_rotation.shape[1] != s.joint_count:
        raise ShapeMismatch(
            f"pose has {pose.local_rotation.shape[1]} joints, skeleton has {s.joint_count}")
    rotmats = rot6d_to_matrix(pose.local_rotation)
    pos, _ = _global_transforms(s, pose.root_translation, rotmats)
    return pos


def fk_position_jacobian(s: Skeleton, root_translation, local_rotation) -> np.ndarray:
    """Jacobian of one frame's joint positions w.r.t. its parameters.

    Rows are ``3 * joint + axis``; columns are the flattened 6D rotations
    (``6 * joint + component``) followed by the 3 root translation components.
    """
    local_rotation = np.asarray(local_rotation, dtype=np.float64)
    n = s.joint_count
    if local_rotation.shape != (n, 6):
        raise ShapeMismatch(f"expected ({n}, 6) rotations, got {local_rotation.shape}")
    rotmats = rot6d_to_matrix(local_rotation)
    pos, glob = _global_transforms(s, np.asarray(root_translation, dtype=np.float64), rotmats)

    dR = _rot6d_matrix_derivative(local_rotation)
    parent_glob = np.empty_like(glob)
    for j in range(n):
        p = s.parent[j]
        parent_glob[j] = glob[p] if p >= 0 else np.eye(3)
    # pos_k - pos_j = Gpar_j @ R_j @ u_jk for every descendant k of j
    m = np.einsum("jxa,jabs->jxbs", parent_glob, dR)
    u = np.einsum("jab,jka->jkb", glob, pos[None, :, :] - pos[:, None, :])
    u *= s.ancestors()[:, :, None]
    blocks = np.einsum("jxbs,jkb->kxjs", m, u)

    jac = np.zeros((3 * n, 6 * n + 3))
    jac[:, : 6 * n] = blocks.reshape(3 * n, 6 * n)
    jac[:, 6 * n:] = np.tile(np.eye(3), (n, 1))
    return jac


def bone_lengths(s: Skeleton, positions) -> np.ndarray:
    """Per-frame parent-to-child segment lengths ``(T, J-1)`` in bone order."""
    positions = np.asarray(positions, dtype=np.float64)
    bones = s.bones
    return np.linalg.norm(positions[..., bones, :] - positions[..., s.parent[bones], :], axis=-1)


# --------------------------------------------------------------------------
# inverse kinematics


@dataclass(frozen=True)
class IkConfig:
    damping: float = 1e-4
    max_iterations: int = 200
    tolerance: float = 1e-7   # stop once the RMS improvement (m) drops below this
    warm_start: bool = True


@dataclass(frozen=True, eq=False)
class IkResult:
    pose: PoseSequence
    residual: np.ndarray      # per-frame RMS position error, meters
    iterations: np.ndarray    # per-frame iteration count


def _frame_rms(s, root, rot6d, target):
    pos, _ = _global_transforms(s, root, rot6d_to_matrix(rot6d))
    err = pos - target
    return err, float(np.sqrt(np.mean(np.sum(err**2, axis=-1))))


def _fit_frame(s, target, root, rot6d, cfg):
    n = s.joint_count
    err, rms = _frame_rms(s, root, rot6d, target)
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        jac = fk_position_jacobian(s, root, rot6d)
        lhs = jac.T @ jac
        lhs[np.diag_indices_from(lhs)] += cfg.damping
        step = np.linalg.solve(lhs, -jac.T @ err.ravel())
        # halve the step until the error does not grow
        for _ in range(30):
            new_rot = orthonormalize_6d(rot6d + step[: 6 * n].reshape(n, 6))
            new_root = root + step[6 * n:]
            new_err, new_rms = _frame_rms(s, new_root, new_rot, target)
            if new_rms <= rms:
                break
            step = 0.5 * step
        else:
            break
        improvement = rms - new_rms
        root, rot6d, err, rms = new_root, new_rot, new_err, new_rms
        if improvement < cfg.tolerance:
            break
    return root, rot6d, rms, it


def ik_fit(s: Skeleton, target_positions, config: IkConfig | None = None, fps=30.0) -> IkResult:
    """Fit root translation and local rotations to joint positions, frame by frame."""
    cfg = config or IkConfig()
    target = np.asarray(target_positions, dtype=np.float64)
    if target.ndim != 3 or target.shape[1:] != (s.joint_count, 3) or target.shape[0] < 1:
        raise ShapeMismatch(f"targets must be (T, {s.joint_count}, 3), got {target.shape}")
    if not np.all(np.isfinite(target)):
        raise NonFinite("target positions contain non-finite values")
    frames = target.shape[0]
    rest = PoseSequence.rest(s).local_rotation[0]
    roots = np.empty((frames, 3))
    rots = np.empty((frames, s.joint_count, 6))
    residual = np.empty(frames)
    iterations = np.zeros(frames, dtype=np.int64)
    rot6d = rest
    for t in range(frames):
        if t == 0 or not cfg.warm_start:
            rot6d = rest
            root = target[t, s.root_index]
        else:
            root = roots[t - 1] + target[t, s.root_index] - target[t - 1, s.root_index]
        roots[t], rots[t], residual[t], iterations[t] = _fit_frame(s, target[t], root, rot6d, cfg)
        rot6d = rots[t]
    return IkResult(PoseSequence(roots, rots, fps), residual, iterations)
