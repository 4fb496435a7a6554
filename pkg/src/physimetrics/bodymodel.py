"""Mesh-free body geometry: surface markers regressed from joints and a sphere body.

Markers are convex combinations of joint positions and spheres sit on bones,
so both follow the skeleton rigidly without any skinning.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvariantViolation, ParseError, ShapeMismatch
from .kinematics import Skeleton, default_skeleton

MARKER_COUNT = 67
SPHERE_COUNT = 45


@dataclass(frozen=True, eq=False)
class MarkerSet:
    weights: np.ndarray          # (K, J), rows are convex weights
    marker_names: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "marker_names", tuple(self.marker_names))
        if w.ndim != 2 or len(self.marker_names) != w.shape[0]:
            raise InvariantViolation("marker weights must be (markers, joints) with one name per row")
        for k, row in enumerate(w):
            if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-6:
                raise InvariantViolation(
                    f"marker {k} ({self.marker_names[k]}): weights must be non-negative and sum to 1,"
                    f" got sum {row.sum():.6g}")

    def __len__(self):
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class SphereBody:
    joint_a: np.ndarray
    joint_b: np.ndarray
    t: np.ndarray
    radius: np.ndarray           # meters

    def __post_init__(self):
        a = np.asarray(self.joint_a, dtype=np.int64)
        b = np.asarray(self.joint_b, dtype=np.int64)
        t = np.asarray(self.t, dtype=np.float64)
        r = np.asarray(self.radius, dtype=np.float64)
        if not (a.shape == b.shape == t.shape == r.shape) or a.ndim != 1:
            raise InvariantViolation("sphere arrays must be 1-D and equally long")
        for i in range(len(a)):
            if not r[i] > 0:
                raise InvariantViolation(f"sphere {i}: radius must be positive, got {r[i]}")
            if not 0.0 <= t[i] <= 1.0:
                raise InvariantViolation(f"sphere {i}: t must lie in [0, 1], got {t[i]}")
            if a[i] < 0 or b[i] < 0:
                raise InvariantViolation(f"sphere {i}: negative joint index")
        for name, arr in (("joint_a", a), ("joint_b", b), ("t", t), ("radius", r)):
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.radius)

    @classmethod
    def from_rows(cls, rows):
        a, b, t, r = zip(*rows)
        return cls(a, b, t, r)


@dataclass(frozen=True, eq=False)
class BodyModel:
    markers: MarkerSet
    spheres: SphereBody

    @classmethod
    def load(cls, path=None, skeleton: Skeleton | None = None) -> "BodyModel":
        return cls(*load_body_config(path, skeleton))


def regress_markers(p, ms: MarkerSet) -> np.ndarray:
    """``(T, J, 3)`` joint positions to ``(T, K, 3)`` marker positions."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-2] != ms.weights.shape[1] or p.shape[-1] != 3:
        raise ShapeMismatch(f"positions {p.shape} do not match a {ms.weights.shape[1]}-joint marker set")
    return np.einsum("kj,...jc->...kc", ms.weights, p)


def sphere_centers(p, sb: SphereBody):
    """Sphere centers ``(T, S, 3)`` interpolated along bones, plus the ``(S,)`` radii."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 3 or p.ndim < 2:
        raise ShapeMismatch(f"positions must be (..., J, 3), got {p.shape}")
    n = p.shape[-2]
    if len(sb) and max(sb.joint_a.max(), sb.joint_b.max()) >= n:
        raise ShapeMismatch(f"sphere body references joints beyond {n}")
    t = sb.t[:, None]
    centers = (1.0 - t) * p[..., sb.joint_a, :] + t * p[..., sb.joint_b, :]
    return centers, sb.radius


# --------------------------------------------------------------------------
# config files


def _joint_ref(ref, skeleton, where):
    try:
        idx = skeleton.index(ref)
    except KeyError:
        raise InvariantViolation(f"{where}: unknown joint {ref!r}") from None
    if not 0 <= idx < skeleton.joint_count:
        raise InvariantViolation(f"{where}: joint index {idx} out of range")
    return idx


def body_from_dict(cfg: dict, skeleton: Skeleton | None = None):
    skeleton = skeleton or default_skeleton()
    markers = cfg.get("markers")
    spheres = cfg.get("spheres")
    if not isinstance(markers, list) or not isinstance(spheres, list):
        raise InvariantViolation("body config needs 'markers' and 'spheres' lists")
    if len(markers) != MARKER_COUNT:
        raise InvariantViolation(f"expected {MARKER_COUNT} markers, got {len(markers)}")
    if len(spheres) != SPHERE_COUNT:
        raise InvariantViolation(f"expected {SPHERE_COUNT} spheres, got {len(spheres)}")

    weights = np.zeros((len(markers), skeleton.joint_count))
    names = []
    for k, m in enumerate(markers):
        where = f"marker {k} ({m.get('name', '?')})"
        for joint, w in m["weights"].items():
            weights[k, _joint_ref(joint, skeleton, where)] += float(w)
        row = weights[k]
        if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-6:
            raise InvariantViolation(f"{where}: weights must be non-negative and sum to 1, got sum {row.sum():.6g}")
        names.append(m["name"])

    rows = []
    for i, sp in enumerate(spheres):
        where = f"sphere {i}"
        a = _joint_ref(sp["a"], skeleton, where)
        b = _joint_ref(sp["b"], skeleton, where)
        t, r = float(sp["t"]), float(sp["radius"])
        if not 0.0 <= t <= 1.0:
            raise InvariantViolation(f"{where}: t must lie in [0, 1], got {t}")
        if not r > 0:
            raise InvariantViolation(f"{where}: radius must be positive, got {r}")
        rows.append((a, b, t, r))
    return MarkerSet(weights, names), SphereBody.from_rows(rows)


def load_body_config(path=None, skeleton: Skeleton | None = None):
    """Load ``(MarkerSet, SphereBody)``; ``None`` loads the shipped default body."""
    if path is None:
        text = resources.files("physimetrics.data").joinpath("body_default.json").read_text()
        path = "<default body>"
    else:
        text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, location=exc.lineno) from None
    try:
        return body_from_dict(cfg, skeleton)
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        if isinstance(exc, InvariantViolation):
            raise
        raise ParseError(f"malformed body config: {exc}", path=path) from None


def body_to_dict(ms: MarkerSet, sb: SphereBody, skeleton: Skeleton | None = None) -> dict:
    skeleton = skeleton or default_skeleton()
    names = skeleton.joint_names
    markers = []
    for name, row in zip(ms.marker_names, ms.weights):
        markers.append({"name": name,
                        "weights": {names[j]: float(row[j]) for j in np.flatnonzero(row)}})
    spheres = [{"a": names[a], "b": names[b], "t": float(t), "radius": float(r)}
               for a, b, t, r in zip(sb.joint_a, sb.joint_b, sb.t, sb.radius)]
    return {"markers": markers, "spheres": spheres}


def dumps_body_config(ms: MarkerSet, sb: SphereBody, skeleton: Skeleton | None = None) -> str:
    """Canonical text form: one marker or sphere per line."""
    cfg = body_to_dict(ms, sb, skeleton)
    lines = ["{", '  "markers": [']
    lines.append(",\n".join("    " + json.dumps(m) for m in cfg["markers"]))
    lines.append("  ],")
    lines.append('  "spheres": [')
    lines.append(",\n".join("    " + json.dumps(s) for s in cfg["spheres"]))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_body_config(path, ms: MarkerSet, sb: SphereBody, skeleton: Skeleton | None = None):
    Path(path).write_text(dumps_body_config(ms, sb, skeleton))
