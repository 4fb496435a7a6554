"""Motion file reading and writing.

Binary layout, all little-endian::

    magic     4s   b"PHYM"
    version   u32  1
    kind      u32  0 positions, 1 rep, 2 markers
    persons   u32  N
    frames    u32  T
    points    u32  J (joints) or K (markers)
    fps       f64
    up_axis   c    b"z" or b"y", then 3 pad bytes
    text_len  u32  followed by that many UTF-8 bytes
    payload   f32  positions/markers (N, T, J, 3); rep (N, T, 12 * J)

Files ending in ``.json`` hold the same header fields and a nested ``data`` list.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ShapeMismatch
from .kinematics import matrix_to_rot6d, rot6d_to_matrix
from .representation import REP_JOINTS, InteractionClip, MotionRep

MAGIC = b"PHYM"
VERSION = 1
KINDS = ("positions", "rep", "markers")
_HEADER = struct.Struct("<4sIIIIIdc3xI")

# y-up (x, y, z) -> z-up (x, -z, y)
Y_TO_Z = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


@dataclass(eq=False)
class MotionFile:
    kind: str
    data: np.ndarray            # float32
    fps: float = 30.0
    up_axis: str = "z"
    text: str = ""
    version: int = VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ShapeMismatch(f"unknown payload kind {self.kind!r}")
        self.data = np.ascontiguousarray(self.data, dtype="<f4")
        expect = 3 if self.kind == "rep" else 4
        if self.data.ndim != expect:
            raise ShapeMismatch(f"{self.kind} payload must have {expect} axes, got {self.data.shape}")
        if self.kind == "rep" and self.data.shape[2] % 12:
            raise ShapeMismatch("rep payload width must be a multiple of 12")
        if self.kind != "rep" and self.data.shape[3] != 3:
            raise ShapeMismatch("point payload must end in 3 coordinates")

    @property
    def persons(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def points(self) -> int:
        return self.data.shape[2] // 12 if self.kind == "rep" else self.data.shape[2]


def encode(mf: MotionFile) -> bytes:
    text = mf.text.encode("utf-8")
    header = _HEADER.pack(MAGIC, mf.version, KINDS.index(mf.kind), mf.persons, mf.frames,
                          mf.points, float(mf.fps), mf.up_axis.encode("ascii"), len(text))
    return header + text + mf.data.tobytes()


def decode(buf: bytes, path=None) -> MotionFile:
    if len(buf) < _HEADER.size:
        raise ParseError(f"truncated header ({len(buf)} of {_HEADER.size} bytes)", path, len(buf))
    magic, version, kind, n, t, j, fps, up, text_len = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", path, 0)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", path, 4)
    if kind >= len(KINDS):
        raise ParseError(f"unknown payload kind {kind}", path, 8)
    if up not in (b"z", b"y"):
        raise ParseError(f"bad up axis {up!r}", path, 32)
    if not fps > 0:
        raise ParseError(f"fps must be positive, got {fps}", path, 24)
    start = _HEADER.size + text_len
    if len(buf) < start:
        raise ParseError("truncated text field", path, _HEADER.size)
    try:
        text = buf[_HEADER.size:start].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"text is not UTF-8: {exc.reason}", path, _HEADER.size + exc.start) from None
    kind_name = KINDS[kind]
    shape = (n, t, 12 * j) if kind_name == "rep" else (n, t, j, 3)
    expect = 4 * int(np.prod(shape))
    got = len(buf) - start
    if got != expect:
        raise ParseError(f"payload is {got} bytes, header declares {expect}", path, start)
    data = np.frombuffer(buf, dtype="<f4", offset=start).reshape(shape).copy()
    return MotionFile(kind_name, data, fps, up.decode("ascii"), text, version)


def to_json(mf: MotionFile) -> str:
    doc = {"format": "PHYM", "version": mf.version, "kind": mf.kind, "persons": mf.persons,
           "frames": mf.frames, "points": mf.points, "fps": mf.fps, "up_axis": mf.up_axis,
           "text": mf.text, "data": mf.data.astype(np.float64).tolist()}
    return json.dumps(doc) + "\n"


def from_json(text: str, path=None) -> MotionFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, f"line {exc.lineno}") from None
    try:
        if doc.get("format") != "PHYM":
            raise ParseError("missing PHYM format tag", path)
        if doc["version"] != VERSION:
            raise ParseError(f"unsupported version {doc['version']}", path)
        mf = MotionFile(doc["kind"], np.array(doc["data"], dtype=np.float64), doc["fps"],
                        doc["up_axis"], doc.get("text", ""), doc["version"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed motion document: {exc}", path) from None
    if (mf.persons, mf.frames, mf.points) != (doc["persons"], doc["frames"], doc["points"]):
        raise ParseError("declared shape does not match data", path)
    return mf


def read_motion_file(path) -> MotionFile:
    path = Path(path)
    try:
        if path.suffix == ".json":
            return from_json(path.read_text(), path)
        return decode(path.read_bytes(), path)
    except OSError as exc:
        raise ParseError(exc.strerror or str(exc), path) from None


def write_motion_file(path, mf: MotionFile):
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(to_json(mf))
    else:
        path.write_bytes(encode(mf))


# --------------------------------------------------------------------------
# conversions between files and in-memory motion


def _drop_hand_joints(x, axis):
    if x.shape[axis] == REP_JOINTS + 2:
        return np.take(x, np.arange(REP_JOINTS), axis=axis)
    return x


def positions_of(mf: MotionFile) -> list:
    """Per-person ``(T, J, 3)`` float64 positions in the z-up frame.

    Rep payloads yield their position component; 24-joint inputs lose the two hand joints.
    """
    if mf.kind == "rep":
        return [rep.p for rep in clip_of(mf).persons]
    data = mf.data.astype(np.float64)
    if mf.kind == "positions":
        data = _drop_hand_joints(data, 2)
    if mf.up_axis == "y":
        data = data @ Y_TO_Z.T
    return list(data)


def clip_of(mf: MotionFile, root_index=0) -> InteractionClip:
    if mf.kind != "rep":
        raise ShapeMismatch(f"expected a rep payload, got {mf.kind}")
    persons = []
    for x in mf.data.astype(np.float64):
        rep = MotionRep.from_array(x, mf.fps)
        p, v, r = (_drop_hand_joints(a, 1) for a in (rep.p, rep.v, rep.r))
        if mf.up_axis == "y":
            p, v = p @ Y_TO_Z.T, v @ Y_TO_Z.T
            r = r.copy()
            r[:, root_index] = matrix_to_rot6d(Y_TO_Z @ rot6d_to_matrix(r[:, root_index]))
        persons.append(MotionRep(p, v, r, mf.fps))
    return InteractionClip(persons, mf.text or None)


def file_from_positions(per_person, fps=30.0, text="") -> MotionFile:
    return MotionFile("positions", np.stack([np.asarray(p) for p in per_person]), fps, "z", text)


def file_from_clip(clip: InteractionClip) -> MotionFile:
    data = np.stack([rep.to_array() for rep in clip.persons])
    return MotionFile("rep", data, clip.fps, "z", clip.text or "")


def file_from_markers(per_person, fps=30.0, text="") -> MotionFile:
    return MotionFile("markers", np.stack([np.asarray(m) for m in per_person]), fps, "z", text)
