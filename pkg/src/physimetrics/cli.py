"""Command line front-end: ``physimetrics eval|fit|validate|synth``.

Exit codes: 0 success, 2 parse or usage error, 3 invariant violation,
4 validation found violations. Errors print one line on stderr starting with
``physimetrics: error[<category>]:``.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, synth
from .bodymodel import load_body_config
from .errors import ParseError, PhysimetricsError
from .kinematics import IkConfig, forward_kinematics, ik_fit, load_skeleton
from .losses import LossConfig
from .metrics import GroundPlane, aggregate_reports, evaluate_clip, evaluate_positions, fid_star
from .representation import InteractionClip, MotionRep, RepTolerances, compute_velocity, pos_rot_mpjpe, validate_rep

EXIT_OK, EXIT_PARSE, EXIT_INVARIANT, EXIT_VIOLATIONS = 0, 2, 3, 4
MPJPE_NOTICEABLE_MM = 50.0
REPORT_FIELDS = [
    "penetration_mm", "float_mm", "foot_contact_mm", "skate_cm_s", "pfc",
    "interpenetration_cm3", "mpjpe_mm", "fid_star", "frames", "persons", "clips",
]


class CliError(Exception):
    def __init__(self, category, message, code):
        super().__init__(message)
        self.category = category
        self.code = code


@dataclass
class RunConfig:
    skeleton: str | None = None
    body: str | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    ground_height: float = 0.0
    contact_eps: float = 0.005
    fps: float | None = None
    format: str = "json"
    ik: IkConfig = field(default_factory=IkConfig)
    validate: RepTolerances = field(default_factory=RepTolerances)

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ParseError(exc.strerror or str(exc), path) from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path, f"line {exc.lineno}") from None
        if not isinstance(doc, dict):
            raise ParseError("config must be a JSON object", path)
        base = path.parent
        cfg = cls()
        try:
            for key in ("skeleton", "body"):
                if doc.get(key) is not None:
                    ref = base / doc[key]
                    if not ref.exists():
                        raise CliError("invariant", f"{path}: {key} file {ref} does not exist", EXIT_INVARIANT)
                    setattr(cfg, key, str(ref))
            if "loss" in doc:
                cfg.loss = LossConfig.from_dict(doc["loss"])
            metrics = doc.get("metrics", {})
            cfg.ground_height = float(metrics.get("ground_height", cfg.ground_height))
            cfg.contact_eps = float(metrics.get("contact_eps", cfg.contact_eps))
            if "fps" in doc and doc["fps"] is not None:
                cfg.fps = float(doc["fps"])
            cfg.format = doc.get("format", cfg.format)
            if "ik" in doc:
                cfg.ik = IkConfig(**doc["ik"])
            if "validate" in doc:
                cfg.validate = RepTolerances(**doc["validate"])
        except TypeError as exc:
            raise ParseError(f"malformed config: {exc}", path) from None
        if not cfg.contact_eps > 0 or (cfg.fps is not None and not cfg.fps > 0):
            raise CliError("invariant", f"{path}: thresholds and fps must be positive", EXIT_INVARIANT)
        if cfg.format not in ("json", "csv"):
            raise ParseError(f"unknown format {cfg.format!r}", path)
        return cfg


def _threads() -> int:
    raw = os.environ.get("PHYSIMETRICS_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return min(8, os.cpu_count() or 1)


def _parallel_map(fn, items):
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _read(path, up_axis=None) -> io.MotionFile:
    mf = io.read_motion_file(path)
    if up_axis is not None:
        mf.up_axis = up_axis
    return mf


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(x):
    return "" if x is None else repr(x)


# --------------------------------------------------------------------------
# commands


def cmd_eval(args, cfg: RunConfig) -> int:
    s = load_skeleton(cfg.skeleton)
    _, sb = load_body_config(cfg.body, s)
    g = GroundPlane(cfg.ground_height)
    files = [_read(p, args.up_axis) for p in args.inputs]
    refs = [_read(p, args.up_axis) for p in (args.ref or [])]
    for path, mf in zip(args.inputs, files):
        if mf.kind == "markers":
            raise CliError("invariant", f"{path}: eval needs a positions or rep payload", EXIT_INVARIANT)

    def one(mf):
        fps = cfg.fps or mf.fps
        if mf.kind == "rep":
            return evaluate_clip(io.clip_of(mf, s.root_index), s, sb, g, fps, cfg.contact_eps)
        return evaluate_positions(io.positions_of(mf), s, sb, g, fps, cfg.contact_eps)

    reports = _parallel_map(one, files)
    agg = aggregate_reports(reports)
    if refs:
        feats = [np.concatenate([p.reshape(len(p), -1) for mf in group for p in io.positions_of(mf)])
                 for group in (files, refs)]
        agg.fid_star = fid_star(*feats)

    fmt = args.format or cfg.format
    rows = [(str(path), r) for path, r in zip(args.inputs, reports)]
    if fmt == "json":
        doc = {"clips": [{"file": name, **r.to_dict()} for name, r in rows], "aggregate": agg.to_dict()}
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["file"] + REPORT_FIELDS)
        for name, r in rows + [("aggregate", agg)]:
            d = r.to_dict()
            w.writerow([name] + [_fmt(d[k]) for k in REPORT_FIELDS])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


def cmd_fit(args, cfg: RunConfig) -> int:
    s = load_skeleton(cfg.skeleton)
    mf = _read(args.input, args.up_axis)
    if mf.kind != "positions":
        raise CliError("invariant", f"{args.input}: fit needs a positions payload", EXIT_INVARIANT)
    fps = cfg.fps or mf.fps
    targets = io.positions_of(mf)

    def one(p):
        result = ik_fit(s, p, cfg.ik, fps)
        rep = MotionRep(p, compute_velocity(p), result.pose.local_rotation, fps)
        return rep, result.residual

    fitted = _parallel_map(one, targets)
    clip = InteractionClip([rep for rep, _ in fitted], mf.text or None)
    io.write_motion_file(args.out, io.file_from_clip(clip))
    for i, (rep, residual) in enumerate(fitted):
        print(f"fit: person={i} residual_rms_mean_m={residual.mean():.6g} "
              f"residual_rms_max_m={residual.max():.6g} mpjpe_mm={pos_rot_mpjpe(rep, s):.6g}")
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    s = load_skeleton(cfg.skeleton)
    mf = _read(args.input, args.up_axis)
    if mf.kind != "rep":
        raise CliError("invariant", f"{args.input}: validate needs a rep payload", EXIT_INVARIANT)
    clip = io.clip_of(mf, s.root_index)
    found = 0
    for i, rep in enumerate(clip.persons):
        for v in validate_rep(rep, s, cfg.validate):
            found += 1
            print(f"violation: person={i} kind={v.kind} component={v.component} value={v.value:.6g}: {v.message}")
        if np.all(np.isfinite(rep.r)) and np.all(np.isfinite(rep.p)) and rep.joints == s.joint_count:
            mpjpe = pos_rot_mpjpe(rep, s)
            print(f"mpjpe: person={i} mpjpe_mm={mpjpe:.6g}")
            if mpjpe > MPJPE_NOTICEABLE_MM:
                print(f"warning: person={i} pos/rot disagreement noticeable "
                      f"({mpjpe:.4g} mm > {MPJPE_NOTICEABLE_MM:g} mm)")
    print(f"validate: {found} violation(s)")
    return EXIT_VIOLATIONS if found else EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    s = load_skeleton(cfg.skeleton)
    _, sb = load_body_config(cfg.body, s)
    params = {"frames": args.frames, "fps": args.fps, "height_offset": args.height_offset,
              "noise": args.noise, "seed": args.seed}
    if args.frames < 1 or not args.fps > 0 or args.noise < 0:
        raise CliError("usage", "frames must be >= 1, fps > 0 and noise >= 0", EXIT_PARSE)
    if args.kind == "walk-line":
        params["speed"] = args.speed
    elif args.kind == "two-person-approach":
        if not args.gap > 0:
            raise CliError("usage", "gap must be positive", EXIT_PARSE)
        params["gap"] = args.gap
        params["start_gap"] = args.start_gap
    if args.payload == "rep":
        if args.frames < 2:
            raise CliError("usage", "rep payloads need at least 2 frames", EXIT_PARSE)
        mf = io.file_from_clip(synth.generate_clip(args.kind, s, sb, text=args.text, **params))
    else:
        poses = synth.generate(args.kind, s, sb, **params)
        mf = io.file_from_positions([forward_kinematics(s, p) for p in poses], args.fps, args.text or "")
    io.write_motion_file(args.out, mf)
    return EXIT_OK


# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_PARSE)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--up-axis", choices=["z", "y"], default=None,
                        help="override the up axis declared by input files")

    parser = _Parser(prog="physimetrics", description="Physical plausibility metrics for motion clips.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", parents=[common], help="score motion files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--ref", nargs="+", help="reference files for FID*")
    p.add_argument("--out")
    p.add_argument("--format", choices=["json", "csv"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit", parents=[common], help="fit rotations to joint positions")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate", parents=[common], help="check a rep file for internal consistency")
    p.add_argument("input")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic test motion")
    p.add_argument("kind", choices=list(synth.KINDS))
    p.add_argument("--out", required=True)
    p.add_argument("--payload", choices=["positions", "rep"], default="positions")
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--fps", type=float, default=20.0)
    p.add_argument("--speed", type=float, default=0.012, help="walk-line speed, m/frame")
    p.add_argument("--gap", type=float, default=0.5, help="closest root separation, m")
    p.add_argument("--start-gap", type=float, default=2.0)
    p.add_argument("--height-offset", type=float, default=0.0, help="vertical shift, m")
    p.add_argument("--noise", type=float, default=0.0, help="root jitter std, m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--text", default="")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig.load(args.config)
        return args.func(args, cfg)
    except CliError as exc:
        err = exc
    except ParseError as exc:
        err = CliError("parse", str(exc), EXIT_PARSE)
    except (PhysimetricsError, ValueError) as exc:
        err = CliError("invariant", f"{type(exc).__name__}: {exc}", EXIT_INVARIANT)
    msg = " ".join(str(err).split())
    print(f"physimetrics: error[{err.category}]: {msg}", file=sys.stderr)
    return err.code


if __name__ == "__main__":
    sys.exit(main())
