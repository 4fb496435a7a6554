import json
import subprocess
import sys

import numpy as np
import pytest

from physimetrics import io
from physimetrics.cli import main
from physimetrics.errors import ParseError
from physimetrics.kinematics import PoseSequence, forward_kinematics, ik_fit, matrix_to_rot6d, rot6d_to_matrix
from physimetrics.metrics import MetricsReport, ground_contact_metrics, interpenetration, skate
from physimetrics.representation import InteractionClip, MotionRep, pos_rot_mpjpe, rep_from_motion

from conftest import random_pose_sequence

PREFIX = "physimetrics: error["


def random_file(kind, rng, n=2, t=5):
    if kind == "rep":
        data = rng.normal(size=(n, t, 264))
    else:
        data = rng.normal(size=(n, t, 22 if kind == "positions" else 67, 3))
    return io.MotionFile(kind, data, fps=rng.uniform(10, 60), text="two people hug")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def assert_one_line_error(err, category):
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith(f"{PREFIX}{category}]:")


# --------------------------------------------------------------------------
# file format


class TestFormat:
    @pytest.mark.parametrize("kind", io.KINDS)
    @pytest.mark.parametrize("suffix", [".phym", ".json"])
    def test_round_trip_bit_exact(self, tmp_path, kind, suffix):
        mf = random_file(kind, np.random.default_rng(0))
        path = tmp_path / f"clip{suffix}"
        io.write_motion_file(path, mf)
        back = io.read_motion_file(path)
        assert back.data.tobytes() == mf.data.tobytes()
        assert (back.kind, back.fps, back.up_axis, back.text) == (mf.kind, mf.fps, mf.up_axis, mf.text)
        assert io.encode(back) == io.encode(mf)

    def test_rewrite_is_byte_identical(self, tmp_path):
        mf = random_file("rep", np.random.default_rng(1))
        a, b = tmp_path / "a.phym", tmp_path / "b.phym"
        io.write_motion_file(a, mf)
        io.write_motion_file(b, io.read_motion_file(a))
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.parametrize("offset, patch, location", [
        (0, b"XXXX", 0),
        (4, (7).to_bytes(4, "little"), 4),
        (8, (9).to_bytes(4, "little"), 8),
        (32, b"q", 32),
    ])
    def test_header_errors_name_offset(self, offset, patch, location):
        buf = bytearray(io.encode(random_file("positions", np.random.default_rng(2))))
        buf[offset:offset + len(patch)] = patch
        with pytest.raises(ParseError) as info:
            io.decode(bytes(buf), "clip.phym")
        assert info.value.location == location
        assert str(info.value).startswith(f"clip.phym:{location}:")

    def test_truncated_payload(self):
        mf = random_file("positions", np.random.default_rng(3))
        buf = io.encode(mf)
        with pytest.raises(ParseError) as info:
            io.decode(buf[:-4])
        assert info.value.location == 40 + len(mf.text.encode())

    def test_bad_json(self, tmp_path):
        path = tmp_path / "clip.json"
        path.write_text('{"format": "PHYM",\n "version": }')
        with pytest.raises(ParseError, match="line 2"):
            io.read_motion_file(path)

    def test_json_shape_mismatch(self, tmp_path):
        doc = json.loads(io.to_json(random_file("positions", np.random.default_rng(4))))
        doc["frames"] += 1
        path = tmp_path / "clip.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError, match="declared shape"):
            io.read_motion_file(path)

    def test_y_up_conversion(self, skeleton):
        rng = np.random.default_rng(5)
        p = forward_kinematics(skeleton, random_pose_sequence(rng, skeleton, frames=4))
        y_up = p[..., [0, 2, 1]] * [1, 1, -1]
        mf = io.MotionFile("positions", y_up[None], 30.0, "y")
        np.testing.assert_allclose(io.positions_of(mf)[0], p, atol=1e-5)

    def test_y_up_rep_root_rotation(self, skeleton):
        rng = np.random.default_rng(6)
        rep = rep_from_motion(skeleton, random_pose_sequence(rng, skeleton, frames=4))
        p, v = rep.p[..., [0, 2, 1]] * [1, 1, -1], rep.v[..., [0, 2, 1]] * [1, 1, -1]
        r = rep.r.copy()
        r[:, 0] = matrix_to_rot6d(io.Y_TO_Z.T @ rot6d_to_matrix(r[:, 0]))
        mf = io.MotionFile("rep", MotionRep(p, v, r).to_array()[None], 30.0, "y")
        back = io.clip_of(mf, skeleton.root_index).persons[0]
        np.testing.assert_allclose(back.p, rep.p, atol=1e-5)
        assert pos_rot_mpjpe(back, skeleton) < 0.01

    def test_hand_joints_dropped(self):
        data = np.random.default_rng(7).normal(size=(1, 3, 24, 3))
        out = io.positions_of(io.MotionFile("positions", data))[0]
        assert out.shape == (3, 22, 3)
        np.testing.assert_array_equal(out, data[0, :, :22].astype(np.float32))


# --------------------------------------------------------------------------
# commands


@pytest.fixture
def synth_file(tmp_path, capsys):
    def make(kind, name, *extra):
        path = tmp_path / name
        code, _, err = run(capsys, "synth", kind, "--out", path, *extra)
        assert code == 0, err
        return path
    return make


class TestSynth:
    def test_static_on_ground(self, synth_file, spheres):
        mf = io.read_motion_file(synth_file("static", "s.phym", "--frames", 10))
        (p,) = io.positions_of(mf)
        assert p.shape == (10, 22, 3)
        assert np.all(p == p[0])
        pen, flo, _ = ground_contact_metrics(p, spheres)
        assert pen < 1e-3 and flo < 1e-3

    def test_reproducible(self, synth_file):
        a = synth_file("two-person-approach", "a.phym", "--noise", 0.01, "--seed", 3)
        b = synth_file("two-person-approach", "b.phym", "--noise", 0.01, "--seed", 3)
        c = synth_file("two-person-approach", "c.phym", "--noise", 0.01, "--seed", 4)
        assert a.read_bytes() == b.read_bytes() != c.read_bytes()

    def test_walk_line_drives_skate(self, synth_file, spheres):
        (p,) = io.positions_of(io.read_motion_file(synth_file("walk-line", "w.phym", "--speed", 0.012)))
        assert skate(p, spheres, fps=20) == pytest.approx(24.0, abs=1e-3)

    def test_approach_overlaps(self, synth_file, spheres):
        mf = io.read_motion_file(synth_file("two-person-approach", "t.phym", "--gap", 0.5))
        per = io.positions_of(mf)
        assert interpenetration([p[-1:] for p in per], spheres) > 0

    def test_rep_payload(self, synth_file, skeleton):
        mf = io.read_motion_file(synth_file("walk-line", "w.json", "--payload", "rep", "--text", "walks"))
        assert mf.kind == "rep" and mf.text == "walks"
        clip = io.clip_of(mf)
        assert clip.persons[0].joints == 22

    @pytest.mark.parametrize("argv", [["--frames", "0"], ["--fps", "-1"], ["--frames", "abc"]])
    def test_bad_params(self, tmp_path, capsys, argv):
        code, _, err = run(capsys, "synth", "static", "--out", tmp_path / "x.phym", *argv)
        assert code == 2
        assert_one_line_error(err, "usage")


class TestEval:
    def test_static_zero(self, synth_file, capsys):
        code, out, _ = run(capsys, "eval", synth_file("static", "s.phym"))
        assert code == 0
        doc = json.loads(out)
        assert doc["clips"][0]["penetration_mm"] == pytest.approx(0.0, abs=1e-3)
        assert doc["aggregate"]["clips"] == 1

    def test_lowered(self, synth_file, capsys):
        path = synth_file("static", "low.phym", "--height-offset", -0.01)
        code, out, _ = run(capsys, "eval", path)
        rep = json.loads(out)["clips"][0]
        # payload is float32, so millimetre values carry ~1e-4 mm of rounding
        assert rep["penetration_mm"] == pytest.approx(10.0, abs=1e-3)
        assert rep["float_mm"] == pytest.approx(0.0, abs=1e-3)

    def test_fid_ref_identity(self, synth_file, capsys):
        path = synth_file("walk-line", "w.phym", "--frames", 80, "--noise", 0.02)
        code, out, _ = run(capsys, "eval", path, "--ref", path)
        assert code == 0
        assert abs(json.loads(out)["aggregate"]["fid_star"]) < 1e-6

    def test_schema_matches_report(self, synth_file, capsys):
        code, out, _ = run(capsys, "eval", synth_file("two-person-approach", "t.phym"))
        doc = json.loads(out)
        fields = set(MetricsReport.__dataclass_fields__)
        assert set(doc["aggregate"]) == fields
        assert set(doc["clips"][0]) == fields | {"file"}
        assert doc["clips"][0]["interpenetration_cm3"] > 0

    def test_csv(self, synth_file, capsys, tmp_path):
        path = synth_file("static", "s.phym")
        out_path = tmp_path / "r.csv"
        code, out, _ = run(capsys, "eval", path, path, "--format", "csv", "--out", out_path)
        assert code == 0 and out == ""
        lines = out_path.read_text().splitlines()
        assert lines[0].startswith("file,penetration_mm,")
        assert len(lines) == 4 and lines[-1].startswith("aggregate,")

    def test_thread_count_determinism(self, synth_file, capsys, monkeypatch):
        paths = [synth_file(k, f"{i}.phym", "--noise", 0.01, "--seed", i)
                 for i, k in enumerate(["static", "walk-line", "two-person-approach"] * 2)]
        outputs = []
        for threads in ("1", "4"):
            monkeypatch.setenv("PHYSIMETRICS_THREADS", threads)
            code, out, _ = run(capsys, "eval", *paths)
            assert code == 0
            outputs.append(out)
        assert outputs[0] == outputs[1]

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "eval", tmp_path / "nope.phym")
        assert code == 2
        assert_one_line_error(err, "parse")
        assert "nope.phym" in err

    def test_corrupt_file_names_offset(self, capsys, synth_file):
        path = synth_file("static", "s.phym")
        buf = bytearray(path.read_bytes())
        buf[:4] = b"ABCD"
        path.write_bytes(bytes(buf))
        code, _, err = run(capsys, "eval", path)
        assert code == 2
        assert_one_line_error(err, "parse")
        assert f"{path}:0:" in err

    def test_marker_payload_rejected(self, capsys, tmp_path):
        path = tmp_path / "m.phym"
        io.write_motion_file(path, random_file("markers", np.random.default_rng(0), n=1))
        code, _, err = run(capsys, "eval", path)
        assert code == 3
        assert_one_line_error(err, "invariant")

    def test_config_missing_reference(self, capsys, tmp_path, synth_file):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"body": "missing_body.json"}))
        code, _, err = run(capsys, "eval", synth_file("static", "s.phym"), "--config", cfg)
        assert code == 3
        assert_one_line_error(err, "invariant")

    def test_config_ground_height(self, capsys, tmp_path, synth_file):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"metrics": {"ground_height": 0.01}}))
        code, out, _ = run(capsys, "eval", synth_file("static", "s.phym"), "--config", cfg)
        assert code == 0
        assert json.loads(out)["aggregate"]["penetration_mm"] == pytest.approx(10.0, abs=1e-3)

    def test_y_up_flag(self, capsys, tmp_path, skeleton):
        p = forward_kinematics(skeleton, PoseSequence.rest(skeleton, 3))
        path = tmp_path / "y.phym"
        io.write_motion_file(path, io.file_from_positions([p[..., [0, 2, 1]] * [1, 1, -1]]))
        _, out_z, _ = run(capsys, "eval", path)
        _, out_y, _ = run(capsys, "eval", path, "--up-axis", "y")
        assert json.loads(out_z)["aggregate"] != json.loads(out_y)["aggregate"]

    def test_unknown_command(self, capsys):
        code, _, err = run(capsys, "dance")
        assert code == 2
        assert_one_line_error(err, "usage")


class TestFit:
    def test_fk_positions(self, capsys, tmp_path, skeleton):
        rng = np.random.default_rng(0)
        p = [forward_kinematics(skeleton, random_pose_sequence(rng, skeleton, frames=10)) for _ in range(2)]
        src, dst = tmp_path / "p.phym", tmp_path / "r.phym"
        io.write_motion_file(src, io.file_from_positions(p, fps=30.0, text="pair"))
        code, out, _ = run(capsys, "fit", src, "--out", dst)
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 2
        for line in lines:
            fields = dict(kv.split("=") for kv in line.split()[1:])
            assert float(fields["residual_rms_max_m"]) < 1e-3
            assert float(fields["mpjpe_mm"]) < 1.0
        mf = io.read_motion_file(dst)
        assert mf.kind == "rep" and mf.persons == 2 and mf.text == "pair"
        code, _, _ = run(capsys, "validate", dst)
        assert code == 0

    def test_rest(self, capsys, tmp_path, skeleton):
        p = forward_kinematics(skeleton, PoseSequence.rest(skeleton, 4, root_translation=[0.0, 0.0, 0.9]))
        src = tmp_path / "p.phym"
        io.write_motion_file(src, io.file_from_positions([p]))
        code, out, _ = run(capsys, "fit", src, "--out", tmp_path / "r.phym")
        assert code == 0
        fields = dict(kv.split("=") for kv in out.split()[1:])
        assert float(fields["residual_rms_max_m"]) < 1e-6

    def test_stretched_is_best_effort(self, capsys, tmp_path, skeleton):
        p = forward_kinematics(skeleton, PoseSequence.rest(skeleton, 3)) * 1.2
        src = tmp_path / "p.phym"
        io.write_motion_file(src, io.file_from_positions([p]))
        code, out, _ = run(capsys, "fit", src, "--out", tmp_path / "r.phym")
        assert code == 0
        fields = dict(kv.split("=") for kv in out.split()[1:])
        assert float(fields["residual_rms_mean_m"]) > 1e-3

    def test_rejects_rep(self, capsys, synth_file, tmp_path):
        path = synth_file("static", "r.phym", "--payload", "rep")
        code, _, err = run(capsys, "fit", path, "--out", tmp_path / "o.phym")
        assert code == 3
        assert_one_line_error(err, "invariant")

    def test_nan_input(self, capsys, tmp_path):
        data = np.zeros((1, 3, 22, 3))
        data[0, 1, 4, 2] = np.nan
        src = tmp_path / "p.phym"
        io.write_motion_file(src, io.MotionFile("positions", data))
        code, _, err = run(capsys, "fit", src, "--out", tmp_path / "o.phym")
        assert code == 3
        assert_one_line_error(err, "invariant")


class TestValidate:
    def write_rep(self, tmp_path, rep):
        path = tmp_path / "rep.phym"
        io.write_motion_file(path, io.file_from_clip(InteractionClip([rep])))
        return path

    def test_clean(self, capsys, tmp_path, skeleton):
        rep = rep_from_motion(skeleton, random_pose_sequence(np.random.default_rng(1), skeleton, frames=8))
        code, out, _ = run(capsys, "validate", self.write_rep(tmp_path, rep))
        assert code == 0
        assert out.strip().endswith("validate: 0 violation(s)")

    def test_zeroed_velocity(self, capsys, tmp_path, skeleton):
        rep = rep_from_motion(skeleton, random_pose_sequence(np.random.default_rng(2), skeleton, frames=8))
        bad = MotionRep(rep.p, np.zeros_like(rep.v), rep.r)
        code, out, _ = run(capsys, "validate", self.write_rep(tmp_path, bad))
        assert code == 4
        assert "kind=velocity" in out

    def test_mpjpe_warning(self, capsys, tmp_path, skeleton):
        rep = rep_from_motion(skeleton, random_pose_sequence(np.random.default_rng(3), skeleton, frames=6))
        other = random_pose_sequence(np.random.default_rng(4), skeleton, frames=6, max_angle=np.pi)
        bad = MotionRep(rep.p, rep.v, other.local_rotation)
        code, out, _ = run(capsys, "validate", self.write_rep(tmp_path, bad))
        assert "pos/rot disagreement noticeable" in out
        assert code == 4

    def test_rejects_positions(self, capsys, synth_file):
        code, _, err = run(capsys, "validate", synth_file("static", "s.phym"))
        assert code == 3
        assert_one_line_error(err, "invariant")

    def test_truncated(self, capsys, tmp_path):
        path = tmp_path / "rep.phym"
        path.write_bytes(b"PHYM\x01\x00")
        code, _, err = run(capsys, "validate", path)
        assert code == 2
        assert_one_line_error(err, "parse")


def test_module_entry_point(tmp_path):
    out = tmp_path / "s.phym"
    proc = subprocess.run([sys.executable, "-m", "physimetrics", "synth", "static", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "physimetrics", "eval", str(tmp_path / "missing.phym")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith(PREFIX)


def test_ik_matches_cli_fit(tmp_path, skeleton, capsys):
    rng = np.random.default_rng(9)
    p = forward_kinematics(skeleton, random_pose_sequence(rng, skeleton, frames=5))
    src, dst = tmp_path / "p.phym", tmp_path / "r.phym"
    io.write_motion_file(src, io.file_from_positions([p]))
    run(capsys, "fit", src, "--out", dst)
    rep = io.clip_of(io.read_motion_file(dst)).persons[0]
    direct = ik_fit(skeleton, io.positions_of(io.read_motion_file(src))[0])
    np.testing.assert_allclose(rep.r, direct.pose.local_rotation, atol=1e-6)
