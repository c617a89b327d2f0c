import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from advreg import cli, critic as C
from advreg.pointcloud import PointCloud, load_bundled_cloud, write_ply, write_xyz

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def clouds(tmp_path_factory):
    d = tmp_path_factory.mktemp("clouds")
    pts = load_bundled_cloud().points[::4]
    write_ply(d / "a.ply", PointCloud(pts))
    write_xyz(d / "a.xyz", PointCloud(pts))
    return d


def strip_wall_time(text):
    return "\n".join(l for l in text.splitlines() if not l.startswith("wall_time_s"))


def parse_record(text):
    lines = text.splitlines()
    i = lines.index("rotation_matrix")
    R = np.array([[float(v) for v in lines[i + k].split()] for k in (1, 2, 3)])
    fields = dict(l.split(" ", 1) for l in lines if " " in l and not l.startswith(("#", " ")))
    return R, fields


def test_register_writes_record(clouds, tmp_path, capsys):
    out = tmp_path / "rec.txt"
    code = cli.main(["register", "--source", str(clouds / "a.ply"), "--target", str(clouds / "a.ply"),
                     "--epochs", "3", "--seed", "4", "--out", str(out)])
    assert code == 0
    R, fields = parse_record(out.read_text())
    assert fields["seed"] == "4" and fields["epochs"] == "3" and fields["mode"] == "joint"
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert len(fields["rotation_vector"].split()) == 3
    assert "final_critic_loss" in fields and "final_generator_loss" in fields
    assert out.read_text().splitlines()[-1].startswith("wall_time_s")


def test_record_uses_17_significant_digits(clouds, capsys):
    cli.main(["icp", "--source", str(clouds / "a.ply"), "--target", str(clouds / "a.xyz")])
    text = capsys.readouterr().out
    R, fields = parse_record(text)
    assert fields["method"] == "icp"
    row = text.splitlines()[text.splitlines().index("rotation_matrix") + 1].split()
    assert all(float("%.17g" % float(v)) == float(v) for v in row)


def test_config_file_and_flag_layering(clouds, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("n_epochs = 2\nseed = 1\nmode = joint\n")
    assert cli.main(["register", "--source", str(clouds / "a.ply"), "--target", str(clouds / "a.ply"),
                     "--config", str(cfg), "--seed", "9", "--mode", "two-phase"]) == 0
    _, fields = parse_record(capsys.readouterr().out)
    assert fields["seed"] == "9" and fields["mode"] == "rotation_then_translation"
    assert fields["epochs"] == "4"


def test_register_is_byte_reproducible(clouds, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.txt"
        cli.main(["register", "--source", str(clouds / "a.ply"), "--target", str(clouds / "a.xyz"),
                  "--epochs", "5", "--seed", "3", "--out", str(out)])
        outs.append(strip_wall_time(out.read_text()))
    assert outs[0] == outs[1]


@pytest.mark.parametrize("argv", [
    ["register", "--source", "missing.ply", "--target", "missing.ply"],
    ["icp", "--source", str(DATA / "golden_big_endian.ply"), "--target", str(DATA / "golden_ascii.ply")],
])
def test_input_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2
    err = capsys.readouterr().err
    assert "error" in err
    if "missing.ply" in argv:
        assert "missing.ply" in err


def test_bad_config_exit_2(clouds, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_rate = 3\n")
    argv = ["register", "--source", str(clouds / "a.ply"), "--target", str(clouds / "a.ply"), "--config", str(cfg)]
    assert cli.main(argv) == 2


def test_numeric_abort_exit_3(clouds, monkeypatch):
    def boom(*a, **kw):
        raise cli.NumericalAbort("synthetic", [])

    monkeypatch.setattr(cli, "register", boom)
    assert cli.main(["register", "--source", str(clouds / "a.ply"), "--target", str(clouds / "a.ply")]) == 3


def test_benchmark_level_zero(clouds, tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "rotation_sweep", "levels": [0], "trials_per_level": 2,
                                "methods": ["adversarial", "icp"], "train": {"n_epochs": 0}}))
    out = tmp_path / "res.csv"
    assert cli.main(["benchmark", "--source", str(clouds / "a.ply"), "--config", str(spec), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "method,level,trial,angular_error_deg,translation_error,success,epochs,wall_time_s"
    assert len(rows) == 5
    assert all(r.split(",")[5] == "true" for r in rows[1:])
    assert "level" in capsys.readouterr().out


def test_benchmark_malformed_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text("[1, 2")
    assert cli.main(["benchmark", "--config", str(spec)]) == 2
    spec.write_text(json.dumps({"kind": "rotation_sweep", "levels": [500]}))
    assert cli.main(["benchmark", "--config", str(spec)]) == 2


def test_selfcheck_passes(capsys):
    assert cli.main(["selfcheck"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith(("ok", "FAIL"))]
    assert len(lines) >= 6


def test_selfcheck_detects_injected_gradient_fault(monkeypatch, capsys):
    real = C.backward_params

    def faulty(net, batch, cot):
        g = real(net, batch, cot)
        g.flat[:] = g.flat + 1e-2
        return g

    monkeypatch.setattr(C, "backward_params", faulty)
    assert cli.main(["selfcheck"]) == 1
    captured = capsys.readouterr()
    assert "FAIL critic.parameter_gradient" in captured.out
    assert "critic.parameter_gradient" in captured.err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "advreg", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "register" in out.stdout
