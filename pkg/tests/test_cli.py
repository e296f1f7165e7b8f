import json
import os

import numpy as np
import pytest

from kreslingcap.cli import main
from kreslingcap.config import Config, load_config
from kreslingcap.geometry import read_mesh


def test_generate_stl(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path)]) == 0
    verts, faces, _ = read_mesh((tmp_path / "kresling.stl").read_bytes(), "stl")
    ext = verts.max(axis=0) - verts.min(axis=0)
    assert np.allclose(ext, [45.6, 45.6, 60.0], atol=0.1)
    assert "extents" in capsys.readouterr().out


def test_generate_obj(tmp_path):
    assert main(["generate", "--format", "obj", "--out", str(tmp_path)]) == 0
    verts, faces, _ = read_mesh((tmp_path / "kresling.obj").read_bytes(), "obj")
    assert verts.shape == (458, 3) and faces.shape == (912, 3)


def test_missing_config_exit_2(tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml"), "--out", str(out)]) == 2
    assert not out.exists()
    assert "not found" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("schema_version: 1\ngeometry.wings: 2\n")
    assert main(["generate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("argv", [[], ["fly"], ["simulate", "--delta", "abc"], ["protocol", "--offsets"],
                                  ["protocol", "--seed", "-3"], ["simulate", "--points", "1"]])
def test_usage_errors_exit_1(argv, tmp_path):
    with pytest.raises(SystemExit) as info:
        code = main(argv + ["--out", str(tmp_path)] if argv else argv)
        raise SystemExit(code)
    assert info.value.code == 1


def test_simulate_writes_curve(tmp_path):
    assert main(["simulate", "--points", "4", "--theta-max", "9", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "torque_curve.csv").read_text().strip().split("\n")
    assert lines[0] == "theta_deg,delta_mm,torque_Nmm,force_N,energy_Nmm,residual,valid_flag"
    assert len(lines) == 5
    assert (tmp_path / "torque_curve.svg").exists()


def test_signal_subcommand(tmp_path):
    tl = tmp_path / "t.csv"
    t = np.arange(30) * 0.1
    c = 0.1 + 0.2 * np.abs(np.sin(t))
    tl.write_text("t_s,C_pF\n" + "".join(f"{a},{b}\n" for a, b in zip(t, c)))
    assert main(["signal", str(tl), "--window", "10", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "signal.csv").read_text().strip().split("\n")
    assert rows[0] == "t_s,counts,normalized,derivative" and len(rows) == 31
    vals = np.array([float(r.split(",")[2]) for r in rows[1:]])
    assert vals.min() >= 0 and vals.max() <= 100


def test_signal_bad_timeline_exit_2(tmp_path):
    tl = tmp_path / "t.csv"
    tl.write_text("time,C\n0,1\n")
    assert main(["signal", str(tl), "--out", str(tmp_path)]) == 2


def test_protocol_json_summary(tmp_path):
    argv = ["protocol", "--offsets", "0", "--cycles", "2", "--theta-max", "6", "--no-plots", "--json-summary",
            "--out", str(tmp_path)]
    assert main(argv) == 0
    data = json.loads((tmp_path / "summary.json").read_text())
    assert [row["delta_mm"] for row in data["rows"]] == [0.0]
    assert (tmp_path / "protocol_p0.csv").exists() and (tmp_path / "summary.csv").exists()


@pytest.mark.slow
def test_calibrate_then_capacitance(tmp_path):
    cfg_path = tmp_path / "cal.yaml"
    assert main(["calibrate", "--write", str(cfg_path), "--out", str(tmp_path)]) == 0
    cal = load_config(cfg_path)
    # the shipped defaults are exactly what calibrate pins
    assert cal.model == Config().model
    assert cal.electrodes.area_scale == pytest.approx(Config().electrodes.area_scale, rel=1e-9)
    assert main(["capacitance", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    rows = [r.split(",") for r in (tmp_path / "capacitance_curve.csv").read_text().strip().split("\n")[1:]]
    total = [r for r in rows if r[0] == "total"]
    assert float(total[0][3]) == pytest.approx(0.1, rel=0.2)
    assert os.path.exists(tmp_path / "capacitance_curve.svg")
