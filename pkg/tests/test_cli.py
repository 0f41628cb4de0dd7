import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from qhengine.cli import fmt, main


def _table(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _meta(text):
    out = {}
    for ln in text.splitlines():
        if ln.startswith("# "):
            k, v = ln[2:].split(": ", 1)
            out[k] = json.loads(v)
    return out


def _run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def _config(tmp_path, d, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "true" and fmt(3) == "3" and fmt(None) == "nan" and fmt("x") == "x"


def test_steady_default(tmp_path):
    code, out = _run(tmp_path, "steady")
    assert code == 0
    text = (out / "steady.csv").read_text()
    rows = _table(text)
    assert [r["engine"] for r in rows] == ["continuous", "two_stroke", "four_stroke", "two_field"]
    assert all(float(r["first_law_residual"]) <= 1e-10 for r in rows)
    meta = _meta(text)
    assert meta["config"]["model"]["levels"] == [-2.0, -0.5, 0.5, 2.0]
    assert meta["config"]["model"]["omega"] == 1.5
    states = json.loads((out / "steady_states.json").read_text())
    assert "left edge" in states["metadata"]["cycle_start"]
    assert set(states["states"]) == {r["engine"] for r in rows}


def test_steady_without_drive(tmp_path):
    code, out = _run(tmp_path, "steady", "--config", _config(tmp_path, {"model": {"epsilon": 0}}))
    assert code == 0
    for r in _table((out / "steady.csv").read_text()):
        assert float(r["W"]) == 0
        assert abs(float(r["J_c"])) < 1e-15 and abs(float(r["J_h"])) < 1e-15


def test_malformed_config_exit_2_no_output(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"epsilon": 1e-4,}}')
    code, out = _run(tmp_path, "steady", "--config", str(bad))
    assert code == 2 and not out.exists()
    assert "bad.json:1:" in capsys.readouterr().err


def test_invalid_field_exit_2(tmp_path, capsys):
    code, out = _run(tmp_path, "steady", "--config",
                     _config(tmp_path, {"model": {"t_h": 0.5}}))
    assert code == 2 and not out.exists()
    assert "T_h > T_c" in capsys.readouterr().err


def test_unknown_preset_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["steady", "--preset", "fig99"])
    assert exc.value.code == 2


def test_stdout_and_json_format(capsys):
    assert main(["steady", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["rows"]) == 4 and doc["metadata"]["config"]["output"]["format"] == "json"


def test_output_is_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    cfg = _config(tmp_path, {"output": {"dir": None}})
    assert main(["sweep", "--config", cfg, "--out", str(a)]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(b), "--jobs", "2"]) == 0
    ta = (a / "sweep_action.csv").read_text().replace(str(a), "")
    tb = (b / "sweep_action.csv").read_text().replace(str(b), "")
    assert ta == tb


def test_transient_zero_cycles_header_only(tmp_path):
    code, out = _run(tmp_path, "transient", "--config",
                     _config(tmp_path, {"schedule": {"n_cycles": 0}}))
    assert code == 0
    lines = [ln for ln in (out / "transient.csv").read_text().splitlines()
             if not ln.startswith("#")]
    assert lines == ["engine,cycle,time,s,W,Q_c,Q_h,work_output"]


@pytest.mark.parametrize("preset, within", [("fig6a", True), ("fig6b", False)])
def test_transient_presets(tmp_path, preset, within):
    code, out = _run(tmp_path, "transient", "--preset", preset)
    assert code == 0
    text = (out / "transient.csv").read_text()
    meta = _meta(text)
    assert meta["within_tolerance"] is within
    rows = _table(text)
    assert len(rows) == 4 * 10
    assert rows[0]["engine"] == "continuous" and rows[0]["cycle"] == "1"


def test_sweep_single_point(tmp_path):
    cfg = _config(tmp_path, {"schedule": {"engines": ["continuous"]},
                             "experiment": {"n_points": 1}})
    code, out = _run(tmp_path, "sweep", "--config", cfg)
    assert code == 0
    assert len(_table((out / "sweep_action.csv").read_text())) == 1


def test_sweep_gamma_axis(tmp_path):
    cfg = _config(tmp_path, {"schedule": {"engines": ["continuous"]},
                             "experiment": {"gamma_points": 5}})
    code, out = _run(tmp_path, "sweep", "--config", cfg, "--axis", "gamma")
    assert code == 0
    rows = _table((out / "sweep_gamma.csv").read_text())
    assert [float(r["gamma"]) for r in rows] == pytest.approx(list(np.geomspace(1e-6, 1e-1, 5)))


def test_signature_columns(tmp_path):
    cfg = _config(tmp_path, {"experiment": {"m_values": [1, 3]}})
    code, out = _run(tmp_path, "signature", "--config", cfg)
    assert code == 0
    rows = _table((out / "signature.csv").read_text())
    cont = [r for r in rows if r["engine"] == "continuous" and r["dephasing"] == "complete"]
    assert all(abs(float(r["power"])) < 1e-12 for r in cont)
    b = {r["m"]: float(r["bound"]) for r in rows
         if r["engine"] == "two_stroke" and r["dephasing"] == "complete"}
    assert b["3"] == pytest.approx(3 * b["1"])


def test_verify_default_passes(tmp_path):
    code, out = _run(tmp_path, "verify")
    assert code == 0
    doc = json.loads((out / "verify.json").read_text())
    assert doc["passed"] and doc["failed"] == []
    assert {c["name"] for c in doc["checks"]} == {
        "trace_preservation", "structure", "cptp", "strang", "srt", "first_law", "passivity"}


def test_verify_reports_injected_fault(tmp_path, capsys):
    cfg = _config(tmp_path, {"experiment": {"inject_fault": "trace_violation"}})
    code, out = _run(tmp_path, "verify", "--config", cfg)
    assert code == 1
    doc = json.loads((out / "verify.json").read_text())
    assert not doc["passed"]
    assert "trace_preservation" in doc["failed"]
    assert "trace_preservation" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "qhengine", "steady"], capture_output=True,
                         text=True, check=False)
    assert res.returncode == 0
    assert "first_law_residual" in res.stdout
