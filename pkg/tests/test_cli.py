import csv
import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from pmctl.cli import main
from pmctl.trigpoly import TrigPoly

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="module")
def sin3_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sin3")
    assert main(["synth", "--config", str(CONFIGS / "sin3.json"), "--out-dir", str(d)]) == 0
    return d


def test_synth_sin3(sin3_dir):
    doc = json.loads((sin3_dir / "controller.json").read_text())
    assert doc["t_opt"] == pytest.approx(1.5 * 10.0, abs=1e-5)
    assert doc["residuals"]["passed"]
    assert doc["residuals"]["harmonic_residual"] <= 1e-6 * doc["t_opt"]
    assert doc["residuals"]["bound_peak"] <= 10.0 + 1e-6


def test_synth_triplen_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--config", CONFIGS / "triplen.json",
                       "--out-dir", tmp_path)
    assert code == 2
    msg = json.loads(err)
    assert msg["error"] == "infeasible" and msg["constraint_class"] == "cancellation"
    assert not (tmp_path / "controller.json").exists()


def test_schema_error_names_key(tmp_path, capsys):
    doc = json.loads((CONFIGS / "sin3.json").read_text())
    doc["motor"]["bogus"] = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "synth", "--config", path, "--out-dir", tmp_path)
    assert code == 4
    assert "bogus" in json.loads(err)["message"]
    del doc["motor"]["bogus"]
    doc["sim"]["dt"] = 0.01
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "synth", "--config", path, "--out-dir", tmp_path)
    assert code == 4 and "config.sim.dt" in json.loads(err)["message"]


def test_corrupt_json_and_missing_files(tmp_path, capsys):
    path = tmp_path / "corrupt.json"
    path.write_text('{"motor": {')
    assert run(capsys, "synth", "--config", path, "--out-dir", tmp_path)[0] == 4
    assert run(capsys, "synth", "--config", tmp_path / "nope.json")[0] == 4
    bad = tmp_path / "controller.json"
    bad.write_text("{}")
    code, _, err = run(capsys, "simulate", "--config", CONFIGS / "sin3.json",
                       "--controller", bad, "--out-dir", tmp_path)
    assert code == 4 and "malformed" in json.loads(err)["message"]


def test_simulate_normal_respects_current_limit(sin3_dir, tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--config", CONFIGS / "sin3.json",
                       "--controller", sin3_dir / "controller.json", "--out-dir", tmp_path)
    assert code == 0
    summary = json.loads(out)
    assert not summary["resynthesized"]
    names, data = read_csv(tmp_path / "trace.csv")
    cur = data[:, [names.index(f"i_{j}") for j in (1, 2, 3)]]
    assert np.max(np.abs(cur)) <= 10.0 + 1e-6
    assert data[-1, names.index("x2")] == pytest.approx(10.0, abs=1e-3)


def test_simulate_faulty_column_zero(sin3_dir, capsys):
    code, out, _ = run(capsys, "simulate", "--config", CONFIGS / "sin3.json",
                       "--out-dir", sin3_dir, "--scenario", "faulty:3")
    assert code == 0
    summary = json.loads(out)
    assert summary["resynthesized"]
    names, data = read_csv(Path(summary["csv"]))
    assert np.all(data[:, names.index("i_3")] == 0.0)
    assert np.max(np.abs(data[:, names.index("i_1")])) > 1.0


def test_simulate_unknown_scenario(sin3_dir, capsys):
    code, _, err = run(capsys, "simulate", "--config", CONFIGS / "sin3.json",
                       "--out-dir", sin3_dir, "--scenario", "faulty:9")
    assert code == 4


def test_deterministic_artifacts(tmp_path, capsys):
    for name in ("a", "b"):
        d = tmp_path / name
        assert run(capsys, "synth", "--config", CONFIGS / "sin3.json", "--out-dir", d)[0] == 0
        assert run(capsys, "simulate", "--config", CONFIGS / "noisy.json",
                   "--controller", d / "controller.json", "--out-dir", d, "--seed", "3")[0] == 0
    for f in ("controller.json", "trace.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_plots_written(sin3_dir, tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--config", CONFIGS / "sin3.json",
                       "--controller", sin3_dir / "controller.json", "--out-dir", tmp_path,
                       "--plots")
    assert code == 0
    png = tmp_path / "trace.png"
    assert png.exists() and png.read_bytes()[:4] == b"\x89PNG"


def test_robust_zero_noise(sin3_dir, capsys):
    code, out, _ = run(capsys, "robust", "--config", CONFIGS / "sin3.json",
                       "--out-dir", sin3_dir)
    assert code == 0
    assert json.loads(out)["eta"] == pytest.approx(0.0, abs=1e-9)


def test_robust_noisy_breakdown_and_validation(tmp_path, capsys):
    code, out, _ = run(capsys, "robust", "--config", CONFIGS / "noisy.json",
                       "--out-dir", tmp_path, "--validate", "8")
    assert code == 0
    report = json.loads((tmp_path / "robust_report.json").read_text())
    b = report["bounds"]
    assert sum(b["terms"].values()) == pytest.approx(b["eta"], rel=1e-12)
    assert b["offset_bound"] == pytest.approx(b["eta"] / b["K"])
    assert report["validation"]["passed"] and report["validation"]["n_runs"] == 8


def test_robust_gate_failure(tmp_path, capsys):
    doc = json.loads((CONFIGS / "noisy.json").read_text())
    doc["robust"]["envelope"] = 0.5          # far too small: the audit must catch it
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "robust", "--config", path, "--out-dir", tmp_path,
                       "--validate", "2")
    assert code == 3
    assert json.loads(err)["gate"] == "robust"


@pytest.mark.parametrize("name, switches", [("pwm_zero", 800), ("pwm_full", 0),
                                            ("pwm_sine", None)])
def test_pwm_configs(name, switches, tmp_path, capsys):
    code, out, _ = run(capsys, "pwm", "--config", CONFIGS / f"{name}.json",
                       "--out-dir", tmp_path)
    assert code == 0
    summary = json.loads(out)
    if switches is not None:
        assert summary["switches"] == switches
    names, data = read_csv(tmp_path / "pwm.csv")
    assert names == ["t", "u_switched", "i_filtered", "i_reference"]
    assert set(np.unique(data[:, 1])) <= {-50.0, 50.0}


def test_pwm_controller_reference(tmp_path, capsys):
    code, out, _ = run(capsys, "pwm", "--config", CONFIGS / "representative.json",
                       "--out-dir", tmp_path)
    assert code == 0
    assert json.loads(out)["coil"] == 1


def test_pwm_unrealizable(tmp_path, capsys):
    doc = json.loads((CONFIGS / "pwm_zero.json").read_text())
    doc["pwm"]["reference"]["current"] = 80.0       # 80 A * 1 ohm > 50 V rail
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "pwm", "--config", path, "--out-dir", tmp_path)
    assert code == 2 and json.loads(err)["error"] == "unrealizable"


def test_ident_roundtrip(tmp_path, capsys):
    theta = np.linspace(0, 2 * np.pi, 60, endpoint=False)
    true = TrigPoly([0.1, 0.0, 0.2], [1.0, -0.3])
    path = tmp_path / "samples.csv"
    with open(path, "w") as fh:
        fh.write("theta,value\n")
        for t, v in zip(theta, true(theta)):
            fh.write(f"{t:.17g},{v:.17g}\n")
    code, out, _ = run(capsys, "ident", path, "--degree", "2", "--out-dir", tmp_path)
    assert code == 0
    fitted = TrigPoly.from_json(json.loads((tmp_path / "fitted.json").read_text()))
    assert fitted.allclose(true, atol=1e-10)
    assert json.loads(out)["rms_residual"] < 1e-12
    code, _, err = run(capsys, "ident", path, "--degree", "40", "--out-dir", tmp_path)
    assert code == 2 and json.loads(err)["error"] == "insufficient_coverage"


@pytest.mark.skipif(shutil.which("pmctl") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["pmctl", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("synth", "simulate", "robust", "pwm", "ident"):
        assert cmd in res.stdout
