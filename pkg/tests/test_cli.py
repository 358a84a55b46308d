import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sqzring.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, run
from sqzring.table import resolve_workers

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """\
[device]
radius_um = 50
coupler_length_um = 12
alpha_db_per_cm = -1.0
kappa_c2 = 0.05
n_eff = 1.66
a_eff_um2 = 0.18
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def invoke(tmp_path, command, text, *extra, out="out.csv"):
    cfg = write(tmp_path, text)
    target = tmp_path / out
    code = run([command, "--config", str(cfg), "--out", str(target), "--workers", "1", *extra])
    return code, target


def read_csv(path):
    text = path.read_bytes().decode()
    assert text.endswith("\r\n")
    header, *body = csv.reader(io.StringIO(text, newline=""))
    return header, [dict(zip(header, line)) for line in body]


def test_rates_command(tmp_path):
    code, out = invoke(tmp_path, "rates", BASE + "[grids]\neta_esc = 0.75, 0.8, 0.85, 0.9\n")
    assert code == EXIT_OK
    header, rows = read_csv(out)
    assert header[:3] == ["n_eff", "a_eff_um2", "kappa_c2"]
    assert [float(r["eta_esc"]) for r in rows] == pytest.approx([0.75, 0.8, 0.85, 0.9], abs=1e-12)
    meta = json.loads((tmp_path / "out.csv.meta.json").read_text())
    assert meta["command"] == "rates" and len(meta["config_sha256"]) == 64


def test_rates_interaction_strength_with_solved_mode(tmp_path):
    code, out = invoke(tmp_path, "rates", (CONFIGS / "nominal.ini").read_text())
    assert code == EXIT_OK
    _, rows = read_csv(out)
    for r in rows:
        assert float(r["xi_per_s"]) == pytest.approx(117.0, rel=0.10)


def test_lossless_ring_has_unit_escape_efficiency(tmp_path):
    code, out = invoke(tmp_path, "rates", BASE.replace("-1.0", "0.0"))
    assert code == EXIT_OK
    _, rows = read_csv(out)
    assert float(rows[0]["eta_esc"]) == 1.0
    assert float(rows[0]["gamma_0_per_s"]) == 0.0


def test_stability_map_command(tmp_path):
    text = BASE + "[grids]\ndelta_over_gamma = linspace(0, 4, 9)\neps_over_gamma = linspace(0, 3, 7)\n"
    code, out = invoke(tmp_path, "stability-map", text)
    assert code == EXIT_OK
    _, rows = read_csv(out)
    assert len(rows) == 63
    for r in rows:
        d, e = float(r["delta_over_gamma"]), float(r["eps_over_gamma"])
        if math.isclose(d, e):
            assert float(r["re_lambda_plus_over_gamma"]) == pytest.approx(-1.0)
            assert r["stable"] == "true"
    contours = json.loads((tmp_path / "out.contours.json").read_text())
    assert "lambda_plus_zero" in contours


def test_spectrum_command(tmp_path):
    text = BASE + "[drive]\nepsilon_over_gamma = 0.5\n[grids]\ntheta_over_pi = 0, 0.25, 0.5\nomega_hz = 1e6, 1e8, 1e12\n"
    code, out = invoke(tmp_path, "spectrum", text)
    assert code == EXIT_OK
    _, rows = read_csv(out)
    assert len(rows) == 9
    far = [float(r["s_db"]) for r in rows if float(r["omega_hz"]) == 1e12]
    assert np.allclose(far, 0.0, atol=1e-3)


def test_spectrum_default_frequency_grid(tmp_path):
    text = BASE + "[drive]\nepsilon_over_gamma = 0.5\n[grids]\ntheta_over_pi = 0.5\n"
    code, out = invoke(tmp_path, "spectrum", text)
    assert code == EXIT_OK
    _, rows = read_csv(out)
    f = [float(r["omega_hz"]) for r in rows]
    assert len(f) == 401 and f[-1] / f[0] == pytest.approx(1e4)


def test_tomography_zero_power_is_shot_noise(tmp_path):
    text = BASE + "[grids]\npower_mw = 0, 50, 100\ntheta_over_pi = linspace(0, 1, 8, open)\neta_esc = 0.8, 0.9\n"
    code, out = invoke(tmp_path, "tomography", text)
    assert code == EXIT_OK
    _, rows = read_csv(out)
    assert len(rows) == 2 * 3 * 8
    zero = [r for r in rows if float(r["power_mw"]) == 0.0]
    assert zero and all(r["s_db"] in ("0.0000", "-0.0000") for r in zero)
    assert sorted({float(r["eta_esc"]) for r in rows}) == pytest.approx([0.8, 0.9])


def test_purity_flags_points_above_cap(tmp_path):
    text = BASE + "[drive]\npower_cap_mw = 100\n[grids]\npower_mw = linspace(0, 150, 4)\n"
    code, out = invoke(tmp_path, "purity", text)
    assert code == EXIT_OK
    _, rows = read_csv(out)
    for r in rows:
        assert (r["over_cap"] == "true") == (float(r["power_mw"]) > 100)
        assert 0 < float(r["purity"]) <= 1 + 1e-12
        assert float(r["laser_power_mw"]) == pytest.approx(float(r["power_mw"]) / 0.84)
    assert float(rows[0]["purity"]) == pytest.approx(1.0)


def test_bandwidth_command(tmp_path):
    code, out = invoke(tmp_path, "bandwidth", (CONFIGS / "bandwidth.ini").read_text())
    assert code == EXIT_OK
    _, rows = read_csv(out)
    assert len(rows) == 8
    assert {r["status"] for r in rows} <= {"ok", "no-squeezing", "unbounded"}
    assert all(float(r["eps_over_gamma"]) == pytest.approx(0.5) for r in rows)


def test_modes_single_point(tmp_path):
    text = BASE + "[grids]\nwidth_nm = 500\nthickness_nm = 250\n"
    code, out = invoke(tmp_path, "modes", text)
    assert code == EXIT_OK
    _, rows = read_csv(out)
    assert len(rows) == 1
    assert float(rows[0]["a_eff_um2"]) == pytest.approx(0.18, rel=0.15)
    assert rows[0]["te1_guided"] == "false" and rows[0]["error"] == ""


@pytest.mark.slow
def test_modes_width_scan_summary(tmp_path):
    code, out = invoke(tmp_path, "modes", (CONFIGS / "modes.ini").read_text(), "--workers", "2")
    assert code == EXIT_OK
    _, rows = read_csv(out)
    assert len(rows) == 13
    summary = json.loads((tmp_path / "out.csv.meta.json").read_text())["summary"][0]
    assert summary["a_eff_interior_minimum"] is True
    assert 300 < summary["a_eff_min_width_nm"] < 900
    assert summary["te1_cutoff_width_nm"] == pytest.approx(600, rel=0.15)


SWEEP = BASE.replace("kappa_c2 = 0.05\n", "eta_esc = 0.8\n") + """\
[grids]
power_mw = linspace(0, 100, 11)
[sweep]
outputs = gamma_per_s, xi_per_s, eta_esc, best_squeezing_db
device.eta_esc = 0.7, 0.8, 0.9
device.alpha_db_per_cm = -1.0, -0.5
"""


def test_sweep_row_count_and_order(tmp_path):
    code, out = invoke(tmp_path, "sweep", SWEEP)
    assert code == EXIT_OK
    header, rows = read_csv(out)
    assert header == ["device.eta_esc", "device.alpha_db_per_cm", "gamma_per_s", "xi_per_s",
                      "eta_esc", "best_squeezing_db", "error"]
    keys = [(float(r["device.eta_esc"]), float(r["device.alpha_db_per_cm"])) for r in rows]
    assert keys == [(e, a) for e in (0.7, 0.8, 0.9) for a in (-1.0, -0.5)]
    for r in rows:
        assert float(r["eta_esc"]) == pytest.approx(float(r["device.eta_esc"]), rel=1e-12)
        assert r["error"] == ""


def test_single_point_sweep_matches_direct_command(tmp_path):
    sweep = BASE + "[sweep]\noutputs = gamma_per_s, xi_per_s, finesse, tau_s\ndevice.kappa_c2 = 0.05\n"
    code, s_out = invoke(tmp_path, "sweep", sweep, out="sweep.csv")
    assert code == EXIT_OK
    code, r_out = invoke(tmp_path, "rates", BASE, out="rates.csv")
    assert code == EXIT_OK
    (_, [s_row]), (_, [r_row]) = read_csv(s_out), read_csv(r_out)
    for name in ("gamma_per_s", "xi_per_s", "finesse", "tau_s"):
        assert s_row[name] == r_row[name]


def test_sweep_isolates_failing_rows(tmp_path):
    text = SWEEP.replace("device.eta_esc = 0.7, 0.8, 0.9", "device.eta_esc = 0.5, 1.5")
    code, out = invoke(tmp_path, "sweep", text)
    assert code == EXIT_OK
    _, rows = read_csv(out)
    good = [r for r in rows if float(r["device.eta_esc"]) == 0.5]
    bad = [r for r in rows if float(r["device.eta_esc"]) == 1.5]
    assert all(r["error"] == "" and r["gamma_per_s"] != "nan" for r in good)
    assert all(r["error"].startswith("config") and r["gamma_per_s"] == "nan" for r in bad)


def test_sweep_rejects_unknown_output(tmp_path):
    code, _ = invoke(tmp_path, "sweep", SWEEP.replace("gamma_per_s,", "warp_factor,"))
    assert code == EXIT_CONFIG


def test_rerun_from_embedded_config(tmp_path):
    code, out = invoke(tmp_path, "purity", BASE + "[grids]\npower_mw = 0, 20, 40\n", out="a.csv")
    assert code == EXIT_OK
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    replay = write(tmp_path, meta["config"], "replay.ini")
    assert run(["purity", "--config", str(replay), "--out", str(tmp_path / "b.csv"),
                "--workers", "1"]) == EXIT_OK
    assert (tmp_path / "b.csv").read_bytes() == out.read_bytes()
    meta_b = json.loads((tmp_path / "b.csv.meta.json").read_text())
    assert meta_b["config_sha256"] == meta["config_sha256"]


def test_json_output(tmp_path):
    code, out = invoke(tmp_path, "bandwidth", BASE + "[drive]\nepsilon_over_gamma = 0.01\n",
                       out="bw.json")
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert [c["name"] for c in doc["schema"]][:2] == ["eta_esc", "threshold_db"]
    assert doc["metadata"]["command"] == "bandwidth"
    assert doc["rows"][0][-1] == "no-squeezing"


def test_stdout_output(tmp_path, capsys):
    cfg = write(tmp_path, BASE)
    assert run(["rates", "--config", str(cfg), "--format", "json", "--workers", "1"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["schema"][0]["name"] == "n_eff"


@pytest.mark.parametrize("text, code", [
    (BASE + "bogus_key = 1\n", EXIT_CONFIG),
    (BASE.replace("kappa_c2 = 0.05", "kappa_c2 = 0.05\neta_esc = 0.8"), EXIT_CONFIG),
    ("[device]\nradius_um = 50\n", EXIT_CONFIG),
    (BASE + "[drive]\npolicy = fixed\ndetuning_over_gamma = 2\nepsilon_over_gamma = 1.2\n", EXIT_NUMERIC),
])
def test_exit_codes(tmp_path, text, code):
    assert invoke(tmp_path, "spectrum", text)[0] == code


def test_io_errors(tmp_path):
    assert run(["rates", "--config", str(tmp_path / "missing.ini")]) == EXIT_IO
    cfg = write(tmp_path, BASE)
    assert run(["rates", "--config", str(cfg), "--out", str(tmp_path / "no" / "dir.csv"),
                "--workers", "1"]) == EXIT_IO


def test_worker_count_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SQZRING_WORKERS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.setenv("SQZRING_WORKERS", "many")
    assert run(["rates", "--config", str(write(tmp_path, BASE))]) == EXIT_CONFIG
    monkeypatch.delenv("SQZRING_WORKERS")
    assert run(["rates", "--config", str(write(tmp_path, BASE)), "--workers", "0"]) == EXIT_CONFIG


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, BASE)
    proc = subprocess.run([sys.executable, "-m", "sqzring.cli", "rates", "--config", str(cfg),
                           "--workers", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("n_eff,")
    bad = subprocess.run([sys.executable, "-m", "sqzring.cli", "rates", "--config",
                          str(write(tmp_path, "[device]\n", "bad.ini"))], capture_output=True)
    assert bad.returncode == 2
