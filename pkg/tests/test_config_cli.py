import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fluxsim import cli
from fluxsim.config import ConfigError, load_config, parse_config
from fluxsim.dynamics import IntegrationError

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

MINIMAL = """
[circuit]
ec = 0.25
el = 0.5
phi_ext = 0.495
n_fock = 60
"""


def test_all_shipped_configs_parse():
    paths = sorted(CONFIGS.glob("*.toml"))
    assert len(paths) >= 10
    for p in paths:
        load_config(p)


def test_unknown_key_reports_file_and_line():
    text = MINIMAL + "bogus = 3\n"
    with pytest.raises(ConfigError, match=r"run\.toml:7.*unknown key 'bogus'"):
        parse_config(text, "run.toml")


def test_unknown_section_and_empty_grid():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="empty"):
        parse_config(MINIMAL + '[spectrum]\nsweep_field = "ej"\nsweep = []\n')


def test_ej_key_sets_dc_flux():
    cfg = parse_config(MINIMAL + "ej = 3.0\n")
    assert cfg.circuit.ej == pytest.approx(3.0)
    with pytest.raises(ConfigError, match="either ej or phi_dc"):
        parse_config(MINIMAL + "ej = 3.0\nphi_dc = 0.1\n")


def test_grid_tables_become_arrays():
    cfg = parse_config(MINIMAL + '[spectrum]\nsweep_field = "ej"\nsweep = { start = 1.0, stop = 2.0, num = 3 }\n')
    assert np.allclose(cfg.spectrum.sweep, [1.0, 1.5, 2.0])


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_exit_code_config_error(tmp_path):
    p = _write(tmp_path, MINIMAL + "bogus = 1\n")
    assert cli.main(["spectrum", "--config", str(p), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert cli.main(["spectrum", "--config", str(tmp_path / "missing.toml")]) == cli.EXIT_CONFIG


def test_exit_code_numerical_failure(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise IntegrationError("norm drift 1e-3")

    monkeypatch.setattr(cli, "cmd_spectrum", boom)
    p = _write(tmp_path, MINIMAL)
    assert cli.main(["spectrum", "--config", str(p), "--out", str(tmp_path / "o")]) == cli.EXIT_NUMERIC


def _run(*args, cwd):
    return subprocess.run([sys.executable, "-m", "fluxsim.cli", *args], cwd=cwd, capture_output=True, text=True)


def test_spectrum_csv_byte_identical_rerun(tmp_path):
    cfg = str(CONFIGS / "tunable_ej_ej_sweep.toml")
    outs = []
    for k, workers in enumerate(("1", "2")):
        out = tmp_path / f"run{k}"
        r = _run("spectrum", "--config", cfg, "--out", str(out), "--quick", "--workers", workers, cwd=tmp_path)
        assert r.returncode == 0, r.stderr
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    assert "sweep.csv" in names
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
    assert b"\r\n" not in (outs[0] / "sweep.csv").read_bytes()


def test_coherence_point_mode(tmp_path):
    p = _write(tmp_path, MINIMAL + 'ej = 1.0\n[coherence]\nmode = "point"\n')
    assert cli.main(["coherence", "--config", str(p), "--out", str(tmp_path / "o"), "--quick"]) == 0
    d = json.loads((tmp_path / "o" / "point.json").read_text())
    assert d["t1_ns"] > 0 and d["t2_ns"] > 0
    assert d["ej"] == pytest.approx(1.0)


def test_optimize_single_cell_smoke(tmp_path):
    text = """
[circuit]
ec = 0.25
el = 0.5
phi_ext = 0.5
n_fock = 60

[pulse]
fwhm = 8.0
l_flat = 2.0
baseline = 12.0
amplitude = 0.963

[optimize]
target = "X_pi"
x = "fwhm"
x_values = [8.0]
y = "amplitude"
y_values = [0.963]
refine = false
levels = 10
vz_grid = 16
"""
    p = _write(tmp_path, text)
    assert cli.main(["optimize", "--config", str(p), "--out", str(tmp_path / "o"), "--workers", "1"]) == 0
    best = json.loads((tmp_path / "o" / "best.json").read_text())
    assert best["grid_best_infidelity"] < 1e-3
    assert best["grid_best"] == {"fwhm": 8.0, "amplitude": 0.963}
    rows = (tmp_path / "o" / "heatmap.csv").read_text().splitlines()
    assert len(rows) == 2
