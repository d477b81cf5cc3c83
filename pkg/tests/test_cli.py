import json
from pathlib import Path

import numpy as np
import pytest

from mgstab.checks import run_checks
from mgstab.cli import main
from mgstab.io import read_csv
from mgstab.model import DgParams, MicrogridConfig, build_simplified_model, config_to_dict, table1
from mgstab.simulator import trace_columns


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def write_config(tmp_path, cfg_dict):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg_dict))
    return str(path)


def test_analyze_stable(tmp_path, capsys):
    assert run(tmp_path, "analyze", "--fixture", "table1", "--m-base", "2.5e-3", "--n-base", "5e-3", "--static") == 0
    out = capsys.readouterr().out
    assert "dynamic  stable" in out and "static   stable" in out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "analyze"
    for path in manifest["outputs"]:
        assert Path(path).exists()
    _, header, rows = read_csv(tmp_path / "eigen_dynamic.csv")
    assert len(rows) == 15 and sum(r[3] == "True" for r in rows) == 1


def test_analyze_unstable_gain(tmp_path):
    assert run(tmp_path, "analyze", "--fixture", "table1", "--m-base", "12.5e-3") == 2


@pytest.mark.xfail(strict=True, reason="dynamic model is still stable at m-base 8.5e-3 with the default set values")
def test_analyze_reference_unstable_case(tmp_path):
    assert run(tmp_path, "analyze", "--fixture", "table1", "--m-base", "8.5e-3", "--n-base", "5e-3") == 2


def test_zero_droop_gain_is_config_error(tmp_path, capsys):
    raw = config_to_dict(table1())
    raw["dgs"][0]["m"] = 0.0
    assert run(tmp_path, "analyze", "--config", write_config(tmp_path, raw)) == 1
    assert "dgs[0].m must be > 0" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["--fixture", "table1", "--config", "x.json"]])
def test_missing_or_ambiguous_source(tmp_path, argv):
    assert run(tmp_path, "analyze", *argv) == 1


def test_unreadable_config(tmp_path, capsys):
    assert run(tmp_path, "analyze", "--config", str(tmp_path / "nope.json")) == 1
    (tmp_path / "bad.json").write_text("{not json")
    assert run(tmp_path, "analyze", "--config", str(tmp_path / "bad.json")) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_simulate_zero_horizon(tmp_path):
    assert run(tmp_path, "simulate", "--fixture", "table1", "--t-end", "0") == 0
    _, header, rows = read_csv(tmp_path / "trace.csv")
    assert header == trace_columns(3) and rows == []


def test_simulate_stable_settles(tmp_path):
    # five filter time constants
    assert run(tmp_path, "simulate", "--fixture", "table1", "--t-end", str(5 / 31.85), "--stride", "50") == 0
    _, header, rows = read_csv(tmp_path / "trace.csv")
    data = np.array(rows, dtype=float)
    w = data[:, [header.index(f"omega_{k}") for k in (1, 2, 3)]]
    dev = np.abs(w - w[-1].mean())
    assert dev[-1].max() < dev[:5].max()


def test_simulate_divergence_exit_code(tmp_path, capsys):
    code = run(tmp_path, "simulate", "--fixture", "table1", "--m-base", "12.5e-3", "--t-end", "2",
               "--perturbation", "1e-2", "--stride", "200")
    assert code == 3
    comments, _, _ = read_csv(tmp_path / "trace.csv")
    assert any(c.startswith("diverged_at=") for c in comments)
    assert "diverged at" in capsys.readouterr().out


def test_check_passes(tmp_path, capsys):
    assert run(tmp_path, "check", "--fixture", "table1", "--horizon", "0.2") == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS  fd_jacobian" in out


def test_check_unloaded_network(tmp_path, capsys):
    raw = config_to_dict(table1())
    raw["loads"] = []
    assert run(tmp_path, "check", "--config", write_config(tmp_path, raw)) == 0
    assert "skip" in capsys.readouterr().out


def test_fault_injection_is_caught():
    model = build_simplified_model(table1())

    def corrupt(coeffs):
        coeffs[1].k[12] *= 1.01
        return coeffs

    results = {r.name: r for r in run_checks(model, coefficient_hook=corrupt, fixed_point_horizon=0.05,
                                             modal_horizon=0.05)}
    assert not results["fd_jacobian"].passed
    assert results["dual_form"].passed


def test_sweep_single_sample_matches_analyze(tmp_path):
    assert run(tmp_path / "a", "analyze", "--fixture", "table1") == 0
    assert run(tmp_path / "s", "sweep", "--fixture", "table1", "--samples", "1", "--lo", "1") == 0
    _, _, eig_rows = read_csv(tmp_path / "a" / "eigen_dynamic.csv")
    _, _, sweep_rows = read_csv(tmp_path / "s" / "sweep.csv")
    max_re = max(float(r[1]) for r in eig_rows if r[3] == "False")
    assert float(sweep_rows[0][2]) == max_re
    assert sweep_rows[0][3] == "stable"


def test_sweep_both_models(tmp_path, capsys):
    assert run(tmp_path, "sweep", "--fixture", "table1", "--models", "both", "--lo", "1", "--hi", "6",
               "--samples", "6") == 0
    assert "disagree at" in capsys.readouterr().out


def test_boundary_command(tmp_path, capsys):
    assert run(tmp_path, "boundary", "--fixture", "table1", "--lo", "1", "--hi", "6") == 0
    comments, _, rows = read_csv(tmp_path / "boundary.csv")
    s_star = float(next(c for c in comments if c.startswith("s_star=")).split()[0].split("=")[1])
    assert 4.0 < s_star < 4.5


def test_boundary_without_bracket(tmp_path, capsys):
    assert run(tmp_path, "boundary", "--fixture", "table1", "--lo", "1", "--hi", "3.4") == 1
    assert "no transition bracketed" in capsys.readouterr().err


def test_outputs_are_reproducible(tmp_path):
    for k in range(2):
        assert run(tmp_path / str(k), "analyze", "--fixture", "table1", "--static") == 0
    for name in ("equilibrium.csv", "a_sys.csv", "a_static.csv", "eigen_dynamic.csv", "eigen_static.csv"):
        assert (tmp_path / "0" / name).read_bytes() == (tmp_path / "1" / name).read_bytes()


def test_single_dg_config(tmp_path):
    cfg = MicrogridConfig(dgs=(DgParams(1e-3, 1e-3, 377.0, 180.0, 30.0, 2e-3, 0.2),),
                          loads=table1().loads)
    assert run(tmp_path, "analyze", "--config", write_config(tmp_path, config_to_dict(cfg))) == 0
