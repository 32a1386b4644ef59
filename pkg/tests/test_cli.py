import json
import re
from pathlib import Path

import numpy as np
import pytest

from santalo_lab.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def last_json(out):
    start = out.index("{")
    return json.loads(out[start:])


def test_cm_value_and_branch(capsys):
    code, out = run(capsys, "cm", "--q", "1.5", "--n", "2")
    assert code == 0
    assert out.splitlines()[0].startswith("0.375")
    assert "mixed" in out.splitlines()[0]


def test_bs_eval_gaussian(capsys):
    code, out = run(capsys, "bs-eval", "--p", "2", "--q", "2", "--n", "1",
                    "--phi", "gaussian", "--classical")
    assert code == 0
    doc = last_json(out)
    assert abs(doc["payload"]["report"]["value"] - 2 * np.pi) < 1e-2


def test_needle_r0(capsys):
    code, out = run(capsys, "needle", "--R", "0")
    assert code == 0
    assert abs(float(out.splitlines()[0]) - np.pi / 2) < 2e-3


def test_counterexample_exit_semantics(capsys):
    code, _ = run(capsys, "counterexample", "--p", "1.5", "--q", "1.5", "--n", "2")
    assert code == 0          # found violation = success
    code2, _ = run(capsys, "counterexample", "--p", "3", "--q", "3", "--n", "2")
    assert code2 == 1         # sharp regime: no violation to find


def test_validation_exit_code(capsys):
    code, _ = run(capsys, "kko", "--p", "0.5", "--q", "2", "--n", "2")
    assert code == 2          # p <= 1 is rejected by the potential

def test_spectral_and_kko(tmp_path, capsys):
    code, out = run(capsys, "spectral", "--q", "2", "--n", "2", "--p", "2",
                    "--trials", "8", "--out", str(tmp_path), "--format", "csv")
    assert code == 0
    assert (tmp_path / "spectral.json").exists()
    code2, out2 = run(capsys, "kko", "--p", "2", "--q", "2", "--n", "2",
                      "--body", "square", "--count", "1")
    assert code2 == 0
    doc = last_json(out2)
    assert not doc["payload"]["violation"]


def test_json_determinism(tmp_path, capsys):
    argv = ["bs-eval", "--p", "2", "--q", "2", "--n", "1", "--phi", "random",
            "--seed", "11", "--classical"]
    _, out1 = run(capsys, *argv)
    _, out2 = run(capsys, *argv)
    strip = lambda s: re.sub(r'"timestamp": "[^"]*"', '"timestamp": null', s)
    assert strip(out1) == strip(out2)
    doc = last_json(out1)
    assert "config_hash" in doc and "version" in doc


def test_config_file_defaults(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[cm]\nq = 4.0\nn = 3\n")
    code, out = run(capsys, "--config", str(cfg), "cm")
    assert code == 0
    assert out.splitlines()[0].startswith("0.333")


def test_symmetrize_cli(capsys):
    code, out = run(capsys, "symmetrize", "--phi", "random", "--seed", "5",
                    "--plan", "0,1", "--resolution", "96")
    assert code == 0
    doc = last_json(out)
    assert not doc["payload"]["violation"]


def test_maximize_cli(tmp_path, capsys):
    code, out = run(capsys, "maximize", "--classical", "--n", "1",
                    "--resolution", "1024", "--tolerance", "1e-7",
                    "--out", str(tmp_path))
    assert code == 0
    doc = last_json(out)
    assert doc["payload"]["converged"]
    assert doc["payload"]["quadratic_fit_residual"] < 1e-3
    assert (tmp_path / "maximize_trace.csv").exists()


def test_conjugate_cli(tmp_path, capsys):
    code, out = run(capsys, "conjugate", "--phi", "gaussian", "--n", "1",
                    "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "primal.bin").exists()
    assert (tmp_path / "dual.bin.json").exists()
