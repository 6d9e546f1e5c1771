import json

import numpy as np
import pytest

from acgibbs.cli import run_cli
from acgibbs.path_domain import Grid
from acgibbs.persistence import load_json, save_paths


def _out(capsys):
    return json.loads(capsys.readouterr().out)


def test_constants(capsys, tmp_path):
    assert run_cli(["constants", "--out-dir", str(tmp_path)]) == 0
    out = _out(capsys)
    assert abs(out["c0"] - 2 * 2 ** 0.5 / 3) < 1e-8
    assert out["profile"]["tanh_sup_error"] < 1e-6
    assert (tmp_path / "constants.json").exists() and (tmp_path / "profile.dat").exists()


def test_oracle_parity(capsys):
    rc = run_cli(["oracle", "--event", "parity", "--eps", "0.2", "--L", "2", "--dx", "0.1"])
    assert rc == 0
    assert _out(capsys)["prob"] == 0.0


def test_sample_writes_archive(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epsilon": 0.2, "L": 1.0, "dx": 0.1, "block": 5, "sweeps": 60,
                               "burn_in": 10, "thin": 5, "chains": 2}))
    rc = run_cli(["sample", "--config", str(cfg), "--seed", "3", "--out-dir", str(tmp_path)])
    assert rc == 0
    assert _out(capsys)["paths"] == 20
    assert (tmp_path / "ensemble.acp").exists()


def test_minimize_constraint(capsys):
    rc = run_cli(["minimize", "--constraint", "wasted", "--L", "6", "--ell", "4", "--dx", "0.1",
                  "--u-plus", "-1"])
    assert rc == 0
    assert 0.5 < _out(capsys)["gap"] < 2 * 2 ** 0.5 / 3


def test_experiment_and_report(capsys, tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"epsilons": [0.2], "dx": 0.1, "options": {"sweep_n": 2}}))
    out = tmp_path / "results"
    assert run_cli(["experiment", "ld_check", "--config", str(cfg), "--out-dir",
                    str(out)]) == 0
    capsys.readouterr()
    assert run_cli(["report", "--out-dir", str(out)]) == 0
    assert _out(capsys)["results"] == 1
    assert (out / "tables" / "summary.csv").exists()
    # a tampered point record makes report refuse
    pts = sorted((out / "points").glob("*.json"))
    rec = load_json(pts[0])
    rec["config_hash"] = "0" * 16
    pts[0].write_text(json.dumps(rec))
    assert run_cli(["report", "--out-dir", str(out)]) == 2


@pytest.mark.parametrize("argv,code", [
    (["frobnicate"], 64),
    (["sample", "--eps", "nan-ish"], 64),
    ([], 64),
    (["sample", "--eps", "-1"], 2),
    (["experiment", "nope"], 2),
    (["sample", "--config", "/nonexistent.json"], 2),
])
def test_exit_codes(argv, code, capsys):
    assert run_cli(argv) == code


def test_corrupt_archive_exit_code(tmp_path, capsys):
    f = tmp_path / "bad.acp"
    g = Grid.symmetric(1, 0.1)
    save_paths(f, np.zeros((4, g.n + 2)), g)
    f.write_bytes(f.read_bytes()[:-3])
    assert run_cli(["reflect-test", "--archive", str(f)]) == 3


def test_thread_env_override(monkeypatch, capsys):
    monkeypatch.setenv("AC_GIBBS_THREADS", "zero")
    assert run_cli(["minimize", "--lemma", "2.2"]) == 2
