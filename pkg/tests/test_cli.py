import json
import subprocess
import sys

import numpy as np
import pytest

from droprl.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["gen-instance", "--benchmark", "--out", "inst.json"]) == 0
    return tmp_path


def test_gen_instance_random(tmp_path, capsys):
    assert main(["gen-instance", "--seed", "3", "--S", "4", "--d", "5", "--out", str(tmp_path / "i.json")]) == 0
    doc = json.loads((tmp_path / "i.json").read_text())
    assert (doc["S"], doc["d"]) == (4, 5)
    assert main(["gen-instance", "--seed", "3", "--S", "4", "--d", "5"]) == 0
    assert json.loads(capsys.readouterr().out)["phi"] == doc["phi"]


def test_data_fit_oracle_pipeline(workdir, capsys):
    assert main(["gen-data", "--instance", "inst.json", "--K", "600", "--seed", "1", "--out", "d.jsonl"]) == 0
    assert len((workdir / "d.jsonl").read_text().splitlines()) == 600 * 4
    assert main(["fit", "--instance", "inst.json", "--data", "d.jsonl", "--gamma0", "0.2",
                 "--out", "fit.json"]) == 0
    fit = json.loads((workdir / "fit.json").read_text())
    assert np.asarray(fit["Q"]).shape == (4, 3, 2) and fit["gamma0"] == 0.2
    assert main(["fit", "--instance", "inst.json", "--data", "d.jsonl", "--solver", "drop-v",
                 "--out", "fitv.json"]) == 0
    assert "sigma2_min" in json.loads((workdir / "fitv.json").read_text())["per_step"][0]
    assert main(["oracle", "--instance", "inst.json"]) == 0
    assert json.loads(capsys.readouterr().out)["subopt"] == 0.0
    (workdir / "pi.json").write_text(json.dumps(fit["pi"]))
    assert main(["oracle", "--instance", "inst.json", "--policy", "pi.json"]) == 0
    assert json.loads(capsys.readouterr().out)["subopt"] >= -1e-10


def test_run_sweep_plot(workdir, capsys):
    (workdir / "cfg.json").write_text(json.dumps({
        "instance": "inst.json", "K": [300, 1200, 4800], "seeds": list(range(10)),
        "gamma0": 0.3, "timing": False,
    }))
    assert main(["run", "--config", "cfg.json", "--out", "r.csv"]) == 0
    assert main(["run", "--config", "cfg.json", "--jobs", "2", "--out", "r2.csv"]) == 0
    assert (workdir / "r.csv").read_bytes() == (workdir / "r2.csv").read_bytes()
    assert len((workdir / "r.csv").read_text().splitlines()) == 31
    capsys.readouterr()
    assert main(["sweep", "--csv", "r.csv"]) == 0
    assert "drop" in json.loads(capsys.readouterr().out)["slope"]
    assert main(["plot", "--csv", "r.csv", "--out", "p.svg"]) == 0
    assert (workdir / "p.svg").read_text().startswith("<?xml")


def test_run_flags_override_config(workdir):
    assert main(["run", "--instance", "benchmark", "--K", "300", "--seeds", "0,1", "--rho", "0.1,0.3",
                 "--solver", "drop,drop-v", "--no-timing", "--out", "r.csv"]) == 0
    assert len((workdir / "r.csv").read_text().splitlines()) == 1 + 2 * 2 * 2


def test_diag(workdir, capsys):
    assert main(["diag", "--instance", "inst.json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert set(rep) == {"kappa", "C_rob_lower_bound", "C1_lower_bound"}


def test_exit_codes(workdir):
    (workdir / "bad.json").write_text(json.dumps({"S": 1}))
    assert main(["oracle", "--instance", "bad.json"]) == 2
    (workdir / "cfg.json").write_text(json.dumps({"K": [100], "unknown_key": 1}))
    assert main(["run", "--config", "cfg.json", "--out", "r.csv"]) == 2
    (workdir / "bad.csv").write_text("a,b\n")
    assert main(["plot", "--csv", "bad.csv", "--out", "p.svg"]) == 2
    assert main(["oracle", "--instance", "missing.json"]) == 1
    assert main(["sweep", "--csv", "missing.csv"]) == 1


def test_console_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "droprl.cli", "oracle", "--instance", "inst.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["subopt"] == 0.0
    proc = subprocess.run([sys.executable, "-m", "droprl.cli", "fit"], capture_output=True, text=True)
    assert proc.returncode == 2
