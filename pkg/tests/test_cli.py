import json
import shutil
import subprocess
import sys

import pytest

from spatial_extremes.cli import main

MARGINS = {"eta_b0": 30.0, "eta_b1": 0.05, "eta_b2": -0.1, "tau_b0": 8.0, "xi_b0": 0.1}


@pytest.fixture
def work(tmp_path, fixtures_dir):
    for name in ("stations.csv", "maxima.csv", "fit_config.json", "simulate_config.json"):
        shutil.copy(fixtures_dir / name, tmp_path / name)
    return tmp_path


def run(cmd, cfg_path, out, *extra):
    return main([cmd, "--config", str(cfg_path), "--out", str(out), *extra])


def write_cfg(d, name, cfg):
    p = d / name
    p.write_text(json.dumps(cfg))
    return p


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


CONFIGS = {
    "fit": ("fit_config.json", None),
    "simulate": ("simulate_config.json", None),
    "madogram": ("mado.json", {"stations": "stations.csv", "maxima": "maxima.csv", "n_bins": 4, "seed": 1}),
    "check": ("check.json", {"stations": "stations.csv", "maxima": "maxima.csv", "n_sim": 19, "seed": 2,
                             "model": {"family": "smith", "params": dict(MARGINS, sigma11=150.0)},
                             "area": {"radius_km": 6.0, "n_realizations": 20}}),
    "mcmc": ("mcmc.json", {"stations": "stations.csv", "maxima": "maxima.csv", "seed": 4,
                           "mcmc": {"iterations": 300, "burn_in": 100, "thin": 10}}),
}


def report_name(cmd):
    return {"fit": "fit_report.json", "simulate": "simulate_report.json", "madogram": "madogram_report.json",
            "check": "check_report.json", "mcmc": "mcmc_report.json",
            "returnmap": "returnmap_report.json"}[cmd]


def prepare(work, cmd):
    name, cfg = CONFIGS[cmd]
    return work / name if cfg is None else write_cfg(work, name, cfg)


class TestGolden:
    def test_fit_matches_golden(self, work, fixtures_dir):
        assert run("fit", work / "fit_config.json", work / "out") == 0
        got = (work / "out" / "fit_report.json").read_bytes()
        assert got == (fixtures_dir / "golden_fit_report.json").read_bytes()

    def test_manifest(self, work):
        assert run("fit", work / "fit_config.json", work / "out") == 0
        man = json.loads((work / "out" / "manifest.json").read_text())
        assert set(man["outputs"]) == {"fit_report.json"} and man["threads"] == 1
        assert man["wall_clock_seconds"] >= 0


@pytest.mark.parametrize("cmd", list(CONFIGS) + ["returnmap"])
def test_rerun_from_echo(work, cmd):
    if cmd == "returnmap":
        assert run("mcmc", prepare(work, "mcmc"), work / "chain") == 0
        cfg_path = write_cfg(work, "rm.json", {"mcmc_dir": "chain", "return_period": 25, "seed": 5,
                                               "grid": {"xlim": [0, 20], "ylim": [0, 20], "step_km": 5}})
    else:
        cfg_path = prepare(work, cmd)
    assert run(cmd, cfg_path, work / "a") == 0
    echo = json.loads((work / "a" / report_name(cmd)).read_text())["config"]
    assert "_base" not in echo and echo["command"] == cmd
    again = write_cfg(work, "echo.json", echo)
    assert run(cmd, again, work / "b") == 0
    a, b = outputs(work / "a"), outputs(work / "b")
    assert a == b and len(a) >= 1


def test_simulate_seed_repeat(work):
    cfg = work / "simulate_config.json"
    assert run("simulate", cfg, work / "a") == 0
    assert run("simulate", cfg, work / "b") == 0
    assert outputs(work / "a") == outputs(work / "b")
    assert run("simulate", cfg, work / "c", "--seed", "12") == 0
    c = outputs(work / "c")
    assert c["maxima.csv"] != outputs(work / "a")["maxima.csv"]
    assert json.loads(c["simulate_report.json"])["config"]["seed"] == 12


def test_check_outputs(work):
    assert run("check", prepare(work, "check"), work / "out") == 0
    doc = json.loads((work / "out" / "check_report.json").read_text())["check"]
    assert doc["groups"] == [["st09", "st10", "st11"]]
    assert 0 < doc["p_value_joint"] <= 1
    assert doc["area"]["n_cells"] > 0
    lines = (work / "out" / "area_T.csv").read_text().splitlines()
    assert lines[0] == "realization,T" and len(lines) == 21


class TestExitCodes:
    def test_missing_config(self, work, capsys):
        assert run("fit", work / "nope.json", work / "out") == 1
        err = json.loads(capsys.readouterr().err)
        assert err["exit_code"] == 1 and err["error"] == "ConfigError"

    def test_schema_error(self, work):
        p = write_cfg(work, "bad.json", {"stations": "stations.csv", "model": {"family": "smith"}})
        assert run("fit", p, work / "out") == 1

    def test_unknown_group_station(self, work):
        cfg = dict(CONFIGS["check"][1], groups=[["zz"]])
        assert run("check", write_cfg(work, "c.json", cfg), work / "out") == 1

    def test_returnmap_empty_samples(self, work, capsys):
        cfg = dict(CONFIGS["mcmc"][1], mcmc={"iterations": 50, "burn_in": 50})
        assert run("mcmc", write_cfg(work, "m.json", cfg), work / "chain") == 0
        rm = write_cfg(work, "rm.json", {"mcmc_dir": "chain", "return_period": 25})
        assert run("returnmap", rm, work / "out") == 1
        assert json.loads(capsys.readouterr().err)["error"] == "InsufficientDataError"

    def test_numeric_failure(self, work, capsys):
        # every observation is outside the fixed GEV support
        params = {"eta_b0": 1000.0, "eta_b1": 0.0, "eta_b2": 0.0, "tau_b0": 1.0, "tau_b1": 0.0,
                  "tau_b2": 0.0, "xi_b0": 0.1, "sigma11": 100.0}
        cfg = {"stations": "stations.csv", "maxima": "maxima.csv",
               "model": {"family": "smith", "params": params}, "fixed": sorted(params)}
        assert run("fit", write_cfg(work, "f.json", cfg), work / "out") == 2
        assert json.loads(capsys.readouterr().err)["error"] == "AllStartsFailedError"

    def test_negative_seed(self, work):
        assert run("simulate", work / "simulate_config.json", work / "out", "--seed", "-3") == 1


def test_console_entry_point(work):
    r = subprocess.run([sys.executable, "-m", "spatial_extremes.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
