import csv
import json

import pytest

from evatriage import cli, estimation
from evatriage.distributions import gev_sample

from conftest import REFERENCE_MLE, synthetic_days, write_arrivals, write_values

SIM_CONFIG = """\
[simulation]
horizon_days = 60
capacity_per_day = 10.0
baseline_rate = 6.0
shock_prob = 0.15
seed = 1

[simulation.policy]
kind = "FCFS"
"""


def run(argv, capsys=None):
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    return code


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def fit_file(tmp_path):
    doc = {"schema": 1, "fits": {"MLE": {"params": REFERENCE_MLE.as_dict()}}}
    path = tmp_path / "fit.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def sim_config(tmp_path):
    path = tmp_path / "sim.toml"
    path.write_text(SIM_CONFIG)
    return path


def test_block_defaults_give_forty_maxima(tmp_path):
    src = tmp_path / "days.csv"
    write_arrivals(src, synthetic_days(476))
    assert run(["block", src, "--out-dir", tmp_path / "out"]) == 0
    assert len(read_csv(tmp_path / "out" / "maxima.csv")) == 40
    assert len(read_csv(tmp_path / "out" / "subperiods.csv")) == 158
    stats = json.loads((tmp_path / "out" / "stats.json").read_text())
    assert stats["schema"] == 1 and stats["n_blocks"] == 40
    assert stats["maxima"]["n"] == 40 and stats["parent"]["n"] == 158
    assert (tmp_path / "out" / "maxima.csv.manifest.json").exists()


def test_block_small_drop_example(tmp_path):
    src = tmp_path / "days.csv"
    write_arrivals(src, list(range(1, 13)))
    assert run(["block", src, "--subperiod-days", 3, "--per-block", 2, "--partial", "drop", "--out-dir", tmp_path]) == 0
    assert [float(r["value"]) for r in read_csv(tmp_path / "maxima.csv")] == [15.0, 33.0]


@pytest.mark.parametrize("content, fragment", [
    ("", "line 1"),
    ("day,count\n1,3\n2,x\n", "line 3"),
    ("day,count\n1,3\n1,4\n", "line 3"),
    ("day,count\n1,-2\n", "line 2"),
    ("when,count\n1,2\n", "line 1"),
])
def test_block_malformed_input(tmp_path, capsys, content, fragment):
    src = tmp_path / "bad.csv"
    src.write_text(content)
    assert run(["block", src, "--out-dir", tmp_path]) == 2
    assert fragment in capsys.readouterr().err


def test_block_bad_flags(tmp_path):
    src = tmp_path / "days.csv"
    write_arrivals(src, [1, 2, 3])
    assert run(["block", src, "--partial", "keep"]) == 1
    assert run(["block", src, "--subperiod-days", 0]) == 1
    assert run(["block", src, "--per-block", "two"]) == 1


def test_fit_both_methods(tmp_path):
    data = tmp_path / "maxima.csv"
    write_values(data, gev_sample(REFERENCE_MLE, 2000, seed=42))
    out = tmp_path / "fit.json"
    assert run(["fit", data, "-o", out]) == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == 1 and set(doc["fits"]) == {"MLE", "PWM"}
    mle = doc["fits"]["MLE"]
    assert mle["params"]["shape"] == pytest.approx(0.8903, abs=0.10)
    assert mle["params"]["scale"] == pytest.approx(4.2832, rel=0.10)
    assert mle["params"]["location"] == pytest.approx(8.3540, abs=0.5)
    assert set(mle) >= {"method", "params", "se", "ci95", "nll", "n", "warnings"}
    assert doc["fits"]["PWM"]["se"] is None


def test_fit_too_few_maxima(tmp_path):
    data = tmp_path / "maxima.csv"
    write_values(data, [1.0, 2.0, 3.0])
    assert run(["fit", data]) == 2


def test_fit_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(estimation, "MAX_ITER", 3)
    data = tmp_path / "maxima.csv"
    write_values(data, gev_sample(REFERENCE_MLE, 50, seed=1))
    assert run(["fit", data, "--method", "mle"]) == 3
    assert "best point" in capsys.readouterr().err


def test_return_level_periods(tmp_path, fit_file):
    out = tmp_path / "rl.csv"
    assert run(["return-level", fit_file, "--periods", "10,2", "-o", out]) == 0
    rows = read_csv(out)
    assert [float(r["T"]) for r in rows] == [2.0, 10.0]
    assert [float(r["z"]) for r in rows] == pytest.approx([10.21, 39.22], abs=0.01)


def test_return_level_default_grid_monotone(tmp_path, fit_file):
    out = tmp_path / "rl.csv"
    assert run(["return-level", fit_file, "-o", out]) == 0
    rows = read_csv(out)
    t = [float(r["T"]) for r in rows]
    z = [float(r["z"]) for r in rows]
    assert len(rows) == 100 and t[0] == pytest.approx(1.1) and t[-1] == pytest.approx(500)
    assert all(a < b for a, b in zip(t, t[1:])) and all(a < b for a, b in zip(z, z[1:]))


@pytest.mark.parametrize("periods", ["1", "0.5,10", "ten", ""])
def test_return_level_bad_periods(fit_file, periods):
    assert run(["return-level", fit_file, "--periods", periods]) == 1


def test_return_level_bad_fit_file(tmp_path):
    bad = tmp_path / "fit.json"
    bad.write_text("{}")
    assert run(["return-level", bad]) == 2


def test_compare_reference_row(tmp_path, fit_file):
    parent, maxima, out = tmp_path / "p.csv", tmp_path / "m.csv", tmp_path / "c.csv"
    write_values(parent, [float(v) for v in synthetic_days(158, seed=3)])
    write_values(maxima, gev_sample(REFERENCE_MLE, 40, seed=3))
    argv = ["compare", parent, maxima, "--fit", fit_file, "--parent-mean", 11.84, "--parent-sd", 17.44, "-o", out]
    assert run(argv) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["z", "ecdf", "gev", "normal", "poisson"]
    first = rows[0]
    assert float(first["z"]) == 25.0
    assert float(first["gev"]) == pytest.approx(0.8298, abs=0.005)
    assert float(first["normal"]) == pytest.approx(0.7747, abs=0.005)
    assert float(first["poisson"]) == pytest.approx(0.99987, abs=5e-4)
    for col in ("ecdf", "gev", "normal", "poisson"):
        vals = [float(r[col]) for r in rows]
        assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_compare_single_point(tmp_path):
    parent, maxima, out = tmp_path / "p.csv", tmp_path / "m.csv", tmp_path / "c.csv"
    write_values(parent, [float(v) for v in synthetic_days(158, seed=3)])
    write_values(maxima, gev_sample(REFERENCE_MLE, 40, seed=3))
    assert run(["compare", parent, maxima, "--points", 1, "-o", out]) == 0
    assert len(read_csv(out)) == 1
    assert run(["compare", parent, maxima, "--points", 0]) == 1
    assert run(["compare", parent, maxima, "--parent-mean", 3]) == 1


def test_gof_hand_example(tmp_path):
    out = tmp_path / "gof.json"
    argv = ["gof", "--observed", "30,8,2", "--probs", "0.70,0.25,0.05", "--n", 40, "--dof-adjust", 0, "-o", out]
    assert run(argv) == 0
    rep = json.loads(out.read_text())["report"]
    assert rep["chi2"] == pytest.approx(0.542857, abs=1e-6)
    assert rep["dof"] == 2
    assert rep["p_value"] == pytest.approx(0.762290, abs=1e-6)


def test_gof_perfect_fit(tmp_path):
    out = tmp_path / "gof.json"
    assert run(["gof", "--observed", "20,10,10", "--probs", "0.5,0.25,0.25", "--dof-adjust", 0, "-o", out]) == 0
    assert json.loads(out.read_text())["report"]["p_value"] == 1.0


def test_gof_from_fit_file(tmp_path, fit_file):
    maxima, out = tmp_path / "m.csv", tmp_path / "gof.json"
    write_values(maxima, gev_sample(REFERENCE_MLE, 200, seed=8))
    assert run(["gof", maxima, fit_file, "--edges", "6,9,13,20,40", "-o", out]) == 0
    rep = json.loads(out.read_text())["report"]
    assert rep["dof"] == 2 and sum(rep["observed"]) == 200
    assert rep["bin_edges"][0] == "-inf" and rep["bin_edges"][-1] == "inf"


def test_gof_refuses_cumulative_edges(tmp_path, fit_file, capsys):
    maxima = tmp_path / "m.csv"
    write_values(maxima, gev_sample(REFERENCE_MLE, 40, seed=8))
    code = run(["gof", maxima, fit_file, "--edges", "0-25,0-50,0-75,0-100"])
    err = capsys.readouterr().err
    assert code == 2
    assert "cumulative" in err and "cannot be recomputed" in err


def test_gof_edge_and_dof_errors(tmp_path, fit_file):
    maxima = tmp_path / "m.csv"
    write_values(maxima, gev_sample(REFERENCE_MLE, 40, seed=8))
    assert run(["gof", maxima, fit_file, "--edges", "50,25"]) == 2
    assert run(["gof", maxima, fit_file, "--edges", "25,50"]) == 1
    assert run(["gof", maxima, fit_file]) == 1
    assert run(["gof", "--observed", "5,5"]) == 1


def test_simulate_report(tmp_path, sim_config):
    out, trace = tmp_path / "r.json", tmp_path / "t.csv"
    assert run(["simulate", sim_config, "--seed", 7, "--trace", trace, "-o", out]) == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == 1 and doc["manifest"]["seed"] == 7
    rep = doc["report"]
    assert rep["processed"] + rep["discarded"] + rep["final_backlog"] == rep["total_arrivals"]
    assert len(read_csv(trace)) == 60


def test_simulate_seed_sources(tmp_path, sim_config, monkeypatch):
    outs = {}
    for name, argv, env in [("flag", ["--seed", 7], "9"), ("env", [], "7"), ("file", [], None)]:
        if env is None:
            monkeypatch.delenv(cli.SEED_ENV, raising=False)
        else:
            monkeypatch.setenv(cli.SEED_ENV, env)
        out = tmp_path / f"{name}.json"
        assert run(["simulate", sim_config, *argv, "-o", out]) == 0
        outs[name] = json.loads(out.read_text())
    assert outs["flag"]["report"] == outs["env"]["report"]
    assert outs["file"]["manifest"]["seed"] == 1
    monkeypatch.setenv(cli.SEED_ENV, "abc")
    assert run(["simulate", sim_config]) == 1


def test_simulate_all_policies(tmp_path):
    cfg = tmp_path / "overload.toml"
    cfg.write_text("horizon_days = 90\nbaseline_rate = 12.0\nshock_prob = 0.2\nseed = 4\n"
                   "[attributes]\nproc_time_per_defect = 0.6\n")
    out = tmp_path / "cmp.json"
    assert run(["simulate", cfg, "--all-policies", "--replications", 3, "-o", out]) == 0
    rows = {r["policy"]: r for r in json.loads(out.read_text())["comparison"]}
    assert len(rows) == 7
    assert rows["GGGN"]["processed"]["mean"] >= rows["FCFS"]["processed"]["mean"]


def test_simulate_errors(tmp_path, sim_config, capsys):
    assert run(["simulate", sim_config, "--policy", "SJF"]) == 1
    assert run(["simulate", sim_config, "--policy", "wilson"]) == 2
    assert "wilson_threshold" in capsys.readouterr().err
    assert run(["simulate", sim_config, "--policy", "wilson", "--wilson-threshold", 0.4]) == 0
    bad = tmp_path / "bad.toml"
    bad.write_text("horizon_days = 0\n")
    assert run(["simulate", bad]) == 2
    assert "horizon_days" in capsys.readouterr().err
    bad.write_text("horizon_days = [\n")
    assert run(["simulate", bad]) == 2
    bad.write_text("colour = 3\n")
    assert run(["simulate", bad]) == 2
    assert run(["simulate", tmp_path / "missing.toml"]) == 2
    assert run(["simulate", sim_config, "--replications", 0]) == 1


def test_usage_errors_exit_one():
    assert run([]) == 1
    assert run(["frobnicate"]) == 1
    assert run(["--version"]) == 0
