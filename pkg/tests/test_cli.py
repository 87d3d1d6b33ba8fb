import csv
import json

import pytest

from tdcache import cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(text.splitlines()))


def test_curve_and_envelope(capsys):
    code, out, _ = run(["curve", "--rdi", "p2", "--grid", "101"], capsys)
    assert code == 0
    data = rows(out)
    # the grid is refined at support breakpoints on top of the requested points
    assert len(data) >= 101 and data[0]["classification"] == "LinearAlpha"
    code, out, _ = run(["envelope", "--rdi", "p4"], capsys)
    assert code == 0 and set(rows(out)[0]) == {"r", "s", "t"}


def test_allocate_json(capsys, tmp_path):
    path = tmp_path / "a.json"
    assert cli.main(["allocate", "--flow", "pi2", "--target-r", "0.7", "--out", str(path)]) == 0
    data = json.loads(path.read_text())
    assert float(data["s"]) == pytest.approx(0.6)


def test_overall_curve(capsys):
    code, out, _ = run(["overall-curve", "--flow", "pi2"], capsys)
    data = rows(out)
    assert code == 0 and float(data[-1]["r_breve"]) == pytest.approx(1.0)


@pytest.mark.parametrize("model", ["erlang", "diffusion", "bound", "heavy"])
def test_blocking(model, capsys):
    load = "14" if model == "heavy" else "7"
    code, out, _ = run(["blocking", "--L", "10", "--load", load, "--model", model], capsys)
    assert code == 0
    val = json.loads(out)["blocking"]
    assert 0 < val < 1
    if model == "erlang":
        assert val == pytest.approx(0.07874, abs=1e-5)


def test_optimize_global_flags_anywhere(capsys):
    code, out, _ = run(["--seed", "4", "optimize", "--flow", "pi2", "--L", "10", "--lambda", "10"], capsys)
    assert code == 0 and json.loads(out)["s_star"] == pytest.approx(0.888332, abs=1e-6)
    code, out, _ = run(["optimize", "--flow", "pi2", "--L", "10", "--seed", "4"], capsys)
    assert code == 0


def test_qc_verify(capsys):
    code, out, _ = run(["qc-verify", "--max-L", "40"], capsys)
    data = json.loads(out)
    assert code == 0 and data["nonnegative"] and data["witness"] is None


def test_simulate_with_ecdf(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"flow": "pi2", "arrivals": "h2", "buffer": 10, "s": 0.8, "n_arrivals": 20000}))
    code, out, _ = run(["simulate", "--config", str(cfg), "--record-ecdf", "--seed", "2"], capsys)
    data = json.loads(out)
    assert code == 0
    assert 0 < data["hit_ratio"] < 1 and data["blocking_prob"] > 0
    assert data["ecdf"]["F"][-1] == 1.0


def test_control_modes(capsys):
    code, out, _ = run(["control", "--mode", "infinite", "--flow", "pi2", "--target-S", "6000"], capsys)
    assert code == 0 and rows(out)[0]["epoch"] == "0"
    code, out, _ = run(["control", "--mode", "finite", "--flow", "pi2", "--L", "5", "--window", "10000"], capsys)
    assert code == 0 and "R_hat" in out.splitlines()[0]


def test_control_not_converged_exit_2(capsys):
    code, _, err = run(["control", "--mode", "infinite", "--flow", "pi2", "--target-S", "6000", "--epochs", "1"], capsys)
    assert code == 2 and "converge" in err


def test_validate_subset(capsys):
    code, out, err = run(["validate", "--only", "A3", "A13"], capsys)
    assert code == 0 and json.loads(out)["passed"]
    assert "A3" in err


def test_validate_failure_exit_2(capsys):
    code, out, _ = run(["validate", "--only", "A6"], capsys)
    assert code == 2 and not json.loads(out)["passed"]


@pytest.mark.parametrize(
    "argv",
    [
        ["curve", "--rdi", "p42"],
        ["allocate", "--flow", "pi9", "--target-r", "0.5"],
        ["allocate", "--flow", "pi2", "--target-r", "1.5"],
        ["simulate", "--config", "/nonexistent.json"],
        ["control", "--mode", "finite", "--flow", "pi2"],
        ["control", "--mode", "infinite", "--flow", "pi2"],
        ["validate", "--only", "A99"],
        ["blocking", "--L", "-1", "--load", "1"],
        ["blocking", "--L", "10", "--load", "7", "--model", "heavy"],
    ],
)
def test_config_errors_exit_3(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 3 and "config error" in err


def test_bad_simulation_schema(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"flow": "pi2"}))
    assert run(["simulate", "--config", str(cfg)], capsys)[0] == 3


def test_reproduce_writes_csv(tmp_path, capsys, monkeypatch):
    from tdcache import reproduce

    monkeypatch.setattr(reproduce, "SIM_ARRIVALS", 10_000)
    code, out, _ = run(["reproduce", "fig5", "--no-check", "--out", str(tmp_path)], capsys)
    assert code == 0
    data = rows((tmp_path / "fig5.csv").read_text())
    assert len(data) == 60 and set(data[0]) == set(reproduce.PRESETS["fig5"].columns)
