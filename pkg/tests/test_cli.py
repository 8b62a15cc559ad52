import json

import pytest

from bandit_debias.cli import dispatch


@pytest.fixture
def gauss_arms(tmp_path):
    path = tmp_path / "arms.json"
    path.write_text(json.dumps([
        {"type": "gaussian", "mean": 1.0, "variance": 1.0},
        {"type": "gaussian", "mean": 1.5, "variance": 1.0},
    ]))
    return str(path)


@pytest.fixture
def bern_arms(tmp_path):
    path = tmp_path / "barms.json"
    path.write_text(json.dumps([
        {"type": "bernoulli", "p": 0.3},
        {"type": "bernoulli", "p": 0.6},
    ]))
    return str(path)


def _simulate(tmp_path, gauss_arms, policy="etc", extra=(), name="log.csv"):
    out = str(tmp_path / name)
    rc = dispatch(["simulate", "--policy", policy, *extra, "--K", "2", "--T", "100",
                   "--arms", gauss_arms, "--seed", "5", "--out", out])
    assert rc == 0
    return out


def test_simulate_writes_log_and_meta(tmp_path, gauss_arms):
    out = _simulate(tmp_path, gauss_arms, extra=["--m", "10"])
    assert (tmp_path / "log.csv").exists()
    meta = json.loads((tmp_path / "log.csv.meta.json").read_text())
    assert meta["policy"] == {"name": "etc", "m": 10}
    assert len((tmp_path / "log.csv").read_text().splitlines()) == 101


def test_debias_round_trip(tmp_path, gauss_arms):
    log = _simulate(tmp_path, gauss_arms, extra=["--m", "10"])
    out = str(tmp_path / "report.json")
    rc = dispatch(["debias", "--log", log, "--meta", log + ".meta.json",
                   "--B", "200", "--seed", "7", "--out", out])
    assert rc == 0
    report = json.loads(open(out).read())
    assert report["B"] == 200 and report["bootstrap"] == "mb"
    for k in range(2):
        assert report["corrected_mean"][k] == pytest.approx(
            report["raw_mean"][k] - report["estimated_bias"][k], abs=1e-12)
        assert report["estimated_bias"][k] < 0  # ETC arms are biased down


def test_debias_workers_bit_identical(tmp_path, gauss_arms):
    log = _simulate(tmp_path, gauss_arms, extra=["--m", "10"])
    outs = []
    for w in ("1", "3"):
        out = str(tmp_path / f"report{w}.json")
        rc = dispatch(["debias", "--log", log, "--meta", log + ".meta.json",
                       "--B", "9000", "--seed", "7", "--workers", w, "--out", out])
        assert rc == 0
        outs.append(open(out).read())
    assert outs[0] == outs[1]


def test_evaluate_ts_log(tmp_path, bern_arms):
    log = _simulate(tmp_path, bern_arms, policy="ts")
    out = str(tmp_path / "eval.json")
    rc = dispatch(["evaluate", "--log", log, "--meta", log + ".meta.json", "--out", out])
    assert rc == 0
    payload = json.loads(open(out).read())
    assert payload["propensities_defined"] is True
    assert len(payload["ipw"]) == 2 and len(payload["aipw"]) == 2


def test_evaluate_unknown_estimator(tmp_path, bern_arms):
    log = _simulate(tmp_path, bern_arms, policy="ts")
    rc = dispatch(["evaluate", "--log", log, "--meta", log + ".meta.json",
                   "--estimators", "mean,winsor", "--out", str(tmp_path / "x.json")])
    assert rc == 1


def test_theory_command(tmp_path, bern_arms):
    out = str(tmp_path / "theory.json")
    rc = dispatch(["theory", "--arms", bern_arms, "--m", "10", "--T", "100", "--out", out])
    assert rc == 0
    payload = json.loads(open(out).read())
    assert payload["profile"]["zeta"] == pytest.approx(1.2527629684953678)
    assert payload["bias_exact"]["arm1"] == pytest.approx(-0.018787962827561525)
    assert payload["bias_asymptotic"] < 0


def test_theory_out_of_range_is_exit_2(tmp_path, bern_arms):
    rc = dispatch(["theory", "--arms", bern_arms, "--mu2", "1.5",
                   "--out", str(tmp_path / "x.json")])
    assert rc == 2


def test_missing_seed_is_usage_error(tmp_path, gauss_arms):
    rc = dispatch(["simulate", "--policy", "etc", "--m", "10", "--K", "2", "--T", "100",
                   "--arms", gauss_arms, "--out", str(tmp_path / "x.csv")])
    assert rc == 1


def test_missing_policy_param(tmp_path, gauss_arms):
    rc = dispatch(["simulate", "--policy", "etc", "--K", "2", "--T", "100",
                   "--arms", gauss_arms, "--seed", "1", "--out", str(tmp_path / "x.csv")])
    assert rc == 1  # etc needs --m


def test_bad_arms_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = dispatch(["simulate", "--policy", "ucb", "--K", "2", "--T", "10",
                   "--arms", str(bad), "--seed", "1", "--out", str(tmp_path / "x.csv")])
    assert rc == 1
    rc = dispatch(["simulate", "--policy", "ucb", "--K", "2", "--T", "10",
                   "--arms", str(tmp_path / "absent.json"), "--seed", "1",
                   "--out", str(tmp_path / "x.csv")])
    assert rc == 1


def test_debias_zero_count_arm_is_exit_2(tmp_path, gauss_arms):
    # eg with epsilon 0 pins itself to one arm; its log defeats the bootstrap
    log = _simulate(tmp_path, gauss_arms, policy="eg", extra=["--epsilon", "0.0"])
    rc = dispatch(["debias", "--log", log, "--meta", log + ".meta.json",
                   "--B", "10", "--seed", "2", "--out", str(tmp_path / "r.json")])
    assert rc == 2


def test_plan_command_and_worker_invariance(tmp_path, monkeypatch):
    plan = {
        "cells": [
            {
                "name": "cell_a",
                "policy": {"name": "etc", "m": 5},
                "arms": [{"type": "bernoulli", "p": 0.3}, {"type": "bernoulli", "p": 0.6}],
                "K": 2, "T": 40, "replications": 60,
                "bootstrap": {"kind": "mb", "B": 30},
            }
        ]
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    outputs = []
    for w, sub in (("1", "w1"), ("2", "w2")):
        out_dir = tmp_path / sub
        rc = dispatch(["plan", "--plan", str(plan_path), "--seed", "99",
                       "--workers", w, "--out-dir", str(out_dir)])
        assert rc == 0
        outputs.append({
            "summary": (out_dir / "cell_a" / "summary.json").read_text(),
            "rows": (out_dir / "cell_a" / "replications.csv").read_text(),
        })
    assert outputs[0] == outputs[1]


def test_workers_env_default(tmp_path, gauss_arms, monkeypatch):
    monkeypatch.setenv("BANDIT_DEBIAS_WORKERS", "2")
    log = _simulate(tmp_path, gauss_arms, extra=["--m", "10"])
    out = str(tmp_path / "env.json")
    rc = dispatch(["debias", "--log", log, "--meta", log + ".meta.json",
                   "--B", "5000", "--seed", "7", "--out", out])
    assert rc == 0
    ref = str(tmp_path / "ref.json")
    monkeypatch.delenv("BANDIT_DEBIAS_WORKERS")
    rc = dispatch(["debias", "--log", log, "--meta", log + ".meta.json",
                   "--B", "5000", "--seed", "7", "--out", ref])
    assert rc == 0
    assert open(out).read() == open(ref).read()
