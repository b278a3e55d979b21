import json
import math
from pathlib import Path

import numpy as np
import pytest

from htbandits.cli import main

GOLDEN = Path(__file__).parent / "golden"


def write_config(tmp_path, name="cfg.json", **overrides):
    raw = {
        "schema_version": 1,
        "policy": {"id": "bobw_mab"},
        "environment": {
            "regime": "stochastic_mab",
            "epsilon": 1.5,
            "sigma": 1.0,
            "noise": {"kind": "pareto", "shape": 3.0, "scale": 0.25},
            "means": [0.1, 0.3],
        },
        "horizon": 300,
        "repetitions": 2,
        "base_seed": 9,
        "checkpoints": [100, 300],
    }
    raw.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def test_run_smoke_and_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    csv_lines = (tmp_path / "out.csv").read_text().splitlines()
    assert csv_lines[0] == (
        "run_id,policy,regime,epsilon,sigma,T_checkpoint,mean_regret,stderr,"
        "violations_total"
    )
    assert len(csv_lines) == 3  # header + 2 checkpoints
    summary = json.loads((tmp_path / "out.json").read_text())
    assert summary["violations_total"] == 0
    assert summary["config"]["horizon"] == 300


def test_outputs_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--quiet"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "77",
          "--quiet"])
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_bad_epsilon_exit_2(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        environment={
            "regime": "stochastic_mab",
            "epsilon": 2.5,
            "sigma": 1.0,
            "noise": {"kind": "pareto", "shape": 3.0, "scale": 0.25},
            "means": [0.1, 0.3],
        },
    )
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "(1, 2]" in err


def test_malformed_json_exit_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"horizon": 10,,}')
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "x")]) == 2
    assert "line" in capsys.readouterr().err


def test_doctored_policy_parameter_exit_1(tmp_path):
    cfg = write_config(
        tmp_path,
        policy={"id": "bobw_linear", "params": {"beta1": 1e-3}},
        environment={
            "regime": "stochastic_linear",
            "epsilon": 1.5,
            "sigma": 1.0,
            "noise": {"kind": "bounded", "shape": 0.5, "scale": 0.4},
            "theta": [0.3],
            "features": [[0.0], [1.0]],
        },
    )
    out = tmp_path / "doctored"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 1
    summary = json.loads((tmp_path / "doctored.json").read_text())
    assert len(summary["failures"]) == 2
    assert "invariant_violations" in summary


def test_uncertified_environment_exit_2(tmp_path):
    cfg = write_config(
        tmp_path,
        environment={
            "regime": "stochastic_mab",
            "epsilon": 1.5,
            "sigma": 1.0,
            "noise": {"kind": "pareto", "shape": 3.0, "scale": 2.5},
            "means": [0.1, 0.3],
        },
    )
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_validate_moments(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["validate-moments", "--config", str(cfg), "--mc-draws", "100000"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert all(r["certified"] and r["mc_ok"] for r in report["arms"])
    assert all(r["certificate"] <= 1.0 + 1e-9 for r in report["arms"])

    doctored = write_config(
        tmp_path,
        name="doctored.json",
        environment={
            "regime": "stochastic_mab",
            "epsilon": 1.5,
            "sigma": 1.0,
            "noise": {"kind": "pareto", "shape": 3.0, "scale": 2.5},
            "means": [0.1, 0.3],
        },
    )
    assert main(["validate-moments", "--config", str(doctored), "--quiet",
                 "--mc-draws", "10000"]) == 1


def test_validate_zero_noise_certificate_is_mean_power(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        environment={
            "regime": "stochastic_mab",
            "epsilon": 1.5,
            "sigma": 1.0,
            "noise": {"kind": "bounded", "shape": 0.0, "scale": 1.0},
            "means": [0.25, 0.5],
        },
    )
    assert main(["validate-moments", "--config", str(cfg), "--mc-draws", "1000"]) == 0
    report = json.loads(capsys.readouterr().out)
    certs = [r["certificate"] for r in report["arms"]]
    want = [2**0.5 * 0.25**1.5, 2**0.5 * 0.5**1.5]
    assert certs == pytest.approx(want, rel=1e-12)


def test_check_design(tmp_path, capsys):
    path = tmp_path / "phi.csv"
    path.write_text("1.0,0.0\n0.0,1.0\n0.7,0.7\n")
    assert main(["check-design", "--config", str(path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["g_optimal"]["certified"]
    assert report["centered"]["certified"]
    assert report["g_optimal"]["max_leverage"] <= 2 * 1.001
    # header-carrying CSV needs the flag
    path2 = tmp_path / "phi2.csv"
    path2.write_text("x,y\n1.0,0.0\n0.0,1.0\n0.7,0.7\n")
    assert main(["check-design", "--config", str(path2), "--header", "--quiet"]) == 0


def test_check_design_affine_degenerate(tmp_path, capsys):
    path = tmp_path / "line.csv"
    path.write_text("1.0,0.0\n0.5,0.5\n0.0,1.0\n")
    assert main(["check-design", "--config", str(path)]) == 1
    report = json.loads(capsys.readouterr().out)
    assert "AffinelyDegenerate" in report["centered"]["error"]


def test_sweep_csv(tmp_path):
    cfg = write_config(tmp_path, repetitions=2)
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(cfg), "--out", str(out),
                 "--horizons", "64,128,256", "--quiet"])
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 4
    header = lines[0].split(",")
    i_t = header.index("T")
    i_reg = header.index("mean_regret")
    i_pow = header.index("ratio_t_pow")
    i_log = header.index("ratio_log_t")
    for line in lines[1:]:
        cells = line.split(",")
        t = int(cells[i_t])
        reg = float(cells[i_reg])
        # ratio columns recompute from the regret column
        assert float(cells[i_pow]) == pytest.approx(reg / t ** (1 / 1.5), rel=1e-12)
        assert float(cells[i_log]) == pytest.approx(reg / math.log(t), rel=1e-12)
    # identical seeds across sweep rows: rerunning reproduces the file
    main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sweep2"),
          "--horizons", "64,128,256", "--quiet"])
    assert (tmp_path / "sweep.csv").read_bytes() == (tmp_path / "sweep2.csv").read_bytes()


@pytest.mark.parametrize("alg", [1, 2, 3])
def test_golden_trace_replays_bit_exactly(tmp_path, alg):
    cfg = GOLDEN / f"alg{alg}_trace_config.json"
    out = tmp_path / f"alg{alg}.jsonl"
    assert main(["trace", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    assert out.read_bytes() == (GOLDEN / f"alg{alg}_trace.jsonl").read_bytes()


def test_golden_alg1_round1_hand_derived():
    """Round 1 of the recorded MAB trace against hand-executed pseudocode.

    K=2, eps=2, sigma=1: beta_1 = 16 sqrt(2); q_1 uniform; q* = 1/2;
    s_a = (1-1/2) (1/2)^(-1/2) beta/8 = 2; gamma = 1 * 2 * 2^-2 = 1/2;
    p_1 = (1/2, 1/2).  The recorded draw lands on arm 1 with scripted loss
    0.4: raw = (0, 0.4/0.5) = (0, 0.8), kept since 0.8 <= 2;
    b_a = 1 * (1/2)^(1-2) * 2^(1-2) = 1.
    """
    rec = json.loads((GOLDEN / "alg1_trace.jsonl").read_text().splitlines()[0])
    assert rec["beta"] == pytest.approx(16 * math.sqrt(2), rel=1e-15)
    assert rec["q"] == [0.5, 0.5]
    assert rec["p"] == [0.5, 0.5]
    assert rec["gamma"] == pytest.approx(0.5, abs=1e-12)
    assert rec["clip_thresholds"] == pytest.approx([2.0, 2.0], rel=1e-12)
    assert rec["chosen_arm"] == 1
    assert rec["observed_loss"] == 0.4
    assert rec["clipped_estimate"] == pytest.approx([0.0, 0.8], abs=1e-15)
    assert rec["bonus"] == pytest.approx([1.0, 1.0], rel=1e-12)
    # entropy of the uniform iterate: 2 (sqrt(1/2)*2 - 1) = 2 (sqrt 2 - 1)
    assert rec["entropy"] == pytest.approx(2 * (math.sqrt(2) - 1), rel=1e-12)


def test_golden_alg2_round1_hand_derived():
    """Round 1 of the linear trace: T=8 gives beta = sqrt(8/ln 2),
    gamma = 4/beta^2, s = beta/2; the design is a Dirac on the arm with
    feature 1, so p = ((1-gamma)/2, (1-gamma)/2 + gamma)."""
    rec = json.loads((GOLDEN / "alg2_trace.jsonl").read_text().splitlines()[0])
    beta = math.sqrt(8 / math.log(2))
    gamma = 4 / beta**2
    assert rec["beta"] == pytest.approx(beta, rel=1e-12)
    assert rec["gamma"] == pytest.approx(gamma, rel=1e-12)
    assert rec["q"] == [0.5, 0.5]
    assert rec["p"] == pytest.approx(
        [(1 - gamma) * 0.5, (1 - gamma) * 0.5 + gamma], rel=1e-12
    )
    assert rec["clip_thresholds"] == pytest.approx([beta / 2] * 2, rel=1e-12)
    if rec["chosen_arm"] == 0:
        # zero feature: the estimate vector vanishes identically
        assert rec["clipped_estimate"] == [0.0, 0.0]
    p1 = (1 - gamma) * 0.5 + gamma
    # bonuses: arm 0 has zero leverage; arm 1 leverage 1/p_1
    assert rec["bonus"][0] == 0.0
    assert rec["bonus"][1] == pytest.approx((2 / beta) / p1, rel=1e-12)


def test_golden_alg3_round1_hand_derived():
    """Round 1 of the adaptive linear trace, alpha = 0.51 at eps = 2.

    beta_1 = 32/(0.49) * 0.5^0.49; gamma_1 = 256/0.49^2 / beta_1^2 * 0.5^0.98;
    s = 0.49 * beta_1 * 0.5^-0.49 / 8; centered design (1/2, 1/2).
    """
    rec = json.loads((GOLDEN / "alg3_trace.jsonl").read_text().splitlines()[0])
    alpha = 0.51
    one_m = 1 - alpha
    beta1 = 32.0 / one_m * 0.5**one_m
    gamma1 = 256.0 * one_m**-2 * beta1**-2 * 0.5 ** (2 * one_m)
    s1 = one_m * beta1 * 0.5 ** (alpha - 1) / 8
    assert rec["beta"] == pytest.approx(beta1, rel=1e-12)
    assert rec["q"] == [0.5, 0.5]
    assert rec["gamma"] == pytest.approx(gamma1, rel=1e-12)
    assert rec["clip_thresholds"] == pytest.approx([s1, s1], rel=1e-12)
    assert rec["p"] == pytest.approx([0.5, 0.5], abs=1e-9)
    # w_1 = 1 * 0.49^-2 * 1 * 0.5^(2*0.49); z_1 uses 1 - max p = 1/2
    assert rec["w"] == pytest.approx(one_m**-2 * 0.5 ** (2 * one_m), rel=1e-9)
    z1 = one_m ** (1 - 2.0) * 0.5 ** ((2.0 - 1) * one_m) * (1 - rec["p"][1]) ** 0.0
    assert rec["z"] == pytest.approx(z1, rel=1e-9)
    # mu = 1/2, V = 1/4: the chosen arm's centered feature is +/- 1/2, so the
    # raw estimate is -/+ 2 * loss * (1/2) = (-loss, +loss) up to sign
    loss = rec["observed_loss"]
    est = np.asarray(rec["clipped_estimate"])
    sign = 1.0 if rec["chosen_arm"] == 1 else -1.0
    assert est == pytest.approx([-sign * loss, sign * loss], rel=1e-9)


def test_trace_replay_from_prior_output(tmp_path):
    cfg = write_config(tmp_path, horizon=5, checkpoints=[5])
    out = tmp_path / "run"
    main(["run", "--config", str(cfg), "--out", str(out), "--quiet"])
    t1 = tmp_path / "t1.jsonl"
    t2 = tmp_path / "t2.jsonl"
    assert main(["trace", "--config", str(cfg), "--out", str(t1), "--quiet"]) == 0
    # replay from the run's summary JSON (echoed config) must match
    assert main(["trace", "--config", str(tmp_path / "run.json"), "--out", str(t2),
                 "--quiet"]) == 0
    assert t1.read_bytes() == t2.read_bytes()
