import csv
import json

import numpy as np
import pytest

from factories import random_stats
from rsris.channel import ChannelStatistics
from rsris.cli import build_parser, main
from rsris.config import ExperimentPlan, ScenarioConfig, Variant
from rsris.stats_io import load_stats, save_stats, stats_to_dict


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    obj = json.loads(lines[0])
    assert set(obj) == {"error", "exit_code", "message"}
    return obj


def write_small_scenario(tmp_path):
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(ScenarioConfig(M=2, K=2, N=4).to_dict()))
    return path


def test_help_lists_flags_and_exit_codes(capsys):
    for sub in ("optimize", "sweep", "converge"):
        with pytest.raises(SystemExit) as exc:
            main([sub, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--seed", "--Pt-dB", "--max-iters", "--rel-tol", "--out"):
            assert flag in text
        for code in ("0", "2", "3", "4", "5"):
            assert f"  {code}  " in text
    parser_text = build_parser().format_help()
    assert "exit codes" in parser_text
    with pytest.raises(SystemExit):
        main(["sweep", "--help"])
    text = capsys.readouterr().out
    for flag in ("--plan", "--variant", "--workers", "--timing"):
        assert flag in text
    with pytest.raises(SystemExit):
        main(["optimize", "--help"])
    text = capsys.readouterr().out
    for flag in ("--scenario", "--stats", "--trace", "--variant", "--mc-samples"):
        assert flag in text


def test_optimize_success(tmp_path, capsys):
    sc = write_small_scenario(tmp_path)
    code, out, err = run(capsys, "optimize", "--scenario", str(sc), "--Pt-dB", "10", "--max-iters", "5",
                         "--out", str(tmp_path / "sol.json"), "--trace", str(tmp_path / "t.csv"), "--mc-samples", "500")
    assert code == 0 and err == ""
    report = json.loads(out)
    assert report["approx"]["sum_rate"] > 0 and report["ergodic_mc"]["stderr"] > 0
    assert json.loads((tmp_path / "sol.json").read_text())["precoders"]["rows"] == 3
    assert len(list(csv.reader(open(tmp_path / "t.csv")))) == report["iterations"] + 1


@pytest.mark.parametrize("argv", [
    ["optimize", "--bogus"],
    ["optimize", "--Pt-dB", "loud"],
    ["sweep"],
    ["frobnicate"],
    [],
    ["optimize", "--variant", "stat:maybe:opt"],
    ["optimize", "--variant", "imp:rs:opt"],
    ["validate-stats"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and error_of(err)["error"] == "usage"


def test_sweep_rejects_zero_workers(tmp_path, capsys):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps(ExperimentPlan().to_dict()))
    code, _, err = run(capsys, "sweep", "--plan", str(plan), "--out", str(tmp_path / "r.csv"), "--workers", "0")
    assert code == 2 and "workers" in error_of(err)["message"]


def test_input_errors_exit_3(tmp_path, capsys):
    code, _, err = run(capsys, "optimize", "--stats", str(tmp_path / "missing.json"))
    assert code == 3 and error_of(err)["error"] == "input"
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(capsys, "validate-stats", "--stats", str(bad))[0] == 3
    bad.write_text(json.dumps({"antennas": 4}))
    code, _, err = run(capsys, "converge", "--scenario", str(bad), "--out", str(tmp_path / "t.csv"))
    assert code == 3 and "unknown scenario keys" in error_of(err)["message"]


def test_non_hermitian_statistics_exit_4(tmp_path, capsys):
    stats = random_stats(np.random.default_rng(0), 2, 2, 3)
    d = stats_to_dict(stats)
    d["R_Tx"]["data"][3] += 0.5  # imaginary part of entry (0, 1)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(d))
    code, _, err = run(capsys, "validate-stats", "--stats", str(path))
    msg = error_of(err)
    assert code == 4 and msg["error"] == "invariant"
    assert msg["message"].startswith("R_Tx")
    assert float(msg["message"].split()[-1]) == pytest.approx(0.5)


def test_degenerate_statistics_exit_5(tmp_path, capsys):
    zero = ChannelStatistics(
        C_d=np.zeros((2, 2, 2)), C_r=np.zeros((2, 2, 2)), T_bar=np.zeros((2, 2)),
        R_RIS=np.eye(2), R_Tx=np.eye(2), delta=0.0,
    )
    path = tmp_path / "zero.json"
    save_stats(zero, path)
    code, _, err = run(capsys, "optimize", "--stats", str(path))
    assert code == 5 and error_of(err)["error"] == "optimizer"


def test_validate_stats_exports_synthesised_statistics(tmp_path, capsys):
    sc = write_small_scenario(tmp_path)
    code, out, _ = run(capsys, "validate-stats", "--scenario", str(sc), "--seed", "4", "--out", str(tmp_path / "s.json"))
    assert code == 0 and json.loads(out)["valid"]
    assert load_stats(tmp_path / "s.json").N == 4
    assert run(capsys, "validate-stats", "--stats", str(tmp_path / "s.json"))[0] == 0


def test_sweep_writes_table_and_manifest(tmp_path, capsys):
    plan = ExperimentPlan(
        scenario=ScenarioConfig(M=2, K=2, N=4), Pt_grid_dB=[0.0, 10.0], n_cov_realizations=2,
        n_channel_realizations=20, variants=[Variant.parse("stat:rs:opt")], max_iters=5,
    )
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan.to_dict()))
    out = tmp_path / "r.csv"
    code, stdout, _ = run(capsys, "sweep", "--plan", str(path), "--out", str(out), "--variant", "stat:nors:rand",
                          "--Pt-dB", "5", "--seed", "9")
    assert code == 0
    rows = list(csv.reader(open(out)))
    assert rows[1][:2] == ["Stat CSI noRS + RandRIS", "5"]
    manifest = json.loads((tmp_path / "r.csv.manifest.json").read_text())
    assert manifest["plan"]["master_seed"] == 9
    first = out.read_bytes()
    run(capsys, "sweep", "--plan", str(path), "--out", str(out), "--variant", "stat:nors:rand", "--Pt-dB", "5",
        "--seed", "9", "--workers", "2")
    assert out.read_bytes() == first


def test_converge_trace_plateaus(tmp_path, capsys):
    # default scenario: K=3, M=4, N=40 at 10 dB
    out = tmp_path / "trace.csv"
    code, stdout, _ = run(capsys, "converge", "--Pt-dB", "10", "--out", str(out))
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == json.loads(stdout)["iterations"]
    rates = [float(r["sum_rate_bits"]) for r in rows]
    ref = rates[min(20, len(rates)) - 1]
    assert abs(rates[-1] - ref) <= 0.15 * ref
