import json

import pytest
from hypothesis import given, strategies as st

from rsris.config import (
    ConfigError,
    ExperimentPlan,
    OptimizerConfig,
    ScenarioConfig,
    Variant,
    db2lin,
    load_plan,
    load_scenario,
)


def test_scenario_defaults_fill_per_user_lists():
    sc = ScenarioConfig(K=5, ris_angular_spread_deg=None)
    assert len(sc.user_angles_bs_deg) == len(sc.direct_gain) == len(sc.ris_gain) == 5
    assert sc.ris_angular_spread_deg == sc.angular_spread_deg


def test_scenario_roundtrip(tmp_path):
    sc = ScenarioConfig(M=2, K=2, N=8, delta=0.5, angular_spread_deg=7.0)
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(sc.to_dict()))
    assert load_scenario(path) == sc


@pytest.mark.parametrize("kw,msg", [
    (dict(M=0), "invalid dimensions"),
    (dict(delta=1.5), "delta"),
    (dict(K=2, direct_gain=[1.0]), "one entry per user"),
    (dict(K=1, path_powers=[[1.0, -1.0, 1.0]]), "positive"),
    (dict(K=1, path_powers=[[1.0]]), "differ in length"),
    (dict(bs_ris_gain=-1.0), "non-negative"),
    (dict(angular_spread_deg=-1.0), "spreads"),
])
def test_scenario_rejects_bad_values(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        ScenarioConfig(**kw)


def test_scenario_rejects_unknown_keys_and_versions():
    with pytest.raises(ConfigError, match="unknown"):
        ScenarioConfig.from_dict({"antennas": 4})
    with pytest.raises(ConfigError, match="schema_version"):
        ScenarioConfig.from_dict({"schema_version": 99})


def test_plan_roundtrip(tmp_path):
    plan = ExperimentPlan(
        scenario=ScenarioConfig(N=4), Pt_grid_dB=[0.0, 10.0], n_cov_realizations=2, n_channel_realizations=3,
        variants=[Variant.parse("stat:rs:opt"), Variant.parse("naive:nors:none")], master_seed=5,
    )
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan.to_dict()))
    assert load_plan(path) == plan
    # a plan file doubles as a scenario file
    assert load_scenario(path) == plan.scenario


@pytest.mark.parametrize("kw", [dict(Pt_grid_dB=[]), dict(n_cov_realizations=0), dict(error_variance=-1.0)])
def test_plan_rejects_bad_values(kw):
    with pytest.raises(ConfigError):
        ExperimentPlan(**kw)


def test_imp_channel_count_falls_back():
    assert ExperimentPlan(n_channel_realizations=7).imp_channel_realizations == 7
    assert ExperimentPlan(n_channel_realizations=7, n_imp_channel_realizations=3).imp_channel_realizations == 3


@given(csi=st.sampled_from(["stat", "imp", "naive"]), rs=st.booleans(), ris=st.sampled_from(["opt", "rand", "none"]))
def test_variant_text_roundtrip(csi, rs, ris):
    v = Variant(csi, rs, ris)
    assert Variant.parse(v.to_str()) == v
    assert Variant.parse(v.to_str().upper()) == v


def test_variant_labels_and_errors():
    assert Variant.parse("stat:rs:opt").label == "Stat CSI RS + OptRIS"
    assert Variant.parse("imp:nors:none").label == "Imp CSI noRS + noRIS"
    for bad in ("stat:rs", "stat:yes:opt", "perfect:rs:opt", "stat:rs:best"):
        with pytest.raises(ConfigError):
            Variant.parse(bad)


def test_optimizer_config_checks():
    for kw in (dict(P_t=0.0), dict(max_iters=0), dict(rel_tol=0.0)):
        with pytest.raises(ConfigError):
            OptimizerConfig(**kw)


def test_db2lin():
    assert db2lin(0.0) == 1.0 and db2lin(10.0) == pytest.approx(10.0) and db2lin(-10.0) == pytest.approx(0.1)
