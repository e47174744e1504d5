import csv
import json
import math

import jsonschema
import numpy as np
import pytest

from distbell.experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    config_schema,
    two_state_tables,
    gradient_battery,
    load_config,
    metric_battery,
    pe_contraction_battery,
    prefer_second_when_x1_is_zero,
    projection_battery,
    report_schema,
    run_experiment,
    sub_rng,
)
from distbell.metrics import max_wasserstein

QUICK = {
    "cliffwalk_atoms": {"atoms": [2, 3], "seeds": 2, "sweeps": 20, "sampled_sweep_factor": 2,
                        "rollouts": 100, "horizon": 200, "eval_interval": 5},
    "contraction_suite": {"n_mdps": 5, "metric_cases": 40, "projection_cases": 40, "gradient_cases": 20},
    "noncontraction_demo": {},
    "oscillation_demo": {},
    "nonstationary_demo": {"rollouts": 2000},
    "sample_wasserstein_demo": {"rollouts": 500, "gd_iters": 50},
    "fixed_point_check": {"rows": 2, "cols": 4, "rollouts": 200, "horizon": 100, "n_random": 2,
                          "random_atoms": 41},
}


@pytest.fixture(scope="module")
def quick_reports():
    return {name: run_experiment(ExperimentConfig(name, 3, params=QUICK[name])) for name in EXPERIMENTS}


def test_every_experiment_has_a_quick_config():
    assert set(QUICK) == set(EXPERIMENTS)
    assert len(EXPERIMENTS) == 7


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_report_matches_schema(quick_reports, name):
    data = json.loads(quick_reports[name].to_json())
    jsonschema.validate(data, report_schema())
    assert data["config"]["params"] == ExperimentConfig(name, 3, params=QUICK[name]).resolved()


@pytest.mark.parametrize("name", ["noncontraction_demo", "oscillation_demo", "sample_wasserstein_demo",
                                  "cliffwalk_atoms", "fixed_point_check"])
def test_reports_are_bit_identical(tmp_path, quick_reports, name):
    again = run_experiment(ExperimentConfig(name, 3, params=QUICK[name]))
    a = quick_reports[name].write(tmp_path / "a")
    b = again.write(tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    for f in quick_reports[name].tables:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_changes_sampled_results(quick_reports):
    other = run_experiment(ExperimentConfig("sample_wasserstein_demo", 4, params=QUICK["sample_wasserstein_demo"]))
    assert other.results["max_mc_sample_error"] != quick_reports["sample_wasserstein_demo"].results["max_mc_sample_error"]


def test_timing_kept_out_of_report(tmp_path, quick_reports):
    path = quick_reports["noncontraction_demo"].write(tmp_path)
    assert "duration" not in path.read_text()
    timing = json.loads((tmp_path / "timing.json").read_text())
    assert timing["duration_seconds"] >= 0


def test_noncontraction_values(quick_reports):
    r = quick_reports["noncontraction_demo"]
    assert r.passed
    assert r.results["d1_before"] == pytest.approx(0.2, abs=1e-12)
    assert r.results["d1_after"] == pytest.approx(1.0, abs=1e-12)
    assert r.results["greedy_x2_under_z"] == 0
    # the means still contract even though the distributions move apart
    assert r.results["mean_gap_after"] <= r.results["mean_gap_before"]


def test_noncontraction_large_epsilon_fails_expansion():
    r = run_experiment(ExperimentConfig("noncontraction_demo", params={"epsilon": 1.0}))
    assert not r.passed
    assert [e.name for e in r.expectations if not e.passed] == ["expansion"]


def test_two_state_tables():
    z, zstar = two_state_tables(0.1)
    assert max_wasserstein(z, zstar, 1) == pytest.approx(0.2)
    assert zstar[0, 0].atoms.tolist() == pytest.approx([-0.9, 1.1])
    z0, zstar0 = two_state_tables(0.0)
    assert zstar0[0, 0].is_point_mass(0.0)
    assert prefer_second_when_x1_is_zero(1, [0, 1], zstar0) == 1
    assert prefer_second_when_x1_is_zero(1, [0, 1], z0.replace({(0, 0): z0[1, 1]})) == 0


def test_oscillation_report(quick_reports):
    r = quick_reports["oscillation_demo"]
    assert r.passed
    laws = r.results["x1_iterates"]
    assert laws[0] != laws[1] and laws[0] == laws[2]


def test_sample_wasserstein_report(quick_reports):
    r = quick_reports["sample_wasserstein_demo"]
    rows = r.tables["sample_wasserstein_curve.csv"][1]
    assert len(rows) == 21
    assert rows[0][0] == 0.0 and rows[-1][0] == 1.0
    # at the ends the sampled loss and the true loss agree
    assert rows[0][1] == pytest.approx(0.5) and rows[0][2] == pytest.approx(0.5)
    # descent on the sampled loss never moves
    path = [row[1] for row in r.tables["sample_wasserstein_descent.csv"][1]]
    assert set(path) == {0.3}


def test_nonstationary_quick(quick_reports):
    r = quick_reports["nonstationary_demo"]
    sweep = r.results["stationary_sweep"]
    assert [s["p"] for s in sweep] == [0.0, 0.25, 0.5, 0.75, 1.0]
    # every stationary policy has mean return 1, like the nonstationary one
    assert all(abs(s["mean"] - 1.0) < 0.05 for s in sweep)
    assert r.results["k_always_a1_vs_point_mass"] == 0.0


def test_fixed_point_quick(quick_reports):
    r = quick_reports["fixed_point_check"]
    assert r.results["cliffwalk"]["converged"]
    assert r.results["cliffwalk"]["mean_error_vs_linear_solve"] < 1e-6
    assert len(r.results["random_mdps"]) == 2


def test_cliffwalk_quick_outputs(tmp_path, quick_reports):
    r = quick_reports["cliffwalk_atoms"]
    r.write(tmp_path)
    with open(tmp_path / "atoms_summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    # supervised runs once per atom count, sampled once per seed
    assert len(rows) == 2 * (2 + 2 * 2)
    curve = tmp_path / "curve_sampled_bellman_categorical_ce_n3_r1.csv"
    assert curve.read_text().splitlines()[0] == "sweep,mean_d1,max_d1,loss"
    cdfs = [f for f in r.tables if f.startswith("cdf_state")]
    assert len(cdfs) == 5
    assert set(r.results["projection_floor"]) == {"2", "3"}
    assert r.results["projection_floor"]["3"] < r.results["projection_floor"]["2"]
    assert {e.criterion for e in r.expectations} == {"10", "10a", "10b", "10c"}


def test_contraction_quick(quick_reports):
    r = quick_reports["contraction_suite"]
    assert {e.criterion for e in r.expectations} == {"2", "3", "4", "7", "8", "12"}
    assert set(r.sections) >= {"pe_contraction", "metric_battery", "gradient_battery"}


def test_pe_battery_is_seeded():
    a = pe_contraction_battery(5, n_mdps=3)
    b = pe_contraction_battery(5, n_mdps=3)
    assert a["rows"] == b["rows"]
    assert all(v <= 1e-9 for v in a["worst_excess"].values())


def test_metric_battery_properties_that_hold():
    out = metric_battery(11, 150)
    for key, count in out["violations"].items():
        if not key.startswith("partition"):
            assert count == 0, key
    # the cell-wise inequality is exact at p = 1
    assert out["violations"]["partition[p=1]"] == 0


def test_projection_and_gradient_batteries():
    proj = projection_battery(2, 200)
    assert max(proj["max_error"].values()) <= 1e-12
    assert proj["integral_b_cases"] == 50
    grads = gradient_battery(2, 30)
    assert grads["ce_max_error"] <= 1e-6 and grads["wasserstein_max_error"] <= 1e-6


def test_sub_rng_streams():
    a = sub_rng(1, "mc").random(3)
    assert np.array_equal(a, sub_rng(1, "mc").random(3))
    assert not np.array_equal(a, sub_rng(1, "other").random(3))
    assert not np.array_equal(a, sub_rng(2, "mc").random(3))


@pytest.mark.parametrize("bad", [
    {"experiment": "nope"},
    {"experiment": "cliffwalk_atoms", "params": {"atoms": [1, 5]}},
    {"experiment": "cliffwalk_atoms", "params": {"atoms": [5, 5]}},
    {"experiment": "cliffwalk_atoms", "params": {"sweeps": 0}},
    {"experiment": "cliffwalk_atoms", "params": {"sweeps": True}},
    {"experiment": "cliffwalk_atoms", "params": {"step_size": -0.1}},
    {"experiment": "cliffwalk_atoms", "params": {"v_min": 0.0, "v_max": -1.0}},
    {"experiment": "cliffwalk_atoms", "params": {"colour": 1}},
    {"experiment": "noncontraction_demo", "params": {"epsilon": 0.0}},
    {"experiment": "noncontraction_demo", "params": {"epsilon": math.nan}},
    {"experiment": "contraction_suite", "params": {"gammas": [1.0]}},
    {"experiment": "oscillation_demo", "seed": -1},
    {"experiment": "oscillation_demo", "extra": 1},
    {"seed": 1},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_resolves_defaults_and_schema(tmp_path):
    data = {"experiment": "cliffwalk_atoms", "seed": 2, "params": {"atoms": [2, 51], "sweeps": 10}}
    jsonschema.validate(data, config_schema())
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    cfg = load_config(path)
    resolved = cfg.resolved()
    assert resolved["atoms"] == [2, 51] and resolved["rollouts"] == 10000
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"experiment": "cliffwalk_atoms", "params": {"atoms": [1]}}, config_schema())
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_output_dir_env(monkeypatch):
    monkeypatch.setenv("DISTBELL_OUT", "/tmp/somewhere")
    assert str(ExperimentConfig("oscillation_demo").output_dir()) == "/tmp/somewhere"
    assert str(ExperimentConfig("oscillation_demo", out="x").output_dir()) == "x"
