import json
import math

import numpy as np
import pytest

from supchan import campaigns as cp
from supchan import channels as ch
from supchan import matkernel as mk
from supchan.config import DEFAULT_TOLS


def make_scenario(**kwargs):
    base = {"seed": 5, "trials": 2, "bound": "main", "dims": {"d_S": 2, "d_E": 2}}
    base.update(kwargs)
    return cp.load_scenario(json.dumps(base))


def test_load_scenario_defaults_and_families():
    scn = cp.load_scenario(json.dumps({"seed": 1, "trials": 3}))
    assert scn.bound == "all"
    assert scn.families() == cp.FAMILIES
    assert make_scenario().families() == ("main",)


def test_load_scenario_parse_vs_validation_errors():
    with pytest.raises(cp.ScenarioParseError):
        cp.load_scenario("{ nope")
    with pytest.raises(cp.ScenarioParseError):
        cp.load_scenario("[1, 2]")
    with pytest.raises(cp.ScenarioError, match="trials"):
        cp.load_scenario(json.dumps({"seed": 1}))
    with pytest.raises(cp.ScenarioError, match="dims.d_S"):
        cp.load_scenario(json.dumps({"seed": 1, "trials": 1, "dims": {"d_S": -2}}))
    with pytest.raises(cp.ScenarioError, match="bound"):
        cp.load_scenario(json.dumps({"seed": 1, "trials": 1, "bound": "nope"}))
    with pytest.raises(cp.ScenarioError, match="tolerances.slack_tol"):
        cp.load_scenario(json.dumps({"seed": 1, "trials": 1, "tolerances": {"slack_tol": -1}}))


def test_load_scenario_matrix_errors_name_field_paths():
    with pytest.raises(cp.ScenarioError, match=r"explicit.U"):
        cp.load_scenario(json.dumps(
            {"seed": 1, "trials": 1, "explicit": {"U": [[1, 0], [0]]}}
        ))
    with pytest.raises(cp.ScenarioError, match=r"explicit.U\[0\]\[1\]"):
        cp.load_scenario(json.dumps(
            {"seed": 1, "trials": 1, "explicit": {"U": [[1, "x"], [0, 1]]}}
        ))
    # non-square unitary passes parsing but fails validation with its name
    with pytest.raises(cp.ScenarioError, match="explicit.U"):
        cp.load_scenario(json.dumps(
            {"seed": 1, "trials": 1, "explicit": {"U": [[1, 0], [0, 1], [0, 0]]}}
        ))
    with pytest.raises(cp.ScenarioError, match="explicit"):
        cp.load_scenario(json.dumps(
            {"seed": 1, "trials": 1, "explicit": {"rho_se": [[1, 0], [0, 1]]}}
        ))


def test_parse_complex_matrix_pairs():
    m = cp.parse_complex_matrix([[[0.0, 1.0], 2.0], [0, [3.0, -1.0]]], "x")
    assert m[0, 0] == 1j and m[0, 1] == 2.0 and m[1, 1] == 3.0 - 1j


def test_scenario_echo_round_trip():
    u = ch.partial_swap_unitary(2, 0.3)
    scn = make_scenario(explicit={"U": cp.matrix_to_json(u), "beta": 2.0})
    echo = cp.scenario_echo(scn)
    again = cp.load_scenario(json.dumps(echo))
    assert cp.scenario_echo(again) == echo
    assert mk.max_abs(again.explicit["U"] - u) == 0


def test_ext_to_json_values():
    assert cp.ext_to_json(float("inf")) == "inf"
    assert cp.ext_to_json(float("-inf")) == "-inf"
    assert cp.ext_to_json(float("nan")) == "indeterminate"
    assert cp.ext_to_json(1.5) == 1.5


def test_evaluate_trial_deterministic():
    scn = make_scenario()
    a = cp.report_to_dict(cp.evaluate_trial(scn, "main", 1, DEFAULT_TOLS))
    b = cp.report_to_dict(cp.evaluate_trial(scn, "main", 1, DEFAULT_TOLS))
    assert json.dumps(cp.jsonable(a), sort_keys=True) == json.dumps(cp.jsonable(b), sort_keys=True)


def test_evaluate_trial_every_family_runs():
    scn = cp.load_scenario(json.dumps({"seed": 2, "trials": 1, "bound": "all",
                                       "n_measurements": 5}))
    for family in cp.FAMILIES:
        rep = cp.evaluate_trial(scn, family, 0, DEFAULT_TOLS)
        assert rep.passed, family
        assert rep.metadata["trial"] == 0


def test_collected_details_expose_steady_state_spectrum():
    scn = make_scenario()
    details = {}
    cp.evaluate_trial(scn, "main", 0, DEFAULT_TOLS, collect=details)
    eigs = details["ness_eigenvalues"]
    assert abs(sum(eigs) - 1.0) <= 1e-12
    for key in ("entropy_sigma_prime", "entropy_op_state",
                "tr_sigma_log_ness", "tr_op_log_neso", "slack_identity"):
        assert key in details


def test_run_campaign_summary_invariant():
    scn = cp.load_scenario(json.dumps({"seed": 3, "trials": 4, "bound": "all",
                                       "n_measurements": 5}))
    rep = cp.run_campaign(scn, DEFAULT_TOLS, jobs=1)
    s = rep["summary"]
    assert s["passes"] + s["failures"] + s["flagged_infinite"] == s["trials"]
    assert s["trials"] == 4 * len(cp.FAMILIES)
    assert s["wall_time"] is None
    for family in cp.FAMILIES:
        sec = rep["sections"][family]["summary"]
        assert sec["passes"] + sec["failures"] + sec["flagged_infinite"] == sec["trials"]


def test_run_campaign_serial_equals_parallel():
    scn = make_scenario(trials=3)
    serial = cp.render_json(cp.run_campaign(scn, DEFAULT_TOLS, jobs=1))
    parallel = cp.render_json(cp.run_campaign(scn, DEFAULT_TOLS, jobs=2))
    assert serial == parallel


def test_render_csv_shape():
    scn = make_scenario(trials=2)
    rep = cp.run_campaign(scn, DEFAULT_TOLS, jobs=1)
    csv = cp.render_csv(rep)
    lines = csv.strip().split("\n")
    assert lines[0] == "section,trial,lhs,rhs,slack,passed,flags"
    assert len(lines) == 3
    assert lines[1].startswith("main,0,")


def test_explicit_instance_pins_superchannel():
    # an explicit (U, rho_se) makes every trial share the same superchannel
    rng = np.random.default_rng(0)
    u = cp.matrix_to_json(np.eye(4))
    rho = cp.matrix_to_json(np.eye(4) / 4)
    scn = make_scenario(trials=3, explicit={"U": u, "rho_se": rho})
    rep = cp.run_campaign(scn, DEFAULT_TOLS, jobs=1)
    for r in rep["sections"]["main"]["reports"]:
        assert r["passed"]


def test_adversarial_explicit_scenario_fails_campaign():
    # known violating instance: the campaign must report the failure
    sigma = np.diag([0.99, 0.01]).astype(complex)
    rho_se = np.kron(sigma, np.eye(2) / 2)
    theta = math.asin(math.sqrt(0.1))
    u = ch.partial_swap_unitary(2, theta)
    t_kraus = [m for m in ch.classical_channel(np.array([[1.0, 0.5], [0.0, 0.5]])).kraus]
    scn = make_scenario(
        trials=1,
        explicit={
            "U": cp.matrix_to_json(u),
            "rho_se": cp.matrix_to_json(rho_se),
            "op_kraus": [cp.matrix_to_json(k) for k in t_kraus],
        },
    )
    rep = cp.run_campaign(scn, DEFAULT_TOLS, jobs=1)
    assert rep["summary"]["failures"] == 1
    assert rep["sections"]["main"]["reports"][0]["slack"] < -0.1
