"""Condition checks, report assembly, and sequence diagnostics."""

import dataclasses
import json
import math

import numpy as np
import pytest

from conftest import CATALOG_IDS
from costatekit.costate import integrate_costate, limiting_costate
from costatekit.problems import HorizonSequence, candidate_process, instantiate_problem
from costatekit.verify import (
    CHECK_IDS,
    build_report,
    check_maximum_condition,
    check_michel,
    check_transversality_zero,
    limiting_sequence_report,
    report_to_json,
    run_verification,
)

P = (math.sqrt(5.0) - 1.0) / 2.0

# expected status of every check in the standard battery, per problem
EXPECTED_STATUS = {
    "LQ1": {
        "maximum": "pass",
        "michel": "pass",
        "transversality_zero": "pass",
        "abnormal": "not-applicable",
        "r_zero": "not-applicable",
        "hartwick": "not-applicable",
        "shadow_price": "not-applicable",
    },
    "LQ1F": {
        "maximum": "pass",
        "michel": "pass",
        "transversality_zero": "pass",
        "abnormal": "not-applicable",
        "r_zero": "not-applicable",
        "hartwick": "not-applicable",
        "shadow_price": "not-applicable",
    },
    "LQ0": {
        "maximum": "pass",
        "michel": "pass",
        "transversality_zero": "pass",
        "abnormal": "not-applicable",
        "r_zero": "pass",
        "hartwick": "not-applicable",
        "shadow_price": "pass",
    },
    "ABN1": {
        "maximum": "pass",
        "michel": "pass",
        "transversality_zero": "pass",
        "abnormal": "pass",
        "r_zero": "not-applicable",
        "hartwick": "pass",
        "shadow_price": "not-applicable",
    },
    "CONST1": {
        "maximum": "pass",
        "michel": "pass",
        "transversality_zero": "pass",
        "abnormal": "not-applicable",
        "r_zero": "not-applicable",
        "hartwick": "pass",
        "shadow_price": "not-applicable",
    },
}


@pytest.fixture(scope="module")
def batteries(problems, candidates, limits):
    out = {}
    for pid in CATALOG_IDS:
        out[pid] = run_verification(problems[pid], candidates[pid], limits[pid])
    return out


def test_full_battery_passes_on_catalog(batteries):
    for pid in CATALOG_IDS:
        checks = batteries[pid]
        assert tuple(c.id for c in checks) == CHECK_IDS
        failed = [c.id for c in checks if c.status not in ("pass", "not-applicable")]
        assert not failed, f"{pid}: {failed}"


def test_battery_statuses_match_problem_structure(batteries):
    for pid, expected in EXPECTED_STATUS.items():
        got = {c.id: c.status for c in batteries[pid]}
        assert got == expected, pid


def test_degenerate_conditions_residual(batteries):
    abnormal = {c.id: c for c in batteries["ABN1"]}["abnormal"]
    # resting at the origin annihilates both the velocity pairing and the
    # Hamiltonian exactly
    assert abnormal.worst_residual <= 1e-9
    hartwick = {c.id: c for c in batteries["ABN1"]}["hartwick"]
    assert hartwick.worst_residual <= 1e-9


def test_zero_discount_conditions_residual(batteries):
    r_zero = {c.id: c for c in batteries["LQ0"]}["r_zero"]
    assert r_zero.worst_residual <= 1e-7
    shadow = {c.id: c for c in batteries["LQ0"]}["shadow_price"]
    assert shadow.worst_residual <= 1e-5


def test_hartwick_not_applicable_records_spread(batteries):
    hartwick = {c.id: c for c in batteries["LQ1"]}["hartwick"]
    assert hartwick.status == "not-applicable"
    assert hartwick.details[0]["stdev"] > 1e-5


def test_check_subset_keeps_canonical_order(problems, candidates, limits):
    checks = run_verification(
        problems["LQ1"],
        candidates["LQ1"],
        limits["LQ1"],
        checks=("michel", "transversality_zero", "maximum"),
    )
    assert tuple(c.id for c in checks) == ("maximum", "michel", "transversality_zero")


def test_unknown_check_id_rejected(problems, candidates, limits):
    with pytest.raises(ValueError, match="unknown check ids"):
        run_verification(
            problems["LQ1"], candidates["LQ1"], limits["LQ1"], checks=("maximum", "bogus")
        )


def _perturbed(problem, candidate, limiting, eps):
    psi0 = limiting.psi0_star + eps
    trace = integrate_costate(
        problem, candidate, limiting.lambda_star, psi0, 0.0, candidate.span[1]
    )
    return dataclasses.replace(limiting, psi0_star=psi0, psi_trace=trace)


def test_perturbed_covector_fails_stationarity(problems, candidates, limits):
    bad = _perturbed(problems["LQ1"], candidates["LQ1"], limits["LQ1"], 1e-2)
    result = check_michel(problems["LQ1"], candidates["LQ1"], bad)
    assert result.status == "fail"
    assert result.worst_residual >= 1e-3


def test_perturbed_covector_fails_maximum_with_fine_sampler(problems, candidates, limits):
    bad = _perturbed(problems["LQ1"], candidates["LQ1"], limits["LQ1"], 1e-2)
    fine = np.linspace(-2.0, 2.0, 401)[:, None]
    good_result = check_maximum_condition(
        problems["LQ1"], candidates["LQ1"], limits["LQ1"], u_sampler=fine
    )
    assert good_result.status == "pass"
    bad_result = check_maximum_condition(
        problems["LQ1"], candidates["LQ1"], bad, u_sampler=fine
    )
    assert bad_result.status == "fail"


def test_free_start_stationarity_only_at_matched_point(problems, horizons):
    # the free-start regulator's initial cost is tuned to the start at 1;
    # from any other start the initial-point condition must fail
    prob = problems["LQ1F"]
    cand = candidate_process(prob, b=[2.0], horizon=80.0)
    lim = limiting_costate(prob, cand, horizons)
    result = check_transversality_zero(prob, cand, lim)
    assert result.status == "fail"
    assert abs(result.worst_residual - 2.0 * P) <= 1e-6


def test_report_json_is_deterministic(problems, candidates, limits, batteries):
    report = build_report(
        problems["LQ1"],
        candidates["LQ1"],
        limits["LQ1"],
        batteries["LQ1"],
        config_echo={"check_tol": 1e-6},
    )
    assert report.all_passed
    text1 = report_to_json(report)
    text2 = report_to_json(report)
    assert text1 == text2
    doc = json.loads(text1)
    assert list(doc.keys()) == [
        "problem",
        "candidate",
        "lambda_star",
        "psi0_star",
        "abnormal",
        "converged",
        "checks",
        "horizons",
        "config",
    ]
    assert doc["problem"] == "LQ1"
    assert doc["lambda_star"] == 1.0
    assert doc["candidate"]["control"] == "policy"
    assert [c["id"] for c in doc["checks"]] == list(CHECK_IDS)
    assert len(doc["horizons"]) == 6
    assert doc["config"] == {"check_tol": 1e-6}


def test_sequence_report_settles_on_regulator(problems, candidates, horizons, limits):
    report = limiting_sequence_report(
        problems["LQ1"],
        candidates["LQ1"],
        horizons,
        T_grid=(0.0, 1.0),
        limiting=limits["LQ1"],
    )
    assert report.converged
    assert len(report.rows) == 2 * len(horizons)
    by_T = {v.T: v for v in report.verdicts}
    # scaled covector rows approach the limit covector
    assert by_T[1.0].psi_gap <= 1e-6
    exact = -2.0 * P * math.exp(-(1.0 + P))
    assert abs(float(by_T[1.0].psi_target[0]) - exact) <= 1e-6
    # scaled tail rows approach the negated limit Hamiltonian
    assert abs(by_T[1.0].tail_target - P * math.exp(-math.sqrt(5.0))) <= 1e-6
    assert by_T[1.0].tail_gap <= 1e-6


def test_sequence_report_grid_must_precede_first_horizon(problems, candidates, horizons, limits):
    with pytest.raises(ValueError, match="below the first horizon"):
        limiting_sequence_report(
            problems["LQ1"],
            candidates["LQ1"],
            horizons,
            T_grid=(0.0, 2.0),
            limiting=limits["LQ1"],
        )


def test_value_model_override(problems, candidates, limits):
    # a deliberately wrong value model must flip the value-gradient check
    from costatekit.problems import ValueFunctionModel
    from costatekit.verify import check_shadow_price

    wrong = ValueFunctionModel(
        value_infinite=lambda b_: float(3.0 * b_[0] * b_[0]),
        hamiltonian_limit=0.0,
    )
    result = check_shadow_price(
        problems["LQ0"], candidates["LQ0"], limits["LQ0"], vmodel=wrong
    )
    assert result.status == "fail"
    assert "value gradient" in result.details[0]["failures"][0]
