"""Forward integration, variational data, payoffs, and tail certificates."""

import csv
import math

import numpy as np
import pytest

from costatekit.integrate import (
    DEFAULT_CONFIG,
    IntegrationError,
    IntegratorConfig,
    TailError,
    payoff,
    solve_fundamental,
    solve_state,
    tail_payoff,
    write_trace_csv,
)
from costatekit.problems import (
    BoxControls,
    ControlProblem,
    Singleton,
    candidate_process,
    instantiate_problem,
)

P = (math.sqrt(5.0) - 1.0) / 2.0
SQRT5 = math.sqrt(5.0)


def _lq1_control(t):
    # open-loop restatement of the stabilizing feedback from b = 1
    return np.array([-P * math.exp(-P * t)])


def test_solve_state_matches_exponential_decay(problems):
    traj = solve_state(problems["LQ1"], np.array([1.0]), _lq1_control, 10.0)
    for t in np.linspace(0.0, 10.0, 41):
        assert abs(float(traj(float(t))[0]) - math.exp(-P * t)) <= 1e-9


def test_trajectory_vectorized_evaluation_shape(problems):
    traj = solve_state(problems["LQ1"], np.array([1.0]), _lq1_control, 2.0)
    at = np.array([0.0, 0.5, 1.0])
    out = traj(at)
    assert out.shape == (3, 1)
    assert traj.covers(0.0, 2.0)
    assert not traj.covers(0.0, 2.1)


def test_fundamental_matrix_and_liouville_identity(problems):
    zero = lambda t: np.array([0.0])
    # x' = x + u with u = 0: the variational flow is exp(t) and the
    # Liouville integral of the trace reproduces its logarithm
    trace = solve_fundamental(problems["ABN1"], np.array([0.0]), zero, 6.0)
    for t in np.linspace(0.0, 6.0, 13):
        assert abs(trace.matrix_at(float(t))[0, 0] - math.exp(t)) <= 1e-7 * math.exp(t)
        assert abs(trace.logdet_at(float(t)) - t) <= 1e-9
    # state-independent dynamics: the flow never moves the matrix
    flat = solve_fundamental(problems["LQ1"], np.array([1.0]), _lq1_control, 6.0)
    for t in np.linspace(0.0, 6.0, 13):
        assert abs(flat.matrix_at(float(t))[0, 0] - 1.0) <= 1e-11
        assert abs(flat.logdet_at(float(t))) <= 1e-11


def test_gradient_integral_closed_form(problems):
    trace = solve_fundamental(problems["LQ1"], np.array([1.0]), _lq1_control, 10.0)
    for T in (1.0, 2.0, 5.0, 10.0):
        exact = 2.0 * P * (1.0 - math.exp(-(1.0 + P) * T))
        assert abs(float(trace.gradient_at(T)[0]) - exact) <= 1e-9


def test_payoff_closed_form_and_discount_shift(problems):
    prob = problems["LQ1"]
    for T in (1.0, 5.0):
        exact = (1.0 + P * P) * (1.0 - math.exp(-SQRT5 * T)) / SQRT5
        got = payoff(prob, np.array([1.0]), _lq1_control, 0.0, T)
        assert abs(got - exact) <= 1e-10
    base = payoff(prob, np.array([1.0]), _lq1_control, 0.0, 5.0)
    shifted = payoff(prob, np.array([1.0]), _lq1_control, 2.0, 5.0)
    assert shifted == pytest.approx(math.exp(-2.0) * base, rel=1e-15)


def test_payoff_gradient_matches_gradient_integral(problems):
    prob = problems["CONST1"]
    zero = lambda t: np.array([0.0])
    trace = solve_fundamental(prob, np.array([1.0]), zero, 6.0)
    h = 1e-5
    for T in (1.0, 6.0):
        fd = (
            payoff(prob, np.array([1.0 + h]), zero, 0.0, T)
            - payoff(prob, np.array([1.0 - h]), zero, 0.0, T)
        ) / (2.0 * h)
        assert abs(fd - float(trace.gradient_at(T)[0])) <= 1e-9


def test_tail_payoff_certified_by_cost_bound(problems, candidates):
    tail = tail_payoff(problems["LQ1"], candidates["LQ1"], 1.0, 40.0)
    exact = (1.0 + P * P) * (math.exp(-SQRT5 * 1.0) - math.exp(-SQRT5 * 40.0)) / SQRT5
    assert abs(tail.value - exact) <= 1e-9
    assert not tail.heuristic
    assert tail.remainder_bound == pytest.approx(
        (1.0 + P * P) * math.exp(-40.0), rel=1e-12
    )


def test_tail_payoff_settled_undiscounted_is_heuristic(problems, candidates):
    tail = tail_payoff(problems["LQ0"], candidates["LQ0"], 1.0, 40.0)
    assert tail.heuristic
    assert tail.remainder_bound <= 1e-12
    assert abs(tail.value - math.exp(-2.0)) <= 1e-9


def test_tail_payoff_rejects_moving_undiscounted_tail():
    prob = ControlProblem(
        state_dim=1,
        dynamics=lambda x, u: u.copy(),
        dynamics_jac=lambda x, u: np.zeros((1, 1)),
        running_cost=lambda x, u: 1.0,
        running_cost_grad=lambda x, u: np.array([0.0]),
        discount=0.0,
        initial_set=Singleton(np.array([0.0])),
        control_set=BoxControls(np.array([0.0]), np.array([0.0])),
    )
    cand = candidate_process(prob, policy=lambda t, x: np.array([0.0]), horizon=40.0)
    with pytest.raises(TailError, match="not certifiable"):
        tail_payoff(prob, cand, 0.0, 40.0)


def test_solve_state_reports_finite_time_blowup():
    prob = ControlProblem(
        state_dim=1,
        dynamics=lambda x, u: np.array([x[0] ** 2]),
        dynamics_jac=lambda x, u: np.array([[2.0 * x[0]]]),
        running_cost=lambda x, u: 0.0,
        running_cost_grad=lambda x, u: np.array([0.0]),
        discount=1.0,
        initial_set=Singleton(np.array([1.5])),
        control_set=BoxControls(np.array([0.0]), np.array([0.0])),
    )
    with pytest.raises(IntegrationError, match="last valid time") as err:
        solve_state(prob, np.array([1.5]), lambda t: np.array([0.0]), 1.0)
    # x' = x^2 from 1.5 escapes at t = 2/3
    assert 0.5 < err.value.last_time < 1.0


def test_integrator_config_overrides():
    cfg = DEFAULT_CONFIG.with_overrides(rtol=1e-6, method=None)
    assert cfg.rtol == 1e-6
    assert cfg.method == DEFAULT_CONFIG.method
    assert cfg is not DEFAULT_CONFIG
    assert isinstance(cfg, IntegratorConfig)


def test_write_trace_csv_round_trips_floats(tmp_path, problems):
    trace = solve_fundamental(problems["LQ1"], np.array([1.0]), _lq1_control, 3.0)
    path = tmp_path / "trace.csv"
    write_trace_csv(path, trace)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["t", "x_1", "A_11", "I_1", "logdetA"]
    assert len(rows) - 1 == trace.t.size
    k = trace.t.size // 2
    got = [float(cell) for cell in rows[1 + k]]
    assert got[0] == trace.t[k]
    assert got[1] == trace.x[k, 0]
    assert got[2] == trace.A[k, 0, 0]
    assert got[3] == trace.I[k, 0]
    assert got[4] == trace.logdet[k]
