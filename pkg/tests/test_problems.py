"""Problem-catalog, admissible-set, and interchange-format behavior."""

import csv
import math

import numpy as np
import pytest

from costatekit.problems import (
    Box,
    BoxControls,
    CandidateProcess,
    CatalogError,
    ControlProblem,
    FiniteControls,
    FreeSpace,
    HorizonSequence,
    ProblemError,
    Singleton,
    TabulatedControl,
    candidate_process,
    catalog_ids,
    instantiate_problem,
    load_control_csv,
    load_trajectory_csv,
    riccati_gain,
    tabulated_trajectory,
    validate_candidate,
    validate_problem,
)

from conftest import CATALOG_IDS


# ---------------------------------------------------------------------------
# catalog


def test_catalog_lists_builtin_ids():
    ids = catalog_ids()
    for pid in CATALOG_IDS:
        assert pid in ids
    assert "custom" in ids


def test_instantiate_unknown_id_raises():
    with pytest.raises(CatalogError, match="unknown problem id"):
        instantiate_problem("NOPE")


def test_instantiate_rejects_bad_parameters():
    with pytest.raises(CatalogError, match="positive discount"):
        instantiate_problem("CONST1", r=0.0)
    with pytest.raises(CatalogError, match="bad parameters"):
        instantiate_problem("LQ1", nonsense=3)


def test_instantiate_custom_passthrough():
    prob = instantiate_problem(
        "custom",
        state_dim=1,
        dynamics=lambda x, u: u.copy(),
        dynamics_jac=lambda x, u: np.zeros((1, 1)),
        running_cost=lambda x, u: float(x[0] ** 2),
        running_cost_grad=lambda x, u: np.array([2.0 * x[0]]),
        discount=1.0,
        initial_set=Singleton(np.array([1.0])),
        control_set=BoxControls(np.array([-1.0]), np.array([1.0])),
    )
    assert prob.name == "custom"
    with pytest.raises(CatalogError, match="bad custom problem fields"):
        instantiate_problem("custom", state_dim=1, bogus=1)


def test_riccati_gain_solves_the_stationary_equation():
    for r in (0.0, 0.5, 1.0, 2.0):
        p = riccati_gain(r)
        assert abs(p * p + r * p - 1.0) <= 1e-14
    assert riccati_gain(0.0) == pytest.approx(1.0, abs=1e-15)
    assert riccati_gain(1.0) == pytest.approx((math.sqrt(5.0) - 1.0) / 2.0, abs=1e-15)


# ---------------------------------------------------------------------------
# derivative and fast-path audits


def test_validate_problem_passes_on_catalog(problems):
    for pid in CATALOG_IDS:
        report = validate_problem(problems[pid])
        assert report["jacobian"] <= 1e-6
        assert report["cost_gradient"] <= 1e-6
        assert report["fast_paths"] <= 1e-10


def test_validate_problem_rejects_wrong_cost_gradient():
    prob = ControlProblem(
        state_dim=1,
        dynamics=lambda x, u: u.copy(),
        dynamics_jac=lambda x, u: np.zeros((1, 1)),
        running_cost=lambda x, u: float(x[0] ** 2),
        running_cost_grad=lambda x, u: np.array([3.0 * x[0]]),
        discount=1.0,
        initial_set=Singleton(np.array([1.0])),
        control_set=BoxControls(np.array([-1.0]), np.array([1.0])),
    )
    with pytest.raises(ProblemError, match="running_cost_grad"):
        validate_problem(prob)


def test_validate_problem_rejects_wrong_jacobian():
    prob = ControlProblem(
        state_dim=1,
        dynamics=lambda x, u: np.array([x[0] + u[0]]),
        dynamics_jac=lambda x, u: np.zeros((1, 1)),
        running_cost=lambda x, u: float(x[0]),
        running_cost_grad=lambda x, u: np.array([1.0]),
        discount=1.0,
        initial_set=Singleton(np.array([1.0])),
        control_set=BoxControls(np.array([-1.0]), np.array([1.0])),
    )
    with pytest.raises(ProblemError, match="dynamics_jac"):
        validate_problem(prob)


def test_validate_problem_rejects_disagreeing_fast_path():
    prob = ControlProblem(
        state_dim=1,
        dynamics=lambda x, u: u.copy(),
        dynamics_jac=lambda x, u: np.zeros((1, 1)),
        running_cost=lambda x, u: float(x[0] ** 2),
        running_cost_grad=lambda x, u: np.array([2.0 * x[0]]),
        discount=1.0,
        initial_set=Singleton(np.array([1.0])),
        control_set=BoxControls(np.array([-1.0]), np.array([1.0])),
        scalar_running_cost=lambda x, u: x * x + 0.5,
    )
    with pytest.raises(ProblemError, match="fast-path"):
        validate_problem(prob)


# ---------------------------------------------------------------------------
# admissible sets


def test_box_controls_grid_projection_membership():
    box = BoxControls(np.array([-2.0, 0.0]), np.array([2.0, 1.0]))
    grid = box.sample(n_per_dim=5)
    assert grid.shape == (25, 2)
    assert np.all(grid[:, 0] >= -2.0) and np.all(grid[:, 0] <= 2.0)
    assert np.all(grid[:, 1] >= 0.0) and np.all(grid[:, 1] <= 1.0)
    # the cap shrinks the per-dimension count, never the dimension
    capped = box.sample(n_per_dim=200, cap=100)
    assert capped.shape[0] <= 100 and capped.shape[1] == 2
    assert np.allclose(box.project(np.array([5.0, -3.0])), [2.0, 0.0])
    assert box.contains(np.array([0.0, 0.5]))
    assert not box.contains(np.array([3.0, 0.5]))


def test_finite_controls_membership_and_samples():
    finite = FiniteControls(np.array([[0.0], [0.5], [1.0]]))
    assert finite.dim == 1
    assert finite.contains(np.array([0.5]))
    assert not finite.contains(np.array([0.25]))
    assert np.array_equal(finite.sample(), finite.points)


def test_initial_set_normal_cones():
    free = FreeSpace(2)
    assert free.contains(np.array([3.0, -9.0]))
    assert free.normal_cone_distance(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(5.0)

    pin = Singleton(np.array([1.0]))
    assert pin.contains(np.array([1.0])) and not pin.contains(np.array([1.1]))
    assert pin.normal_cone_distance(np.array([42.0]), np.array([1.0])) == 0.0

    box = Box(np.array([0.0, 0.0, 0.0, 1.0]), np.array([1.0, 1.0, 1.0, 1.0]))
    b = np.array([0.5, 0.0, 1.0, 1.0])
    v = np.array([0.3, 0.3, 0.3, 9.0])
    # interior -> |v|, lower face -> max(v, 0), upper face -> max(-v, 0),
    # pinched -> 0
    assert box.normal_cone_distance(v, b) == pytest.approx(
        math.hypot(0.3, 0.3), abs=1e-15
    )
    with pytest.raises(ProblemError, match="lower bound exceeds"):
        Box(np.array([1.0]), np.array([0.0]))


# ---------------------------------------------------------------------------
# candidates


def test_candidate_process_uses_pinned_start(problems):
    cand = candidate_process(problems["LQ1"], horizon=5.0)
    assert np.allclose(cand.initial_point, [1.0])
    assert cand.span == (0.0, 5.0)
    p = riccati_gain(1.0)
    t = 3.0
    assert abs(float(cand.trajectory(t)[0]) - math.exp(-p * t)) <= 1e-8


def test_candidate_process_rejects_start_outside_initial_set(problems):
    with pytest.raises(ProblemError, match="outside"):
        candidate_process(problems["LQ1"], b=np.array([2.0]), horizon=5.0)


def test_candidate_process_rejects_inadmissible_policy(problems):
    bad = lambda t, x: np.array([2.0e7])
    with pytest.raises(ProblemError, match="admissible"):
        candidate_process(problems["LQ1"], policy=bad, horizon=1.0)


def test_candidate_process_requires_policy_for_custom_problems():
    prob = instantiate_problem(
        "custom",
        state_dim=1,
        dynamics=lambda x, u: u.copy(),
        dynamics_jac=lambda x, u: np.zeros((1, 1)),
        running_cost=lambda x, u: float(x[0] ** 2),
        running_cost_grad=lambda x, u: np.array([2.0 * x[0]]),
        discount=1.0,
        initial_set=Singleton(np.array([1.0])),
        control_set=BoxControls(np.array([-1.0]), np.array([1.0])),
    )
    with pytest.raises(CatalogError, match="no catalog policy"):
        candidate_process(prob, horizon=1.0)
    cand = candidate_process(prob, policy=lambda t, x: np.array([0.0]), horizon=1.0)
    assert np.allclose(cand.trajectory(1.0), [1.0])


def test_validate_candidate_accepts_catalog(problems, candidates):
    for pid in CATALOG_IDS:
        worst = validate_candidate(problems[pid], candidates[pid])
        assert worst <= 1e-4


def test_validate_candidate_rejects_wrong_start(problems):
    times = np.linspace(0.0, 2.0, 21)
    shifted = tabulated_trajectory(times, 1.5 + 0.0 * times)
    cand = CandidateProcess(
        initial_point=np.array([1.0]),
        control=TabulatedControl(np.array([0.0]), np.array([[0.0]])),
        trajectory=shifted,
    )
    with pytest.raises(ProblemError, match="does not start"):
        validate_candidate(problems["CONST1"], cand)


def test_validate_candidate_rejects_inconsistent_trajectory(problems):
    times = np.linspace(0.0, 2.0, 21)
    drifting = tabulated_trajectory(times, 1.0 + times)
    cand = CandidateProcess(
        initial_point=np.array([1.0]),
        control=TabulatedControl(np.array([0.0]), np.array([[0.0]])),
        trajectory=drifting,
    )
    # the tabulated control is 0 so the dynamics say the slope must be 0
    with pytest.raises(ProblemError, match="slope residual"):
        validate_candidate(problems["CONST1"], cand)


def test_validate_candidate_rejects_inadmissible_control(problems):
    times = np.linspace(0.0, 2.0, 21)
    cand = CandidateProcess(
        initial_point=np.array([1.0]),
        control=TabulatedControl(np.array([0.0]), np.array([[7.0]])),
        trajectory=tabulated_trajectory(times, 1.0 + 7.0 * times),
    )
    with pytest.raises(ProblemError, match="admissible"):
        validate_candidate(problems["CONST1"], cand)


# ---------------------------------------------------------------------------
# tabulated controls and interchange files


def test_tabulated_control_holds_value_from_each_node():
    ctrl = TabulatedControl(np.array([0.0, 1.0, 2.5]), np.array([0.3, -0.2, 0.7]))
    assert ctrl(-1.0)[0] == 0.3  # clamp before the first sample
    assert ctrl(0.99)[0] == 0.3
    assert ctrl(1.0)[0] == -0.2  # the node takes the new value
    assert ctrl(2.4)[0] == -0.2
    assert ctrl(99.0)[0] == 0.7


def test_tabulated_control_validates_its_table():
    with pytest.raises(ProblemError, match="strictly increasing"):
        TabulatedControl(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    with pytest.raises(ProblemError, match="matching times"):
        TabulatedControl(np.array([0.0, 1.0]), np.array([[1.0]]))


def test_control_csv_round_trip(tmp_path):
    path = tmp_path / "ctrl.csv"
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "u_1", "u_2"])
        writer.writerow([0.0, 0.25, -1.0])
        writer.writerow([1.5, 0.75, 2.0])
    ctrl = load_control_csv(path)
    assert np.allclose(ctrl(0.2), [0.25, -1.0])
    assert np.allclose(ctrl(1.5), [0.75, 2.0])


def test_control_csv_rejects_bad_headers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,u_1\n0.0,1.0\n")
    with pytest.raises(ProblemError, match="expected header"):
        load_control_csv(path)
    path.write_text("t,v_1\n0.0,1.0\n")
    with pytest.raises(ProblemError, match="expected column"):
        load_control_csv(path)
    path.write_text("t,u_1\n")
    with pytest.raises(ProblemError, match="empty"):
        load_control_csv(path)


def test_trajectory_csv_round_trip(tmp_path):
    times = np.linspace(0.0, 2.0, 21)
    states = np.sin(times)
    path = tmp_path / "traj.csv"
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "x_1"])
        for t, x in zip(times, states):
            writer.writerow([repr(float(t)), repr(float(x))])
    traj = load_trajectory_csv(path)
    probe = 0.95
    assert float(traj(probe)[0]) == pytest.approx(
        np.interp(probe, times, states), abs=1e-15
    )
    assert traj.span == (0.0, 2.0)


# ---------------------------------------------------------------------------
# horizon sequences


def test_horizon_sequence_constructors():
    geo = HorizonSequence.geometric(2.0, 2.0, 6)
    assert geo.values == (2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    assert geo.last == 64.0 and len(geo) == 6
    arith = HorizonSequence.arithmetic(1.0, 0.5, 4)
    assert arith.values == (1.0, 1.5, 2.0, 2.5)
    explicit = HorizonSequence.explicit([3.0, 9.0])
    assert explicit.values == (3.0, 9.0)


def test_horizon_sequence_validation():
    with pytest.raises(ProblemError, match="at least two"):
        HorizonSequence((5.0,))
    with pytest.raises(ProblemError, match="strictly increasing"):
        HorizonSequence((2.0, 2.0))
    with pytest.raises(ProblemError, match="positive"):
        HorizonSequence((-1.0, 2.0))
    with pytest.raises(ProblemError, match="factor"):
        HorizonSequence.geometric(2.0, 1.0, 4)
    with pytest.raises(ProblemError, match="step"):
        HorizonSequence.arithmetic(1.0, 0.0, 4)
