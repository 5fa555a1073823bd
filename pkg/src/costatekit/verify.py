"""Condition checks for a limit covector along a candidate process.

Each check is a pure function returning a :class:`CheckResult` with a
stable id, a status in ``{pass, fail, not-applicable, uncertified}``, the
worst residual, and where it occurred.  ``run_verification`` runs the
standard battery in a fixed order and ``build_report`` assembles the
deterministic JSON document.

Checks:

``maximum``
    the candidate's control attains the pointwise supremum of the
    Hamiltonian over sampled admissible controls;
``michel``
    the Hamiltonian matches its discounted-tail representative and
    vanishes at the last grid time;
``transversality_zero``
    the initial covector, less the multiplier-weighted initial-cost
    gradient, lies in the normal cone of the initial set;
``abnormal``
    vanishing-multiplier limits are nontrivial, come with unbounded
    gradient integrals, and annihilate both the Hamiltonian and the
    velocity pairing;
``r_zero``
    with zero discount the Hamiltonian vanishes and the velocity pairing
    equals the multiplier-weighted running cost;
``hartwick``
    constant running cost along the candidate forces a vanishing
    velocity pairing;
``shadow_price``
    with zero discount the initial covector is the negated value
    gradient and the velocity pairing matches running cost plus the
    limiting Hamiltonian constant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .costate import (
    HamiltonianTrace,
    HorizonCostate,
    LimitingSolution,
    hamiltonian,
    hamiltonian_trace,
)
from .integrate import DEFAULT_CONFIG, IntegratorConfig, PayoffAccount
from .problems import (
    CandidateProcess,
    ControlProblem,
    HorizonSequence,
    ValueFunctionModel,
)

__all__ = [
    "CheckResult",
    "VerificationReport",
    "SequenceRow",
    "SequenceVerdict",
    "SequenceReport",
    "check_maximum_condition",
    "check_michel",
    "check_transversality_zero",
    "check_abnormal",
    "check_r_zero",
    "check_hartwick",
    "check_shadow_price",
    "limiting_sequence_report",
    "run_verification",
    "build_report",
    "report_to_json",
    "CHECK_IDS",
]

CHECK_IDS = (
    "maximum",
    "michel",
    "transversality_zero",
    "abnormal",
    "r_zero",
    "hartwick",
    "shadow_price",
)


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one condition check.

    ``status`` is ``pass`` when the worst residual clears the effective
    tolerance, ``fail`` otherwise, ``not-applicable`` when the check's
    hypothesis does not hold, and ``uncertified`` when the residual
    clears a tolerance that rests on a heuristic remainder bound.
    """

    id: str
    status: str
    worst_residual: float
    location: Union[float, None]
    details: tuple[dict, ...] = ()


@dataclass(frozen=True)
class VerificationReport:
    problem: str
    candidate_summary: dict
    lambda_star: float
    psi0_star: np.ndarray
    abnormal: bool
    converged: bool
    checks: tuple[CheckResult, ...]
    horizons: tuple[HorizonCostate, ...]
    config: dict

    @property
    def all_passed(self) -> bool:
        return all(c.status in ("pass", "not-applicable") for c in self.checks)


def _grid(t_grid: Optional[Sequence[float]]) -> np.ndarray:
    if t_grid is None:
        return np.linspace(0.0, 10.0, 101)
    return np.asarray(sorted(float(t) for t in t_grid), dtype=float)


def _hamiltonian_over_samples(
    problem: ControlProblem,
    x: np.ndarray,
    samples: np.ndarray,
    psi: np.ndarray,
    lam: float,
    t: float,
) -> np.ndarray:
    weight = lam * math.exp(-problem.discount * t)
    if problem.batched_dynamics is not None and problem.batched_running_cost is not None:
        f_all = np.asarray(problem.batched_dynamics(x, samples), dtype=float)
        cost_all = np.asarray(problem.batched_running_cost(x, samples), dtype=float)
        return f_all @ psi - weight * cost_all
    values = np.empty(samples.shape[0])
    for i, u in enumerate(samples):
        f = np.asarray(problem.dynamics(x, u), dtype=float)
        values[i] = float(psi @ f) - weight * float(problem.running_cost(x, u))
    return values


def check_maximum_condition(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    t_grid: Optional[Sequence[float]] = None,
    u_sampler: Union[None, np.ndarray, Callable[[], np.ndarray]] = None,
    tol: float = 1e-6,
) -> CheckResult:
    """Sampled supremum of the Hamiltonian against the candidate's control.

    At each grid time the residual is the best sampled Hamiltonian value
    minus the candidate's own; the candidate control is always part of
    the sample set, so an exactly maximizing candidate yields residuals
    at or below zero.  Residuals are normalized by ``1 + |psi(t)|``.
    """
    grid = _grid(t_grid)
    if callable(u_sampler):
        samples = np.asarray(u_sampler(), dtype=float)
    elif u_sampler is not None:
        samples = np.asarray(u_sampler, dtype=float)
    else:
        samples = problem.control_set.sample()
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.size == 0:
        raise ValueError("empty control sample set")

    lam = limiting.lambda_star
    worst = -math.inf
    worst_t = float(grid[0])
    details = []
    for t in grid:
        x = candidate.trajectory(float(t))
        u_star = np.atleast_1d(np.asarray(candidate.control(float(t)), dtype=float))
        psi = limiting.psi_trace(float(t))
        block = np.vstack([samples, u_star[None, :]])
        values = _hamiltonian_over_samples(problem, x, block, psi, lam, float(t))
        h_star = values[-1]
        residual = float(np.max(values) - h_star) / (1.0 + float(np.linalg.norm(psi)))
        if residual > worst:
            worst = residual
            worst_t = float(t)
        details.append({"t": float(t), "residual": residual})
    status = "pass" if worst <= tol else "fail"
    return CheckResult(
        id="maximum",
        status=status,
        worst_residual=worst,
        location=worst_t,
        details=tuple(details),
    )


def check_michel(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    T_grid: Sequence[float] = (0.0, 1.0, 2.0, 5.0),
    horizon: float = 40.0,
    tol: float = 1e-6,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> CheckResult:
    """Stationarity and vanishing of the Hamiltonian against the payoff tail.

    Passes when the Hamiltonian matches ``-lambda r tail(T)`` on the grid
    and is itself negligible at the last grid time, both up to the
    tolerance plus the certified remainder of the truncated tail.  A
    heuristic remainder downgrades a passing verdict to ``uncertified``.

    Vanishing is an asymptotic statement, so the evaluation grid is
    extended to ``horizon/2``: discounting must have had time to act
    before the Hamiltonian is required to be small.
    """
    grid = sorted(set(float(T) for T in T_grid) | {float(horizon) / 2.0})
    htrace = hamiltonian_trace(
        problem, candidate, limiting, grid, horizon, config, check_tol=tol
    )
    budget = tol + htrace.remainder_bound
    worst = float(np.max(htrace.residual))
    worst_T = float(htrace.grid[int(np.argmax(htrace.residual))])
    vanish = abs(float(htrace.H_direct[-1]))
    stationary_ok = worst <= budget
    vanish_ok = vanish <= budget
    if stationary_ok and vanish_ok:
        status = "uncertified" if htrace.heuristic else "pass"
    else:
        status = "fail"
    if vanish > worst:
        worst, worst_T = vanish, float(htrace.grid[-1])
    details = tuple(
        {
            "T": float(T),
            "H_direct": float(htrace.H_direct[i]),
            "H_michel": float(htrace.H_michel[i]),
            "residual": float(htrace.residual[i]),
        }
        for i, T in enumerate(htrace.grid)
    ) + (
        {"budget": budget, "remainder_bound": htrace.remainder_bound,
         "vanishing_at_last": vanish},
    )
    return CheckResult(
        id="michel",
        status=status,
        worst_residual=worst,
        location=worst_T,
        details=details,
    )


def check_transversality_zero(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    tol: float = 1e-6,
) -> CheckResult:
    """Initial-covector condition against the initial set's normal cone.

    The residual is the distance from ``psi(0) - lambda grad l(b)`` to
    the normal cone at the initial point: the full norm on a free initial
    set, zero on a pinned one, componentwise sign defects on a box.
    """
    b = candidate.initial_point
    grad_l = np.asarray(problem.initial_cost_grad(b), dtype=float)
    v = limiting.psi0_star - limiting.lambda_star * grad_l
    residual = problem.initial_set.normal_cone_distance(v, b)
    details = (
        {
            "initial_set": problem.initial_set.describe(),
            "vector": [float(c) for c in v],
        },
    )
    return CheckResult(
        id="transversality_zero",
        status="pass" if residual <= tol else "fail",
        worst_residual=float(residual),
        location=0.0,
        details=details,
    )


def _velocity_pairing(problem, candidate, limiting, t):
    x = candidate.trajectory(float(t))
    u = np.atleast_1d(np.asarray(candidate.control(float(t)), dtype=float))
    psi = limiting.psi_trace(float(t))
    f = np.asarray(problem.dynamics(x, u), dtype=float)
    return float(psi @ f), x, u


def check_abnormal(
    limiting: LimitingSolution,
    candidate: CandidateProcess,
    problem: ControlProblem,
    t_grid: Optional[Sequence[float]] = None,
    tol: float = 1e-6,
) -> CheckResult:
    """Degenerate-multiplier conditions: nontriviality, divergence, annihilation.

    Applicable only when the limit multiplier is zero.  Requires a
    nonvanishing initial covector, a gradient-integral column that grows
    monotonically past ``1/tol``, and both the Hamiltonian and the
    velocity pairing to vanish along the candidate.
    """
    if not limiting.abnormal:
        return CheckResult(
            id="abnormal",
            status="not-applicable",
            worst_residual=0.0,
            location=None,
            details=({"note": "limit multiplier is 1"},),
        )
    grid = _grid(t_grid)
    failures = []
    psi0_norm = float(np.linalg.norm(limiting.psi0_star))
    if psi0_norm <= tol:
        failures.append("initial covector vanishes")
    norms = [hc.I_norm for hc in limiting.horizon_diagnostics]
    increasing = all(b > a for a, b in zip(norms, norms[1:]))
    if not (increasing and norms[-1] > 1.0 / tol):
        failures.append("gradient integral does not diverge across horizons")
    worst = 0.0
    worst_t = float(grid[0])
    for t in grid:
        pairing, x, u = _velocity_pairing(problem, candidate, limiting, t)
        h = hamiltonian(problem, x, u, limiting.psi_trace(float(t)), 0.0, float(t))
        resid = max(abs(pairing), abs(h))
        if resid > worst:
            worst, worst_t = resid, float(t)
    if worst > tol:
        failures.append("Hamiltonian or velocity pairing fails to vanish")
    details = (
        {
            "psi0_norm": psi0_norm,
            "I_norm_last": norms[-1],
            "I_norm_increasing": increasing,
            "failures": failures,
        },
    )
    return CheckResult(
        id="abnormal",
        status="pass" if not failures else "fail",
        worst_residual=worst,
        location=worst_t,
        details=details,
    )


def check_r_zero(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    t_grid: Optional[Sequence[float]] = None,
    tol: float = 1e-6,
) -> CheckResult:
    """Zero-discount conditions: vanishing Hamiltonian, velocity-cost identity.

    Applicable only when the discount is zero; the residual is the larger
    of ``|H(t)|`` and ``|psi f - lambda f0|`` over the grid.
    """
    if problem.discount > 0.0:
        return CheckResult(
            id="r_zero",
            status="not-applicable",
            worst_residual=0.0,
            location=None,
            details=({"note": "discount is positive"},),
        )
    grid = _grid(t_grid)
    lam = limiting.lambda_star
    worst = 0.0
    worst_t = float(grid[0])
    for t in grid:
        pairing, x, u = _velocity_pairing(problem, candidate, limiting, t)
        cost = float(problem.running_cost(x, u))
        # At zero discount the Hamiltonian equals the pairing minus the
        # weighted cost, so one residual covers both conditions.
        resid = abs(pairing - lam * cost)
        if resid > worst:
            worst, worst_t = resid, float(t)
    return CheckResult(
        id="r_zero",
        status="pass" if worst <= tol else "fail",
        worst_residual=worst,
        location=worst_t,
        details=(),
    )


def check_hartwick(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    t_grid: Optional[Sequence[float]] = None,
    tol: float = 1e-6,
) -> CheckResult:
    """Constant running cost along the candidate forces zero velocity pairing.

    Applicability is decided by the sampled standard deviation of the
    running cost (threshold ``10 tol``); when constant, the residual is
    the largest ``|psi f|`` over the grid.
    """
    grid = _grid(t_grid)
    costs = np.empty(grid.size)
    for i, t in enumerate(grid):
        x = candidate.trajectory(float(t))
        u = np.atleast_1d(np.asarray(candidate.control(float(t)), dtype=float))
        costs[i] = float(problem.running_cost(x, u))
    spread = float(np.std(costs))
    if spread > 10.0 * tol:
        return CheckResult(
            id="hartwick",
            status="not-applicable",
            worst_residual=0.0,
            location=None,
            details=({"note": "running cost is not constant", "stdev": spread},),
        )
    worst = 0.0
    worst_t = float(grid[0])
    for t in grid:
        pairing, _, _ = _velocity_pairing(problem, candidate, limiting, t)
        if abs(pairing) > worst:
            worst, worst_t = abs(pairing), float(t)
    return CheckResult(
        id="hartwick",
        status="pass" if worst <= tol else "fail",
        worst_residual=worst,
        location=worst_t,
        details=({"cost_constant": float(np.mean(costs)), "stdev": spread},),
    )


def check_shadow_price(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    vmodel: Optional[ValueFunctionModel] = None,
    t_grid: Optional[Sequence[float]] = None,
    tol: float = 1e-6,
) -> CheckResult:
    """Zero-discount value-gradient identity for the initial covector.

    Requires a normal limit, ``psi(0)`` equal to the negated central
    difference gradient of the value function at the start, and
    ``psi f - f0`` equal to the limiting Hamiltonian constant along the
    candidate.
    """
    if problem.discount > 0.0:
        return CheckResult(
            id="shadow_price",
            status="not-applicable",
            worst_residual=0.0,
            location=None,
            details=({"note": "discount is positive"},),
        )
    vmodel = vmodel or problem.value_model
    if vmodel is None:
        return CheckResult(
            id="shadow_price",
            status="not-applicable",
            worst_residual=0.0,
            location=None,
            details=({"note": "no value model supplied"},),
        )
    b = candidate.initial_point
    m = b.size
    grad_v = np.empty(m)
    for i in range(m):
        h = 1e-5 * (1.0 + abs(b[i]))
        bp, bm = b.copy(), b.copy()
        bp[i] += h
        bm[i] -= h
        grad_v[i] = (
            float(vmodel.value_infinite(bp)) - float(vmodel.value_infinite(bm))
        ) / (2 * h)
    grad_residual = float(np.linalg.norm(limiting.psi0_star + grad_v))

    grid = _grid(t_grid)
    h_const = float(vmodel.hamiltonian_limit)
    pairing_worst = 0.0
    pairing_t = float(grid[0])
    for t in grid:
        pairing, x, u = _velocity_pairing(problem, candidate, limiting, t)
        cost = float(problem.running_cost(x, u))
        resid = abs(pairing - cost - h_const)
        if resid > pairing_worst:
            pairing_worst, pairing_t = resid, float(t)

    failures = []
    if limiting.lambda_star != 1.0:
        failures.append("limit multiplier is not 1")
    if grad_residual > tol:
        failures.append("initial covector does not match the value gradient")
    if pairing_worst > tol:
        failures.append("velocity pairing misses running cost plus constant")
    worst = max(grad_residual, pairing_worst)
    location = 0.0 if grad_residual >= pairing_worst else pairing_t
    details = [
        {
            "gradient_residual": grad_residual,
            "pairing_residual": pairing_worst,
            "failures": failures,
        }
    ]
    if vmodel.value_finite is not None:
        approach = [
            {
                "T": float(T),
                "finite_value_plus_drift": float(vmodel.value_finite(b, float(T)))
                + h_const * float(T),
            }
            for T in (5.0, 10.0, 20.0)
        ]
        approach.append({"target": float(vmodel.value_infinite(b))})
        details.append({"value_approach": approach})
    return CheckResult(
        id="shadow_price",
        status="pass" if not failures else "fail",
        worst_residual=worst,
        location=location,
        details=tuple(details),
    )


# ---------------------------------------------------------------------------
# sequence report


@dataclass(frozen=True)
class SequenceRow:
    tau: float
    T: float
    psi_scaled: np.ndarray
    lambda_n: float
    tail_term: float


@dataclass(frozen=True)
class SequenceVerdict:
    T: float
    psi_target: np.ndarray
    tail_target: float
    psi_gap: float
    tail_gap: float
    converged: bool


@dataclass(frozen=True)
class SequenceReport:
    rows: tuple[SequenceRow, ...]
    verdicts: tuple[SequenceVerdict, ...]

    @property
    def converged(self) -> bool:
        return all(v.converged for v in self.verdicts)


def limiting_sequence_report(
    problem: ControlProblem,
    candidate: CandidateProcess,
    horizons: HorizonSequence,
    T_grid: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 5.0),
    limiting: Optional[LimitingSolution] = None,
    tol: float = 1e-6,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> SequenceReport:
    """Per-horizon covector and tail sequences with their limit verdicts.

    For each horizon ``tau`` and grid time ``T`` the report records the
    multiplier-scaled covector (plain covector in the degenerate case)
    and the scaled truncated tail payoff from ``T`` to ``tau``.  A verdict
    per ``T`` compares the last row against the limit covector and the
    negated limit Hamiltonian and checks that consecutive rows form a
    settling sequence.
    """
    from .costate import limiting_costate

    if limiting is None:
        limiting = limiting_costate(problem, candidate, horizons, tol, config)
    grid = np.asarray(sorted(float(T) for T in T_grid), dtype=float)
    if grid[-1] >= horizons.values[0]:
        raise ValueError("grid times must stay below the first horizon")

    account = PayoffAccount(
        problem, candidate.control, candidate.initial_point, horizons.last, config
    )
    r = problem.discount
    lambda_raw = limiting.lambda_raw
    normal = not limiting.abnormal

    rows = []
    per_T: dict[float, list[SequenceRow]] = {float(T): [] for T in grid}
    for hc in limiting.horizon_diagnostics:
        for T in grid:
            T = float(T)
            psi_T = hc.psi_trace(T)
            psi_scaled = psi_T / hc.lambda_n if normal else psi_T
            # Scale the multiplier into the frame where the settled value
            # is 1 for normal limits, so the tail column approaches the
            # negated limit Hamiltonian.
            lam_scaled = hc.lambda_n / lambda_raw if normal else hc.lambda_n
            tail_term = (
                lam_scaled
                * r
                * (account.running_payoff(hc.tau) - account.running_payoff(T))
            )
            row = SequenceRow(
                tau=hc.tau,
                T=T,
                psi_scaled=psi_scaled,
                lambda_n=hc.lambda_n,
                tail_term=float(tail_term),
            )
            rows.append(row)
            per_T[T].append(row)

    verdicts = []
    for T in grid:
        T = float(T)
        seq = per_T[T]
        psi_target = limiting.psi_trace(T)
        if limiting.lambda_star * r == 0.0:
            tail_target = 0.0
        else:
            tail = account.tail(T, horizons.last, tol)
            tail_target = limiting.lambda_star * r * tail.value
        psi_gap = float(np.linalg.norm(seq[-1].psi_scaled - psi_target))
        tail_gap = abs(seq[-1].tail_term - tail_target)
        psi_steps = [
            float(np.linalg.norm(b.psi_scaled - a.psi_scaled))
            for a, b in zip(seq, seq[1:])
        ]
        tail_steps = [abs(b.tail_term - a.tail_term) for a, b in zip(seq, seq[1:])]
        settled = (
            len(psi_steps) >= 2
            and psi_steps[-1] < tol
            and psi_steps[-2] < tol
            and tail_steps[-1] < tol
            and tail_steps[-2] < tol
        )
        verdicts.append(
            SequenceVerdict(
                T=T,
                psi_target=psi_target,
                tail_target=tail_target,
                psi_gap=psi_gap,
                tail_gap=tail_gap,
                converged=settled,
            )
        )
    return SequenceReport(rows=tuple(rows), verdicts=tuple(verdicts))


# ---------------------------------------------------------------------------
# orchestration and report assembly


def run_verification(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    check_tol: float = 1e-6,
    t_grid: Optional[Sequence[float]] = None,
    michel_grid: Sequence[float] = (0.0, 1.0, 2.0, 5.0),
    horizon: float = 40.0,
    config: IntegratorConfig = DEFAULT_CONFIG,
    vmodel: Optional[ValueFunctionModel] = None,
    checks: Optional[Sequence[str]] = None,
) -> tuple[CheckResult, ...]:
    """Run the standard battery of checks in a fixed order.

    ``checks`` restricts the battery to a subset of ids; unknown ids
    raise ``ValueError``.  Results always come back in the canonical
    order regardless of the requested subset.
    """
    wanted = tuple(checks) if checks is not None else CHECK_IDS
    unknown = [c for c in wanted if c not in CHECK_IDS]
    if unknown:
        raise ValueError(f"unknown check ids: {', '.join(unknown)}")
    results = []
    for check_id in CHECK_IDS:
        if check_id not in wanted:
            continue
        if check_id == "maximum":
            results.append(
                check_maximum_condition(
                    problem, candidate, limiting, t_grid, tol=check_tol
                )
            )
        elif check_id == "michel":
            results.append(
                check_michel(
                    problem, candidate, limiting, michel_grid, horizon,
                    check_tol, config,
                )
            )
        elif check_id == "transversality_zero":
            results.append(
                check_transversality_zero(problem, candidate, limiting, check_tol)
            )
        elif check_id == "abnormal":
            results.append(
                check_abnormal(limiting, candidate, problem, t_grid, check_tol)
            )
        elif check_id == "r_zero":
            results.append(
                check_r_zero(problem, candidate, limiting, t_grid, check_tol)
            )
        elif check_id == "hartwick":
            results.append(
                check_hartwick(problem, candidate, limiting, t_grid, check_tol)
            )
        elif check_id == "shadow_price":
            results.append(
                check_shadow_price(
                    problem, candidate, limiting, vmodel, t_grid, check_tol
                )
            )
    return tuple(results)


def build_report(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    checks: Sequence[CheckResult],
    config_echo: Optional[dict] = None,
) -> VerificationReport:
    """Assemble the deterministic report object for one verification run."""
    control_kind = getattr(candidate.control, "kind", "callable")
    summary = {
        "initial_point": [float(v) for v in candidate.initial_point],
        "control": control_kind,
        "span": [float(candidate.span[0]), float(candidate.span[1])],
    }
    return VerificationReport(
        problem=problem.name,
        candidate_summary=summary,
        lambda_star=limiting.lambda_star,
        psi0_star=limiting.psi0_star,
        abnormal=limiting.abnormal,
        converged=limiting.converged,
        checks=tuple(checks),
        horizons=limiting.horizon_diagnostics,
        config=dict(config_echo or {}),
    )


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in np.atleast_1d(value)]
    if isinstance(value, (np.floating, np.integer)):
        return float(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def report_to_json(report: VerificationReport) -> str:
    """Serialize a report with stable key order and round-trip floats."""
    doc = {
        "problem": report.problem,
        "candidate": _jsonable(report.candidate_summary),
        "lambda_star": float(report.lambda_star),
        "psi0_star": [float(v) for v in report.psi0_star],
        "abnormal": bool(report.abnormal),
        "converged": bool(report.converged),
        "checks": [
            {
                "id": c.id,
                "status": c.status,
                "worst_residual": float(c.worst_residual),
                "location": _jsonable(c.location),
                "details": _jsonable(list(c.details)),
            }
            for c in report.checks
        ],
        "horizons": [
            {
                "tau": float(hc.tau),
                "lambda_n": float(hc.lambda_n),
                "psi0_n": [float(v) for v in hc.psi0],
                "I_norm": float(hc.I_norm),
            }
            for hc in report.horizons
        ],
        "config": _jsonable(report.config),
    }
    return json.dumps(doc, indent=2)
