"""Terminal-anchored adjoint solutions, their normalized limit, and Hamiltonian traces.

For a truncation horizon tau, the adjoint system

    -psi'(t) = psi(t) df/dx(x(t), u(t)) - lam exp(-r t) df0/dx(x(t), u(t)),
    psi(tau) = 0,

is integrated backward along a fixed candidate with a provisional
multiplier, then rescaled so that ``lam + |psi(0)| = 1``.  Sweeping tau
over an increasing horizon sequence and renormalizing the settled pair
yields the limit multiplier ``lambda_star`` (0 or 1) and the limit
covector ``psi_star``; traces of the Hamiltonian

    H(t) = psi f(x, u) - lam exp(-r t) f0(x, u)

along the candidate, together with the discounted-tail representative it
should match, feed the downstream condition checks.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .integrate import (
    DEFAULT_CONFIG,
    CovectorTrace,
    FundamentalTrace,
    IntegrationError,
    IntegratorConfig,
    PayoffAccount,
    _format,
    _run_ivp,
    solve_fundamental,
)
from .problems import CandidateProcess, ControlProblem, HorizonSequence, ProblemError

__all__ = [
    "HorizonCostate",
    "LimitingSolution",
    "HamiltonianTrace",
    "integrate_costate",
    "finite_horizon_costate",
    "limiting_costate",
    "cauchy_costate",
    "hamiltonian",
    "hamiltonian_trace",
    "write_costate_csv",
    "write_horizon_csv",
]


@dataclass(frozen=True)
class HorizonCostate:
    """Normalized adjoint solution anchored at ``psi(tau) = 0``.

    ``identity_residual`` is the defect of ``psi0 = -lambda_n I(b; tau)``
    against the forward gradient integral; it cross-checks the backward
    solve against an independent quadrature.
    """

    tau: float
    lambda_n: float
    psi0: np.ndarray
    psi_trace: CovectorTrace
    gradient_integral: np.ndarray
    I_norm: float
    identity_residual: float


@dataclass(frozen=True)
class LimitingSolution:
    """Renormalized limit of the horizon sweep.

    ``lambda_star`` is exactly 0.0 or 1.0; ``abnormal`` is true iff it is
    0.  ``horizon_diagnostics`` keeps the full per-horizon record, and
    ``deltas`` the consecutive-pair increments used for the convergence
    verdict.  ``psi_trace`` is the limit covector integrated forward from
    ``psi0_star`` along the candidate.
    """

    lambda_star: float
    psi0_star: np.ndarray
    psi_trace: CovectorTrace
    abnormal: bool
    converged: bool
    horizon_diagnostics: tuple[HorizonCostate, ...]
    deltas: tuple[float, ...]
    lambda_raw: float
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class HamiltonianTrace:
    """Hamiltonian along the candidate versus its discounted-tail representative.

    ``H_direct`` evaluates the Hamiltonian pointwise; ``H_michel`` is
    ``-lambda_star r tail(T)``, the continuous representative it must
    match.  ``remainder_bound`` bounds the contribution of the ignored
    tail past the working horizon (already scaled by ``lambda_star r``);
    ``heuristic`` marks bounds not backed by a declared cost bound.
    """

    grid: np.ndarray
    H_direct: np.ndarray
    H_michel: np.ndarray
    residual: np.ndarray
    remainder_bound: float
    heuristic: bool


def _adjoint_rhs(
    problem: ControlProblem,
    candidate: CandidateProcess,
    lam: float,
) -> Callable:
    r = problem.discount

    def rhs(t, psi):
        x = candidate.trajectory(t)
        u = np.atleast_1d(np.asarray(candidate.control(t), dtype=float))
        jac = np.asarray(problem.dynamics_jac(x, u), dtype=float)
        grad = np.asarray(problem.running_cost_grad(x, u), dtype=float)
        return -psi @ jac + lam * math.exp(-r * t) * grad

    return rhs


def integrate_costate(
    problem: ControlProblem,
    candidate: CandidateProcess,
    lam: float,
    psi_anchor: np.ndarray,
    t_anchor: float,
    t_target: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> CovectorTrace:
    """Integrate the adjoint equation from ``(t_anchor, psi_anchor)`` to ``t_target``.

    The direction is inferred from the endpoints (backward solves anchor
    at the terminal condition, forward solves replay a limit covector).
    The returned trace stores an increasing time grid either way.
    """
    t0, t1 = candidate.span
    lo, hi = min(t_anchor, t_target), max(t_anchor, t_target)
    if not candidate.trajectory.covers(lo, hi):
        raise ProblemError(
            f"candidate trajectory covers [{t0}, {t1}], adjoint needs [{lo}, {hi}]"
        )
    psi_anchor = np.atleast_1d(np.asarray(psi_anchor, dtype=float))
    rhs = _adjoint_rhs(problem, candidate, lam)
    sol = _run_ivp(rhs, (float(t_anchor), float(t_target)), psi_anchor, config)
    order = np.argsort(sol.t)
    dense = sol.sol
    return CovectorTrace(
        t=sol.t[order],
        values=sol.y.T[order],
        _evaluate=lambda s: np.asarray(dense(float(s)), dtype=float),
    )


def cauchy_costate(
    fundamental: FundamentalTrace,
    lam: float,
    psi0: np.ndarray,
    t: float,
) -> np.ndarray:
    """Transport ``(psi0, lam)`` to time ``t`` through the fundamental matrix.

    Evaluates ``(psi0 + lam I(t)) A(t)^{-1}``, the closed-form solution of
    the adjoint equation expressed through the variational data.
    """
    v = np.atleast_1d(np.asarray(psi0, dtype=float)) + lam * fundamental.gradient_at(t)
    return np.linalg.solve(fundamental.matrix_at(t).T, v)


def _scaled_trace(trace: CovectorTrace, c: float) -> CovectorTrace:
    inner = trace._evaluate
    return CovectorTrace(
        t=trace.t,
        values=c * trace.values,
        _evaluate=lambda s: c * np.asarray(inner(s), dtype=float),
        diverged=trace.diverged,
    )


def _cauchy_trace(
    fundamental: FundamentalTrace, lam: float, psi0: np.ndarray
) -> CovectorTrace:
    psi0 = np.atleast_1d(np.asarray(psi0, dtype=float))
    values = np.stack([cauchy_costate(fundamental, lam, psi0, t) for t in fundamental.t])
    return CovectorTrace(
        t=fundamental.t,
        values=values,
        _evaluate=lambda s: cauchy_costate(fundamental, lam, psi0, s),
        diverged=fundamental.diverged,
    )


def finite_horizon_costate(
    problem: ControlProblem,
    candidate: CandidateProcess,
    tau: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
    fundamental: Optional[FundamentalTrace] = None,
) -> HorizonCostate:
    """Backward adjoint solve anchored at ``psi(tau) = 0``, normalized.

    Integrates with a provisional unit multiplier, rescales the pair so
    ``lambda_n + |psi(0)| = 1``, and records the defect against the
    forward gradient integral.  If the backward solve overflows, the
    normalized pair is recovered directly from the gradient integral and
    the trace is reconstructed through the fundamental matrix.
    """
    tau = float(tau)
    if fundamental is None or fundamental.span[1] < tau - 1e-9:
        fundamental = solve_fundamental(
            problem, candidate.initial_point, candidate.control, tau, config
        )
    I_tau = fundamental.gradient_at(tau)
    I_norm = float(np.linalg.norm(I_tau))

    try:
        provisional = integrate_costate(
            problem, candidate, 1.0, np.zeros(problem.state_dim), tau, 0.0, config
        )
        psi0_prov = provisional(0.0)
        scale = 1.0 / (1.0 + float(np.linalg.norm(psi0_prov)))
        lambda_n = scale
        psi0 = scale * psi0_prov
        trace = _scaled_trace(provisional, scale)
    except IntegrationError:
        # Backward blow-up: fall back to the normalized closed form and a
        # fundamental-matrix reconstruction of the trace.
        lambda_n = 1.0 / (1.0 + I_norm)
        psi0 = -lambda_n * I_tau
        trace = _cauchy_trace(fundamental, lambda_n, psi0)

    residual = float(np.linalg.norm(psi0 + lambda_n * I_tau))
    return HorizonCostate(
        tau=tau,
        lambda_n=lambda_n,
        psi0=psi0,
        psi_trace=trace,
        gradient_integral=I_tau,
        I_norm=I_norm,
        identity_residual=residual,
    )


def _worker_count() -> int:
    raw = os.environ.get("HORIZON_LIMIT_THREADS", "0").strip()
    try:
        return max(0, int(raw)) if raw else 0
    except ValueError:
        return 0


def limiting_costate(
    problem: ControlProblem,
    candidate: CandidateProcess,
    horizons: HorizonSequence,
    tol: float = 1e-6,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> LimitingSolution:
    """Extract the normalized limit of the horizon sweep.

    Solves one adjoint problem per horizon (sharing a single fundamental
    solve over the largest one), declares convergence when the last two
    consecutive increments ``|dlambda| + |dpsi0|`` fall below ``tol``, and
    renormalizes: a settled multiplier above ``tol`` becomes exactly 1
    (dividing the covector accordingly), otherwise the multiplier is 0 and
    the covector is kept as the settled unit-deficient limit.

    A sweep that has not settled returns ``converged=False`` with full
    diagnostics instead of raising.  The limit covector trace is
    integrated forward over the candidate's whole cached window.
    """
    if len(horizons) < 3:
        raise ProblemError("limit extraction needs at least three horizons")
    t_hi = candidate.span[1]
    if horizons.last > t_hi + 1e-9:
        raise ProblemError(
            f"candidate trajectory ends at {t_hi}, horizons reach {horizons.last}"
        )
    fundamental = solve_fundamental(
        problem, candidate.initial_point, candidate.control, horizons.last, config
    )

    def solve_one(tau: float) -> HorizonCostate:
        return finite_horizon_costate(problem, candidate, tau, config, fundamental)

    workers = _worker_count()
    taus = list(horizons)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve_one, taus))
    else:
        results = [solve_one(tau) for tau in taus]
    results.sort(key=lambda hc: hc.tau)

    deltas = tuple(
        abs(b.lambda_n - a.lambda_n) + float(np.linalg.norm(b.psi0 - a.psi0))
        for a, b in zip(results, results[1:])
    )
    converged = deltas[-1] < tol and deltas[-2] < tol
    notes: list[str] = []
    if not converged and len(deltas) >= 2 and deltas[-1] > deltas[-2]:
        notes.append("increments grow toward the last horizons: oscillation suspected")

    last = results[-1]
    lambda_raw = last.lambda_n
    if lambda_raw > tol:
        lambda_star = 1.0
        psi0_star = last.psi0 / lambda_raw
        abnormal = False
    else:
        lambda_star = 0.0
        psi0_star = last.psi0.copy()
        abnormal = True
        if float(np.linalg.norm(psi0_star)) <= tol:
            converged = False
            notes.append("limit pair is trivial: multiplier and covector both vanish")

    psi_trace = integrate_costate(
        problem, candidate, lambda_star, psi0_star, 0.0, t_hi, config
    )
    return LimitingSolution(
        lambda_star=lambda_star,
        psi0_star=psi0_star,
        psi_trace=psi_trace,
        abnormal=abnormal,
        converged=converged,
        horizon_diagnostics=tuple(results),
        deltas=deltas,
        lambda_raw=lambda_raw,
        notes=tuple(notes),
    )


def hamiltonian(
    problem: ControlProblem,
    x: np.ndarray,
    u: np.ndarray,
    psi: np.ndarray,
    lam: float,
    t: float,
) -> float:
    """Pointwise Hamiltonian ``psi f(x, u) - lam exp(-r t) f0(x, u)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    f = np.asarray(problem.dynamics(x, u), dtype=float)
    cost = float(problem.running_cost(x, u))
    return float(psi @ f - lam * math.exp(-problem.discount * t) * cost)


def hamiltonian_trace(
    problem: ControlProblem,
    candidate: CandidateProcess,
    limiting: LimitingSolution,
    grid: Sequence[float],
    horizon: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
    check_tol: float = 1e-6,
) -> HamiltonianTrace:
    """Hamiltonian along the candidate against its tail representative.

    At each grid time ``T``, ``H_direct`` evaluates the Hamiltonian with
    the limit pair and ``H_michel`` equals ``-lambda_star r tail(T)``
    accumulated up to ``horizon``.  A zero discount or a vanishing
    multiplier forces the representative to be identically zero, with a
    certified zero remainder.
    """
    grid = np.asarray(sorted(float(g) for g in grid), dtype=float)
    r = problem.discount
    lam = limiting.lambda_star
    H_direct = np.empty(grid.size)
    for i, T in enumerate(grid):
        x = candidate.trajectory(T)
        u = np.atleast_1d(np.asarray(candidate.control(float(T)), dtype=float))
        H_direct[i] = hamiltonian(problem, x, u, limiting.psi_trace(T), lam, float(T))

    if lam * r == 0.0:
        H_michel = np.zeros(grid.size)
        bound = 0.0
        heuristic = False
    else:
        account = PayoffAccount(
            problem, candidate.control, candidate.initial_point, horizon, config
        )
        H_michel = np.empty(grid.size)
        bound = 0.0
        heuristic = False
        for i, T in enumerate(grid):
            tail = account.tail(float(T), horizon, check_tol)
            H_michel[i] = -lam * r * tail.value
            bound = max(bound, lam * r * tail.remainder_bound)
            heuristic = heuristic or tail.heuristic

    residual = np.abs(H_direct - H_michel)
    return HamiltonianTrace(
        grid=grid,
        H_direct=H_direct,
        H_michel=H_michel,
        residual=residual,
        remainder_bound=bound,
        heuristic=heuristic,
    )


def write_costate_csv(path, limiting: LimitingSolution, htrace: HamiltonianTrace) -> None:
    """Write the limit covector and Hamiltonian comparison along a grid.

    Columns: ``t, psi_1..psi_m, lambda, H_direct, H_michel``.
    """
    m = limiting.psi0_star.size
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["t"] + [f"psi_{j + 1}" for j in range(m)] + ["lambda", "H_direct", "H_michel"]
        )
        for i, t in enumerate(htrace.grid):
            psi = limiting.psi_trace(float(t))
            writer.writerow(
                [_format(t)]
                + [_format(v) for v in psi]
                + [
                    _format(limiting.lambda_star),
                    _format(htrace.H_direct[i]),
                    _format(htrace.H_michel[i]),
                ]
            )


def write_horizon_csv(path, diagnostics: Sequence[HorizonCostate]) -> None:
    """Write the per-horizon sweep record.

    Columns: ``tau, lambda_n, psi0_1..psi0_m, I_norm``.
    """
    if not diagnostics:
        raise ValueError("no horizon diagnostics to write")
    m = diagnostics[0].psi0.size
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["tau", "lambda_n"] + [f"psi0_{j + 1}" for j in range(m)] + ["I_norm"]
        )
        for hc in diagnostics:
            writer.writerow(
                [_format(hc.tau), _format(hc.lambda_n)]
                + [_format(v) for v in hc.psi0]
                + [_format(hc.I_norm)]
            )
