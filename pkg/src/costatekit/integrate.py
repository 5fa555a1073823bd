"""Adaptive integration of state, fundamental-matrix, and discounted-payoff systems.

All trajectory objects carry the accepted solver steps plus a dense
interpolant, so downstream consumers can evaluate at arbitrary times
without re-integrating.  The fundamental matrix A(t) (solution of the
variational equation along a fixed open-loop control), the discounted
cost-gradient integral I(t), the log-determinant of A, and the running
discounted payoff are integrated jointly with the state as one augmented
system, sharing a single adaptive step sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .problems import CandidateProcess, ControlProblem

__all__ = [
    "IntegratorConfig",
    "DEFAULT_CONFIG",
    "IntegrationError",
    "TailError",
    "Trajectory",
    "FundamentalTrace",
    "CovectorTrace",
    "TailEstimate",
    "PayoffAccount",
    "solve_state",
    "solve_closed_loop",
    "solve_fundamental",
    "accumulate_gradient_integral",
    "payoff",
    "tail_payoff",
    "write_trace_csv",
]

# Magnitude beyond which the gradient integral is reported as divergent
# rather than produced as a number.
OVERFLOW_LIMIT = 1e300


class IntegrationError(RuntimeError):
    """Raised when the adaptive integrator cannot reach the requested horizon."""

    def __init__(self, message: str, last_time: Optional[float] = None):
        super().__init__(message)
        self.last_time = last_time


class TailError(RuntimeError):
    """Raised when an infinite-horizon tail cannot be certified."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and method selection for every ODE solve in the package.

    Parameters
    ----------
    rtol, atol:
        Relative and absolute tolerances handed to the embedded
        Runge-Kutta scheme.
    method:
        Any ``solve_ivp`` explicit scheme; the default eighth-order
        pair keeps long-horizon quadratures cheap at tight tolerances.
    max_step:
        Optional step cap, mainly for dense tabulation of kinky
        synthesized controls.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "DOP853"
    max_step: float = math.inf

    def with_overrides(self, **kwargs) -> "IntegratorConfig":
        merged = {
            "rtol": self.rtol,
            "atol": self.atol,
            "method": self.method,
            "max_step": self.max_step,
        }
        merged.update({k: v for k, v in kwargs.items() if v is not None})
        return IntegratorConfig(**merged)


DEFAULT_CONFIG = IntegratorConfig()


@dataclass
class Trajectory:
    """Solution of a state equation on a finite window.

    ``t``/``y`` hold the accepted steps; calling the object evaluates the
    dense interpolant.  ``y`` has one row per step, ``state_dim`` columns.
    """

    t: np.ndarray
    y: np.ndarray
    dense: Callable[[float], np.ndarray]

    def __call__(self, at: float | np.ndarray) -> np.ndarray:
        out = self.dense(at)
        if np.ndim(at) == 0:
            return np.atleast_1d(np.asarray(out, dtype=float))
        return np.asarray(out, dtype=float).T

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def covers(self, t0: float, t1: float, slack: float = 1e-9) -> bool:
        lo, hi = self.span
        return lo - slack <= t0 and t1 <= hi + slack


def _run_ivp(rhs, t_span, y0, config: IntegratorConfig, events=None):
    sol = solve_ivp(
        rhs,
        t_span,
        np.asarray(y0, dtype=float),
        method=config.method,
        rtol=config.rtol,
        atol=config.atol,
        max_step=config.max_step,
        dense_output=True,
        events=events,
    )
    if sol.status == -1:
        last = float(sol.t[-1]) if sol.t.size else float(t_span[0])
        err = IntegrationError(
            f"integration failed before t={t_span[1]}: {sol.message} "
            f"(last valid time {last})",
            last_time=last,
        )
        err.partial = sol if sol.t.size else None
        raise err
    return sol


def solve_state(
    problem: "ControlProblem",
    b: np.ndarray,
    control: Callable[[float], np.ndarray],
    horizon: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Integrate ``x' = f(x, u(t))`` from ``x(0) = b`` up to ``horizon``.

    ``control`` is an open-loop evaluator; it is called with the scalar
    time and must return a control vector inside the admissible set.
    Raises :class:`IntegrationError` on step-size underflow (for example
    a stiff blow-up), reporting the last valid time.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))

    def rhs(t, x):
        u = np.atleast_1d(np.asarray(control(t), dtype=float))
        return np.asarray(problem.dynamics(x, u), dtype=float)

    sol = _run_ivp(rhs, (0.0, float(horizon)), b, config)
    return Trajectory(t=sol.t, y=sol.y.T, dense=sol.sol)


def solve_closed_loop(
    problem: "ControlProblem",
    b: np.ndarray,
    policy: Callable[[float, np.ndarray], np.ndarray],
    horizon: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Integrate the feedback system ``x' = f(x, policy(t, x))``."""
    b = np.atleast_1d(np.asarray(b, dtype=float))

    def rhs(t, x):
        u = np.atleast_1d(np.asarray(policy(t, x), dtype=float))
        return np.asarray(problem.dynamics(x, u), dtype=float)

    sol = _run_ivp(rhs, (0.0, float(horizon)), b, config)
    return Trajectory(t=sol.t, y=sol.y.T, dense=sol.sol)


@dataclass
class FundamentalTrace:
    """Joint trace of state, fundamental matrix, gradient integral and payoff.

    Components at the stored steps ``t``:

    - ``x``: state ``x(xi, u; t)``, shape ``(n, m)``;
    - ``A``: fundamental matrix of the variational equation
      ``A' = (df/dx) A``, ``A(0) = Id``, shape ``(n, m, m)``;
    - ``I``: discounted cost-gradient integral
      ``I(t) = int_0^t exp(-r s) (df0/dx) A ds`` (a covector), shape ``(n, m)``;
    - ``logdet``: running integral of ``trace(df/dx)``, which equals
      ``log det A`` by the Liouville identity;
    - ``payoff``: running discounted cost ``int_0^t exp(-r s) f0 ds``.

    ``diverged`` is set instead of raising when ``I`` overflows the
    representable range before the horizon.
    """

    xi: np.ndarray
    t: np.ndarray
    x: np.ndarray
    A: np.ndarray
    I: np.ndarray
    logdet: np.ndarray
    payoff: np.ndarray
    dense: Callable[[float], np.ndarray]
    diverged: bool = False

    @property
    def state_dim(self) -> int:
        return self.x.shape[1]

    def _at(self, t: float) -> np.ndarray:
        return np.asarray(self.dense(t), dtype=float)

    def state_at(self, t: float) -> np.ndarray:
        m = self.state_dim
        return self._at(t)[:m]

    def matrix_at(self, t: float) -> np.ndarray:
        m = self.state_dim
        return self._at(t)[m : m + m * m].reshape(m, m)

    def gradient_at(self, t: float) -> np.ndarray:
        m = self.state_dim
        return self._at(t)[m + m * m : m + m * m + m]

    def logdet_at(self, t: float) -> float:
        return float(self._at(t)[-2])

    def payoff_at(self, t: float) -> float:
        return float(self._at(t)[-1])

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])


def _augmented_rhs(problem: "ControlProblem", control) -> Callable:
    m = problem.state_dim
    r = problem.discount
    dynamics = problem.dynamics
    jac = problem.dynamics_jac
    cost = problem.running_cost
    grad = problem.running_cost_grad

    def rhs(t, z):
        x = z[:m]
        A = z[m : m + m * m].reshape(m, m)
        u = np.atleast_1d(np.asarray(control(t), dtype=float))
        Jx = np.asarray(jac(x, u), dtype=float).reshape(m, m)
        disc = math.exp(-r * t)
        out = np.empty(m * m + 2 * m + 2)
        out[:m] = np.asarray(dynamics(x, u), dtype=float)
        out[m : m + m * m] = (Jx @ A).ravel()
        out[m + m * m : m + m * m + m] = disc * (
            np.asarray(grad(x, u), dtype=float) @ A
        )
        out[-2] = np.trace(Jx)
        out[-1] = disc * float(cost(x, u))
        return out

    return rhs


def solve_fundamental(
    problem: "ControlProblem",
    xi: np.ndarray,
    control: Callable[[float], np.ndarray],
    horizon: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> FundamentalTrace:
    """Integrate state, fundamental matrix, gradient integral and payoff jointly.

    The variational matrix and the gradient integral share the state's
    adaptive step sequence by construction, so their quadrature order is
    consistent with the trajectory itself.
    """
    m = problem.state_dim
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    z0 = np.concatenate([xi, np.eye(m).ravel(), np.zeros(m), [0.0, 0.0]])
    rhs = _augmented_rhs(problem, control)

    diverged = False
    try:
        sol = _run_ivp(rhs, (0.0, float(horizon)), z0, config)
    except IntegrationError as err:
        # An overflowing gradient integral is flagged divergence, not failure.
        partial = getattr(err, "partial", None)
        if partial is None:
            raise
        tail_state = partial.y[:, -1]
        if not (
            np.any(~np.isfinite(tail_state))
            or np.any(np.abs(tail_state) > OVERFLOW_LIMIT / 1e10)
        ):
            raise
        sol = partial
        diverged = True

    z = sol.y.T
    if not np.all(np.isfinite(z)):
        diverged = True
    ivals = z[:, m + m * m : m + m * m + m]
    if np.any(np.abs(ivals) > OVERFLOW_LIMIT):
        diverged = True

    return FundamentalTrace(
        xi=xi,
        t=sol.t,
        x=z[:, :m],
        A=z[:, m : m + m * m].reshape(-1, m, m),
        I=ivals,
        logdet=z[:, -2],
        payoff=z[:, -1],
        dense=sol.sol,
        diverged=diverged,
    )


@dataclass
class CovectorTrace:
    """A time-indexed covector with dense evaluation, e.g. ``I(xi; .)``."""

    t: np.ndarray
    values: np.ndarray
    _evaluate: Callable[[float], np.ndarray]
    diverged: bool = False

    def __call__(self, at: float) -> np.ndarray:
        return np.asarray(self._evaluate(at), dtype=float)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def accumulate_gradient_integral(
    problem: "ControlProblem",
    xi: np.ndarray,
    control: Callable[[float], np.ndarray],
    horizon: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> CovectorTrace:
    """Return the discounted cost-gradient integral ``I(xi; .)`` on ``[0, horizon]``."""
    trace = solve_fundamental(problem, xi, control, horizon, config)
    return CovectorTrace(
        t=trace.t,
        values=trace.I,
        _evaluate=trace.gradient_at,
        diverged=trace.diverged,
    )


def payoff(
    problem: "ControlProblem",
    b: np.ndarray,
    control: Callable[[float], np.ndarray],
    start: float,
    horizon: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> float:
    """Discounted cost of running ``control`` from ``b`` over ``[0, horizon]``.

    The process is clocked from ``start``: the integrand is
    ``exp(-r (start + t)) f0``, so shifting ``start`` rescales the payoff
    by ``exp(-r start)`` exactly.
    """
    m = problem.state_dim
    r = problem.discount
    b = np.atleast_1d(np.asarray(b, dtype=float))

    def rhs(t, z):
        x = z[:m]
        u = np.atleast_1d(np.asarray(control(t), dtype=float))
        out = np.empty(m + 1)
        out[:m] = np.asarray(problem.dynamics(x, u), dtype=float)
        out[m] = math.exp(-r * t) * float(problem.running_cost(x, u))
        return out

    sol = _run_ivp(rhs, (0.0, float(horizon)), np.concatenate([b, [0.0]]), config)
    return math.exp(-r * start) * float(sol.y[m, -1])


@dataclass(frozen=True)
class TailEstimate:
    """Tail of the discounted payoff past ``T`` with a remainder bound.

    ``heuristic`` marks bounds not backed by a declared cost bound; such
    tails propagate as ``uncertified`` in downstream checks.
    """

    value: float
    remainder_bound: float
    heuristic: bool


class PayoffAccount:
    """Cached payoff evaluations along one fixed open-loop control.

    Solves the (state, running payoff) system once per initial point and
    horizon, then answers payoff, tail, and infinite-horizon queries from
    the dense interpolant.
    """

    def __init__(
        self,
        problem: "ControlProblem",
        control: Callable[[float], np.ndarray],
        b_star: np.ndarray,
        horizon: float,
        config: IntegratorConfig = DEFAULT_CONFIG,
    ):
        self.problem = problem
        self.control = control
        self.b_star = np.atleast_1d(np.asarray(b_star, dtype=float))
        self.horizon = float(horizon)
        self.config = config
        self._cache: dict[bytes, tuple[float, object]] = {}

    def _solution(self, b: np.ndarray, min_horizon: float):
        m = self.problem.state_dim
        r = self.problem.discount
        b = np.atleast_1d(np.asarray(b, dtype=float))
        key = b.tobytes()
        hit = self._cache.get(key)
        if hit is not None and hit[0] >= min_horizon - 1e-12:
            return hit[1]
        horizon = max(min_horizon, self.horizon)

        def rhs(t, z):
            x = z[:m]
            u = np.atleast_1d(np.asarray(self.control(t), dtype=float))
            out = np.empty(m + 1)
            out[:m] = np.asarray(self.problem.dynamics(x, u), dtype=float)
            out[m] = math.exp(-r * t) * float(self.problem.running_cost(x, u))
            return out

        sol = _run_ivp(
            rhs, (0.0, horizon), np.concatenate([b, [0.0]]), self.config
        )
        self._cache[key] = (horizon, sol)
        return sol

    def running_payoff(self, T: float, b: Optional[np.ndarray] = None) -> float:
        """Payoff accumulated on ``[0, T]`` from ``b`` (default: the anchor point)."""
        b = self.b_star if b is None else b
        sol = self._solution(b, float(T))
        return float(sol.sol(float(T))[-1])

    def payoff_from(self, b: np.ndarray, start: float, T: float) -> float:
        """Payoff with the discount clocked from ``start``; scales exactly
        by ``exp(-r start)``."""
        return math.exp(-self.problem.discount * start) * self.running_payoff(T, b)

    def tail(
        self,
        T: float,
        horizon: Optional[float] = None,
        check_tol: float = 1e-6,
    ) -> TailEstimate:
        """Tail payoff on ``[T, horizon]`` plus a bound for the remainder."""
        H = self.horizon if horizon is None else float(horizon)
        if T > H + 1e-12:
            raise ValueError(f"tail start {T} exceeds horizon {H}")
        value = self.running_payoff(H) - self.running_payoff(T)
        return TailEstimate(
            value=value, **self._remainder(H, check_tol)
        )

    def jstar(self, check_tol: float = 1e-6) -> TailEstimate:
        """Estimate of the full infinite-horizon payoff from the anchor point."""
        value = self.running_payoff(self.horizon)
        return TailEstimate(value=value, **self._remainder(self.horizon, check_tol))

    def _remainder(self, H: float, check_tol: float) -> dict:
        r = self.problem.discount
        M = self.problem.cost_bound
        if r > 0.0 and M is not None:
            return {"remainder_bound": M * math.exp(-r * H) / r, "heuristic": False}
        # No usable geometric bound: fall back to the increment over the
        # last doubling of the window.
        increment = abs(self.running_payoff(H) - self.running_payoff(H / 2.0))
        if r == 0.0 and increment >= 0.01 * check_tol:
            raise TailError(
                "tail not certifiable: undiscounted payoff still moving by "
                f"{increment:.3e} over [{H / 2.0}, {H}]"
            )
        return {"remainder_bound": increment, "heuristic": True}


def tail_payoff(
    problem: "ControlProblem",
    candidate: "CandidateProcess",
    T: float,
    horizon: float,
    config: IntegratorConfig = DEFAULT_CONFIG,
    check_tol: float = 1e-6,
) -> TailEstimate:
    """Tail payoff of a candidate process past ``T``, with remainder bound.

    For a positive discount with a declared cost bound ``M`` the remainder
    past ``horizon`` is bounded by ``M exp(-r horizon)/r``; otherwise the
    estimate carries a heuristic bound, and an undiscounted tail that has
    not settled raises :class:`TailError`.
    """
    account = PayoffAccount(
        problem, candidate.control, candidate.initial_point, horizon, config
    )
    return account.tail(T, horizon, check_tol)


def _format(value: float) -> str:
    return repr(float(value))


def write_trace_csv(path, trace: FundamentalTrace) -> None:
    """Write a fundamental trace as CSV.

    Columns: ``t, x_1..x_m, A_11..A_mm`` (row-major), ``I_1..I_m, logdetA``.
    """
    import csv

    m = trace.state_dim
    header = (
        ["t"]
        + [f"x_{i + 1}" for i in range(m)]
        + [f"A_{i + 1}{j + 1}" for i in range(m) for j in range(m)]
        + [f"I_{i + 1}" for i in range(m)]
        + ["logdetA"]
    )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for k in range(trace.t.size):
            row = (
                [_format(trace.t[k])]
                + [_format(v) for v in trace.x[k]]
                + [_format(v) for v in trace.A[k].ravel()]
                + [_format(v) for v in trace.I[k]]
                + [_format(trace.logdet[k])]
            )
            writer.writerow(row)
