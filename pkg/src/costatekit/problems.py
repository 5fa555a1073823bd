"""Problem descriptions, admissible sets, candidate processes, and a benchmark catalog.

A :class:`ControlProblem` packages the data of an infinite-horizon
discounted minimization

    minimize  l(x(0)) + int_0^inf exp(-r t) f0(x, u) dt
    subject to  x' = f(x, u),  u(t) in U,  x(0) in C,

through plain callables plus set descriptors for ``U`` and ``C``.  A
:class:`CandidateProcess` pins down one admissible initial point and one
open-loop control together with its cached trajectory; every analysis in
this package runs along such a candidate.

The catalog entries are small closed-form benchmarks: two scalar
linear-quadratic regulators (discounted and undiscounted), a free-initial
variant with a linear initial cost, a degenerate problem whose limiting
multiplier vanishes, and a constant-cost problem used by the
constant-running-cost diagnostics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .integrate import (
    DEFAULT_CONFIG,
    IntegratorConfig,
    Trajectory,
    solve_closed_loop,
)

__all__ = [
    "ProblemError",
    "CatalogError",
    "FreeSpace",
    "Singleton",
    "Box",
    "BoxControls",
    "FiniteControls",
    "ControlProblem",
    "ValueFunctionModel",
    "TabulatedControl",
    "PolicyControl",
    "CandidateProcess",
    "HorizonSequence",
    "riccati_gain",
    "catalog_ids",
    "instantiate_problem",
    "candidate_process",
    "validate_problem",
    "validate_candidate",
    "load_control_csv",
    "load_trajectory_csv",
    "tabulated_trajectory",
]

# Control box half-width for the regulator catalog entries.  Off-extremal
# shooting trajectories must be able to grow past the blow-up guard
# (1e6) within moderate horizons, so the box is wide; replayed optimal
# candidates stay deep in its interior.
_REGULATOR_CONTROL_BOUND = 1e7


class ProblemError(ValueError):
    """Invalid problem data or an inadmissible candidate."""


class CatalogError(ValueError):
    """Unknown catalog id or out-of-range catalog parameter."""


# ---------------------------------------------------------------------------
# admissible-set descriptors


@dataclass(frozen=True)
class FreeSpace:
    """Initial set equal to the whole state space."""

    dim: int

    def contains(self, b: np.ndarray, tol: float = 1e-9) -> bool:
        return np.asarray(b).size == self.dim

    def normal_cone_distance(self, v: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> float:
        # Normal cone is {0}: the residual is the full vector norm.
        return float(np.linalg.norm(v))

    def describe(self) -> str:
        return f"free({self.dim})"


@dataclass(frozen=True)
class Singleton:
    """Initial set consisting of a single admissible point."""

    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "point", np.atleast_1d(np.asarray(self.point, dtype=float))
        )

    @property
    def dim(self) -> int:
        return self.point.size

    def contains(self, b: np.ndarray, tol: float = 1e-9) -> bool:
        b = np.atleast_1d(np.asarray(b, dtype=float))
        return b.size == self.point.size and bool(
            np.all(np.abs(b - self.point) <= tol)
        )

    def normal_cone_distance(self, v: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> float:
        # Normal cone is the whole dual space: every residual is absorbed.
        return 0.0

    def describe(self) -> str:
        return f"singleton({np.asarray(self.point).tolist()})"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, usable as initial set or control set geometry."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise ProblemError("box bounds must share a shape")
        if np.any(lower > upper):
            raise ProblemError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, b: np.ndarray, tol: float = 1e-9) -> bool:
        b = np.atleast_1d(np.asarray(b, dtype=float))
        return b.size == self.dim and bool(
            np.all(b >= self.lower - tol) and np.all(b <= self.upper + tol)
        )

    def normal_cone_distance(self, v: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> float:
        """Distance from ``v`` to the limiting normal cone of the box at ``b``.

        Componentwise: interior coordinates admit only 0, an active lower
        face admits nonpositive values, an active upper face nonnegative
        ones, and a pinched coordinate (lower == upper) admits anything.
        """
        v = np.atleast_1d(np.asarray(v, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        excess = np.empty_like(v)
        for i in range(self.dim):
            at_lower = b[i] <= self.lower[i] + tol
            at_upper = b[i] >= self.upper[i] - tol
            if at_lower and at_upper:
                excess[i] = 0.0
            elif at_lower:
                excess[i] = max(v[i], 0.0)
            elif at_upper:
                excess[i] = max(-v[i], 0.0)
            else:
                excess[i] = abs(v[i])
        return float(np.linalg.norm(excess))

    def describe(self) -> str:
        return f"box({self.lower.tolist()}, {self.upper.tolist()})"


InitialSet = Union[FreeSpace, Singleton, Box]


@dataclass(frozen=True)
class BoxControls:
    """Box-shaped control set with a deterministic sampling grid."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        box = Box(self.lower, self.upper)
        object.__setattr__(self, "lower", box.lower)
        object.__setattr__(self, "upper", box.upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, u: np.ndarray, tol: float = 1e-9) -> bool:
        return Box(self.lower, self.upper).contains(u, tol)

    def sample(self, n_per_dim: int = 101, cap: int = 10_000) -> np.ndarray:
        """Deterministic tensor grid of admissible controls, shape ``(n, k)``.

        The per-dimension count shrinks so the total never exceeds ``cap``.
        """
        k = self.dim
        count = max(2, min(n_per_dim, int(cap ** (1.0 / k))))
        axes = [np.linspace(self.lower[i], self.upper[i], count) for i in range(k)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def project(self, u: np.ndarray) -> np.ndarray:
        return np.clip(np.atleast_1d(np.asarray(u, dtype=float)), self.lower, self.upper)

    def describe(self) -> str:
        return f"box({self.lower.tolist()}, {self.upper.tolist()})"


@dataclass(frozen=True)
class FiniteControls:
    """Finite list of admissible control vectors."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ProblemError("finite control set needs at least one point")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def contains(self, u: np.ndarray, tol: float = 1e-9) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return bool(np.any(np.all(np.abs(self.points - u) <= tol, axis=1)))

    def sample(self, n_per_dim: int = 101, cap: int = 10_000) -> np.ndarray:
        return self.points

    def describe(self) -> str:
        return f"finite({self.points.shape[0]} points)"


ControlSet = Union[BoxControls, FiniteControls]


# ---------------------------------------------------------------------------
# problem and candidate types


@dataclass(frozen=True)
class ValueFunctionModel:
    """Optimal-value data used by the shadow-price diagnostics.

    ``value_infinite`` evaluates the infinite-horizon optimal value from an
    initial point; ``hamiltonian_limit`` is the constant limit of the
    maximized Hamiltonian; ``value_finite`` (optional) evaluates the
    finite-horizon optimal value ``V(b, T)``.
    """

    value_infinite: Callable[[np.ndarray], float]
    hamiltonian_limit: float = 0.0
    value_finite: Optional[Callable[[np.ndarray, float], float]] = None


@dataclass(frozen=True)
class ControlProblem:
    """Data of one infinite-horizon discounted minimization.

    All state/control arguments of the callables are 1-d float arrays;
    ``dynamics_jac`` returns the ``(m, m)`` Jacobian in the state and
    ``running_cost_grad`` the cost gradient in the state.

    ``batched_dynamics`` / ``batched_running_cost`` are optional fast paths
    evaluating a whole ``(n, k)`` block of controls at a fixed state;
    ``scalar_dynamics`` / ``scalar_running_cost`` are optional plain-float
    evaluators for one-state, one-control problems (they keep the
    discrete brute-force solver out of array-allocation overhead).  All
    fast paths must agree with the reference evaluators.

    ``cost_bound`` bounds ``|f0|`` along the tube of trajectories whose
    tails get certified (the replayed candidates); it feeds the geometric
    tail remainder ``M exp(-r H)/r``.
    """

    state_dim: int
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dynamics_jac: Callable[[np.ndarray, np.ndarray], np.ndarray]
    running_cost: Callable[[np.ndarray, np.ndarray], float]
    running_cost_grad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    discount: float
    initial_set: InitialSet
    control_set: ControlSet
    initial_cost: Callable[[np.ndarray], float] = lambda b: 0.0
    initial_cost_grad: Callable[[np.ndarray], np.ndarray] = None  # type: ignore[assignment]
    cost_bound: Optional[float] = None
    name: str = "custom"
    batched_dynamics: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    batched_running_cost: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    scalar_dynamics: Optional[Callable[[float, float], float]] = None
    scalar_running_cost: Optional[Callable[[float, float], float]] = None
    value_model: Optional[ValueFunctionModel] = None

    def __post_init__(self):
        if self.state_dim < 1:
            raise ProblemError("state_dim must be at least 1")
        if not (self.discount >= 0.0) or not math.isfinite(self.discount):
            raise ProblemError("discount must be a finite nonnegative number")
        if self.initial_set.dim != self.state_dim:
            raise ProblemError("initial set dimension does not match state_dim")
        if self.initial_cost_grad is None:
            zero = np.zeros(self.state_dim)
            object.__setattr__(self, "initial_cost_grad", lambda b: zero.copy())

    @property
    def control_dim(self) -> int:
        return self.control_set.dim


class TabulatedControl:
    """Piecewise-constant, left-continuous control from tabulated samples.

    ``u(t)`` equals the sample at the largest tabulated time not exceeding
    ``t``; queries before the first sample clamp to it.
    """

    kind = "tabulated"

    def __init__(self, times: np.ndarray, values: np.ndarray):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.size != values.shape[0]:
            raise ProblemError("control table needs matching times and rows")
        if times.size < 1 or np.any(np.diff(times) <= 0):
            raise ProblemError("control table times must be strictly increasing")
        self.times = times
        self.values = values

    def __call__(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        idx = min(max(idx, 0), self.times.size - 1)
        return self.values[idx]


class PolicyControl:
    """Open-loop control obtained by replaying a policy along a stored trajectory.

    The policy sees the time and the reference state; because the
    reference is frozen, the result is a genuine time function even
    though it was produced by feedback.
    """

    kind = "policy"

    def __init__(
        self,
        policy: Callable[[float, np.ndarray], np.ndarray],
        reference: Trajectory,
    ):
        self.policy = policy
        self.reference = reference

    def __call__(self, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.policy(t, self.reference(t)), dtype=float))


@dataclass
class CandidateProcess:
    """One admissible initial point, open-loop control, and cached trajectory."""

    initial_point: np.ndarray
    control: Callable[[float], np.ndarray]
    trajectory: Trajectory

    def __post_init__(self):
        self.initial_point = np.atleast_1d(np.asarray(self.initial_point, dtype=float))

    @property
    def span(self) -> tuple[float, float]:
        return self.trajectory.span

    def state(self, t: float) -> np.ndarray:
        return self.trajectory(t)


@dataclass(frozen=True)
class HorizonSequence:
    """Strictly increasing truncation horizons used for the limit extraction."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise ProblemError("horizon sequence needs at least two entries")
        if vals[0] <= 0 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ProblemError("horizons must be positive and strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def geometric(cls, tau0: float = 2.0, factor: float = 2.0, count: int = 6) -> "HorizonSequence":
        if factor <= 1.0:
            raise ProblemError("geometric horizon factor must exceed 1")
        return cls(tuple(tau0 * factor**i for i in range(count)))

    @classmethod
    def arithmetic(cls, tau0: float, step: float, count: int) -> "HorizonSequence":
        if step <= 0.0:
            raise ProblemError("arithmetic horizon step must be positive")
        return cls(tuple(tau0 + step * i for i in range(count)))

    @classmethod
    def explicit(cls, values: Iterable[float]) -> "HorizonSequence":
        return cls(tuple(values))

    @property
    def last(self) -> float:
        return self.values[-1]

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


# ---------------------------------------------------------------------------
# catalog


def riccati_gain(discount: float) -> float:
    """Stabilizing gain of the scalar unit-weight regulator.

    Positive root of ``p**2 + r p - 1 = 0``; the optimal feedback of
    ``min int exp(-r t)(x^2 + u^2)`` with ``x' = u`` is ``u = -p x``.
    """
    return 0.5 * (-discount + math.sqrt(discount * discount + 4.0))


def _regulator_callables():
    dynamics = lambda x, u: u.copy()
    dynamics_jac = lambda x, u: np.zeros((1, 1))
    running_cost = lambda x, u: float(x[0] * x[0] + u[0] * u[0])
    running_cost_grad = lambda x, u: np.array([2.0 * x[0]])
    batched_dynamics = lambda x, U: np.asarray(U, dtype=float).copy()
    batched_running_cost = lambda x, U: float(x[0] * x[0]) + np.asarray(U)[:, 0] ** 2
    scalar_dynamics = lambda x, u: u
    scalar_running_cost = lambda x, u: x * x + u * u
    return {
        "dynamics": dynamics,
        "dynamics_jac": dynamics_jac,
        "running_cost": running_cost,
        "running_cost_grad": running_cost_grad,
        "batched_dynamics": batched_dynamics,
        "batched_running_cost": batched_running_cost,
        "scalar_dynamics": scalar_dynamics,
        "scalar_running_cost": scalar_running_cost,
    }


def _build_lq1(b: float = 1.0) -> ControlProblem:
    """Discounted scalar regulator: ``x' = u``, cost ``x^2 + u^2``, r = 1, fixed start."""
    b = float(b)
    p = riccati_gain(1.0)
    return ControlProblem(
        state_dim=1,
        discount=1.0,
        initial_set=Singleton(np.array([b])),
        control_set=BoxControls(
            np.array([-_REGULATOR_CONTROL_BOUND]), np.array([_REGULATOR_CONTROL_BOUND])
        ),
        cost_bound=(1.0 + p * p) * b * b,
        name="LQ1",
        **_regulator_callables(),
    )


def _build_lq1f(b: float = 1.0) -> ControlProblem:
    """Free-start discounted regulator with linear initial cost ``l(b) = -2 p b``.

    The initial cost is tuned so the stationarity condition at the initial
    point holds exactly at ``b = 1``; other starts are admissible but fail
    the initial-point check by design.
    """
    del b  # the initial set is free; the candidate picks its own start
    p = riccati_gain(1.0)
    return ControlProblem(
        state_dim=1,
        discount=1.0,
        initial_set=FreeSpace(1),
        control_set=BoxControls(
            np.array([-_REGULATOR_CONTROL_BOUND]), np.array([_REGULATOR_CONTROL_BOUND])
        ),
        initial_cost=lambda b_: float(-2.0 * p * b_[0]),
        initial_cost_grad=lambda b_: np.array([-2.0 * p]),
        cost_bound=(1.0 + p * p) * 4.0,
        name="LQ1F",
        **_regulator_callables(),
    )


def _build_lq0(b: float = 1.0) -> ControlProblem:
    """Undiscounted scalar regulator; the optimal value from ``b`` is ``b^2``."""
    b = float(b)
    vmodel = ValueFunctionModel(
        value_infinite=lambda b_: float(b_[0] * b_[0]),
        hamiltonian_limit=0.0,
        value_finite=lambda b_, T: float(math.tanh(T) * b_[0] * b_[0]),
    )
    return ControlProblem(
        state_dim=1,
        discount=0.0,
        initial_set=Singleton(np.array([b])),
        control_set=BoxControls(
            np.array([-_REGULATOR_CONTROL_BOUND]), np.array([_REGULATOR_CONTROL_BOUND])
        ),
        cost_bound=2.0 * b * b,
        name="LQ0",
        value_model=vmodel,
        **_regulator_callables(),
    )


def _build_abn1() -> ControlProblem:
    """Degenerate benchmark: ``x' = x + u``, cost ``x``, r = 1/2, start pinned at 0.

    Any admissible control keeps the state (and so the cost) nonnegative,
    hence resting at the origin is optimal; the gradient integral along
    that candidate grows like ``2 exp(tau/2)`` and the limiting multiplier
    vanishes.
    """
    return ControlProblem(
        state_dim=1,
        dynamics=lambda x, u: np.array([x[0] + u[0]]),
        dynamics_jac=lambda x, u: np.array([[1.0]]),
        running_cost=lambda x, u: float(x[0]),
        running_cost_grad=lambda x, u: np.array([1.0]),
        discount=0.5,
        initial_set=Singleton(np.array([0.0])),
        control_set=BoxControls(np.array([0.0]), np.array([1.0])),
        cost_bound=0.0,
        name="ABN1",
        batched_dynamics=lambda x, U: x[0] + np.asarray(U, dtype=float),
        batched_running_cost=lambda x, U: np.full(np.asarray(U).shape[0], float(x[0])),
        scalar_dynamics=lambda x, u: x + u,
        scalar_running_cost=lambda x, u: x,
    )


def _build_const1(c: float = 1.0, r: float = 1.0) -> ControlProblem:
    """Constant-cost benchmark: ``x' = u``, cost ``x``, ``u in [0, 1]``, start at ``c``.

    Resting at ``c`` is optimal (controls cannot decrease the state), and
    the running cost along that candidate is identically ``c``.
    """
    c = float(c)
    r = float(r)
    if not (r > 0.0):
        raise CatalogError("CONST1 needs a positive discount; the payoff diverges at r = 0")
    return ControlProblem(
        state_dim=1,
        dynamics=lambda x, u: u.copy(),
        dynamics_jac=lambda x, u: np.zeros((1, 1)),
        running_cost=lambda x, u: float(x[0]),
        running_cost_grad=lambda x, u: np.array([1.0]),
        discount=r,
        initial_set=Singleton(np.array([c])),
        control_set=BoxControls(np.array([0.0]), np.array([1.0])),
        cost_bound=abs(c),
        name="CONST1",
        batched_dynamics=lambda x, U: np.asarray(U, dtype=float).copy(),
        batched_running_cost=lambda x, U: np.full(np.asarray(U).shape[0], float(x[0])),
        scalar_dynamics=lambda x, u: u,
        scalar_running_cost=lambda x, u: x,
    )


_CATALOG: dict[str, Callable[..., ControlProblem]] = {
    "LQ1": _build_lq1,
    "LQ1F": _build_lq1f,
    "LQ0": _build_lq0,
    "ABN1": _build_abn1,
    "CONST1": _build_const1,
}


def catalog_ids() -> tuple[str, ...]:
    return tuple(_CATALOG) + ("custom",)


def instantiate_problem(problem_id: str, **params) -> ControlProblem:
    """Build a catalog problem (or a custom one from explicit fields).

    ``custom`` forwards all keyword arguments to :class:`ControlProblem`.
    Unknown ids and out-of-range parameters raise :class:`CatalogError`.
    """
    if problem_id == "custom":
        try:
            return ControlProblem(**params)
        except TypeError as err:
            raise CatalogError(f"bad custom problem fields: {err}") from err
    builder = _CATALOG.get(problem_id)
    if builder is None:
        raise CatalogError(
            f"unknown problem id {problem_id!r}; available: {', '.join(catalog_ids())}"
        )
    try:
        return builder(**params)
    except TypeError as err:
        raise CatalogError(f"bad parameters for {problem_id}: {err}") from err


def _catalog_policy(problem: ControlProblem) -> Callable[[float, np.ndarray], np.ndarray]:
    if problem.name in ("LQ1", "LQ1F", "LQ0"):
        gain = riccati_gain(problem.discount)
        return lambda t, x: np.array([-gain * x[0]])
    if problem.name in ("ABN1", "CONST1"):
        return lambda t, x: np.array([0.0])
    raise CatalogError(
        f"no catalog policy for problem {problem.name!r}; pass an explicit control"
    )


def candidate_process(
    problem: ControlProblem,
    policy: Union[str, Callable[[float, np.ndarray], np.ndarray], TabulatedControl] = "auto",
    b: Optional[np.ndarray] = None,
    horizon: float = 80.0,
    config: IntegratorConfig = DEFAULT_CONFIG,
) -> CandidateProcess:
    """Build a candidate process for ``problem`` on ``[0, horizon]``.

    ``policy`` is ``"auto"`` (catalog default), a feedback callable
    ``(t, x) -> u`` replayed open-loop, or an explicit tabulated control.
    The initial point defaults to the problem's pinned start, or to 1 in
    each coordinate for free/box initial sets.
    """
    if b is None:
        if isinstance(problem.initial_set, Singleton):
            b = problem.initial_set.point
        elif isinstance(problem.initial_set, Box):
            b = 0.5 * (problem.initial_set.lower + problem.initial_set.upper)
        else:
            b = np.ones(problem.state_dim)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if not problem.initial_set.contains(b, tol=1e-9):
        raise ProblemError(
            f"initial point {b.tolist()} lies outside {problem.initial_set.describe()}"
        )

    if isinstance(policy, TabulatedControl):
        trajectory = _open_loop_trajectory(problem, b, policy, horizon, config)
        return CandidateProcess(initial_point=b, control=policy, trajectory=trajectory)

    feedback = _catalog_policy(problem) if policy == "auto" else policy
    if not callable(feedback):
        raise ProblemError("policy must be 'auto', a callable, or a TabulatedControl")
    trajectory = solve_closed_loop(problem, b, feedback, horizon, config)
    control = PolicyControl(feedback, trajectory)
    if not problem.control_set.contains(control(0.0), tol=1e-7):
        raise ProblemError("policy emits controls outside the admissible set")
    return CandidateProcess(initial_point=b, control=control, trajectory=trajectory)


def _open_loop_trajectory(problem, b, control, horizon, config):
    from .integrate import solve_state

    return solve_state(problem, b, control, horizon, config)


# ---------------------------------------------------------------------------
# validation utilities


def validate_problem(
    problem: ControlProblem,
    n_points: int = 20,
    seed: int = 0,
    scale: float = 1.0,
) -> dict:
    """Finite-difference audit of the declared derivatives.

    Checks ``dynamics_jac`` and ``running_cost_grad`` against central
    differences at random states and sampled controls, and the batched
    evaluators against the scalar ones.  Returns the worst residuals;
    raises :class:`ProblemError` when a derivative disagrees beyond
    ``max(1e-5, 1e-4 * norm)``.
    """
    rng = np.random.default_rng(seed)
    m = problem.state_dim
    samples = problem.control_set.sample(n_per_dim=11)
    worst_jac = 0.0
    worst_grad = 0.0
    worst_batch = 0.0
    for _ in range(n_points):
        x = scale * rng.standard_normal(m)
        if isinstance(problem.control_set, BoxControls):
            # Probe at moderate admissible controls: differencing the cost
            # at the far corners of a wide box would drown the x-derivative
            # in floating-point cancellation.
            u = problem.control_set.project(scale * rng.standard_normal(problem.control_dim))
        else:
            u = samples[rng.integers(0, samples.shape[0])]
        jac = np.asarray(problem.dynamics_jac(x, u), dtype=float).reshape(m, m)
        grad = np.asarray(problem.running_cost_grad(x, u), dtype=float)
        fd_jac = np.empty((m, m))
        fd_grad = np.empty(m)
        for i in range(m):
            h = 1e-6 * (1.0 + abs(x[i]))
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            fd_jac[:, i] = (
                np.asarray(problem.dynamics(xp, u), dtype=float)
                - np.asarray(problem.dynamics(xm, u), dtype=float)
            ) / (2 * h)
            fd_grad[i] = (
                float(problem.running_cost(xp, u)) - float(problem.running_cost(xm, u))
            ) / (2 * h)
        jac_err = float(np.max(np.abs(fd_jac - jac)))
        grad_err = float(np.max(np.abs(fd_grad - grad)))
        if jac_err > max(1e-5, 1e-4 * np.linalg.norm(jac)):
            raise ProblemError(f"dynamics_jac disagrees with finite differences by {jac_err:.3e}")
        if grad_err > max(1e-5, 1e-4 * np.linalg.norm(grad)):
            raise ProblemError(
                f"running_cost_grad disagrees with finite differences by {grad_err:.3e}"
            )
        worst_jac = max(worst_jac, jac_err)
        worst_grad = max(worst_grad, grad_err)
        if problem.batched_dynamics is not None:
            block = samples[: min(16, samples.shape[0])]
            ref = np.stack(
                [np.asarray(problem.dynamics(x, uu), dtype=float) for uu in block]
            )
            got = np.asarray(problem.batched_dynamics(x, block), dtype=float).reshape(ref.shape)
            worst_batch = max(worst_batch, float(np.max(np.abs(ref - got))))
        if problem.batched_running_cost is not None:
            block = samples[: min(16, samples.shape[0])]
            ref = np.array([float(problem.running_cost(x, uu)) for uu in block])
            got = np.asarray(problem.batched_running_cost(x, block), dtype=float).reshape(
                ref.shape
            )
            worst_batch = max(worst_batch, float(np.max(np.abs(ref - got))))
        if m == 1 and problem.control_dim == 1:
            for uu in samples[: min(8, samples.shape[0])]:
                if problem.scalar_dynamics is not None:
                    ref_f = float(np.asarray(problem.dynamics(x, uu)).reshape(-1)[0])
                    got_f = float(problem.scalar_dynamics(float(x[0]), float(uu[0])))
                    worst_batch = max(worst_batch, abs(ref_f - got_f))
                if problem.scalar_running_cost is not None:
                    ref_c = float(problem.running_cost(x, uu))
                    got_c = float(problem.scalar_running_cost(float(x[0]), float(uu[0])))
                    worst_batch = max(worst_batch, abs(ref_c - got_c))
    if worst_batch > 1e-10:
        raise ProblemError(
            f"fast-path evaluators disagree with reference ones by {worst_batch:.3e}"
        )
    return {"jacobian": worst_jac, "cost_gradient": worst_grad, "fast_paths": worst_batch}


def validate_candidate(
    problem: ControlProblem,
    candidate: CandidateProcess,
    n_points: int = 200,
    fd_step: float = 1e-3,
    tol: float = 1e-4,
) -> float:
    """Audit a candidate: admissible controls and a consistent trajectory cache.

    Compares the central-difference slope of the cached trajectory against
    the dynamics at ``n_points`` interior times.  Returns the worst slope
    residual; raises :class:`ProblemError` on inadmissible controls, a
    wrong initial point, or a slope residual beyond
    ``tol * (1 + |f|)`` (the step's own curvature error is second order).
    """
    t0, t1 = candidate.span
    if np.max(np.abs(candidate.trajectory(t0) - candidate.initial_point)) > 1e-8:
        raise ProblemError("trajectory cache does not start at the initial point")
    times = np.linspace(t0 + fd_step, t1 - fd_step, n_points)
    worst = 0.0
    for t in times:
        u = np.atleast_1d(np.asarray(candidate.control(float(t)), dtype=float))
        if not problem.control_set.contains(u, tol=1e-7):
            raise ProblemError(f"control at t={t:.3f} leaves the admissible set")
        slope = (candidate.trajectory(t + fd_step) - candidate.trajectory(t - fd_step)) / (
            2 * fd_step
        )
        f = np.asarray(problem.dynamics(candidate.trajectory(float(t)), u), dtype=float)
        resid = float(np.max(np.abs(slope - f)))
        limit = tol * (1.0 + float(np.max(np.abs(f))))
        if resid > limit:
            raise ProblemError(
                f"trajectory slope residual {resid:.3e} at t={t:.3f} exceeds {limit:.3e}"
            )
        worst = max(worst, resid)
    return worst


# ---------------------------------------------------------------------------
# tabulated interchange formats


def load_control_csv(path) -> TabulatedControl:
    """Load a piecewise-constant control table (columns ``t, u_1..u_k``)."""
    times, values = _load_table(path, "u")
    return TabulatedControl(times, values)


def load_trajectory_csv(path) -> Trajectory:
    """Load a tabulated state trajectory (columns ``t, x_1..x_m``)."""
    times, values = _load_table(path, "x")
    return tabulated_trajectory(times, values)


def tabulated_trajectory(times: np.ndarray, states: np.ndarray) -> Trajectory:
    """Wrap tabulated states as a trajectory with linear interpolation."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]

    def dense(at):
        at_arr = np.atleast_1d(np.asarray(at, dtype=float))
        cols = np.stack(
            [np.interp(at_arr, times, states[:, j]) for j in range(states.shape[1])]
        )
        return cols[:, 0] if np.ndim(at) == 0 else cols

    return Trajectory(t=times, y=states, dense=dense)


def _load_table(path, prefix: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if not header or header[0].strip() != "t":
            raise ProblemError(f"expected header starting with 't', got {header!r}")
        for j, name in enumerate(header[1:], start=1):
            if not name.strip().startswith(prefix + "_"):
                raise ProblemError(f"expected column {prefix}_{j}, got {name!r}")
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not rows:
        raise ProblemError("empty table")
    data = np.asarray(rows, dtype=float)
    return data[:, 0], data[:, 1:]
