"""Scalar shooting on the initial covector with a tail-stationarity closing condition.

For one-state problems with positive discount and a normal multiplier
(fixed at 1), the extremal family is parameterized by ``psi(0)`` alone:
states and covectors evolve under the control that maximizes the
Hamiltonian pointwise, and the closing condition

    H(0) + r J(b; horizon) = 0

selects the initial covector.  Away from the stable manifold these
synthesized trajectories blow up in finite time; the residual is then
extended by a signed sentinel carrying the blow-up direction, which turns
saddle-path shooting into ordinary sign bisection.

Floating-point shooting cannot follow the stable manifold over long
windows (the best representable root still diverges eventually), so the
returned extremal is stitched from segments whose initial covectors are
re-bisected at periodic anchors; anchors whose probe never diverges keep
the continued value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .costate import hamiltonian
from .integrate import (
    CovectorTrace,
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    _run_ivp,
)
from .problems import BoxControls, CandidateProcess, ControlProblem
from .verify import _hamiltonian_over_samples

__all__ = [
    "ShootError",
    "ShootResult",
    "SynthesizedControl",
    "SHOOT_CONFIG",
    "michel_residual",
    "shoot_scalar",
    "synthesize_argmax",
]

# Moderate-order method: the argmax-synthesized right-hand side has
# switching kinks, so high-order interpolants buy nothing.
SHOOT_CONFIG = IntegratorConfig(rtol=1e-10, atol=1e-12, method="RK45")

BLOWUP_GUARD = 1e6
SENTINEL = 1e9


class ShootError(RuntimeError):
    """Bracketing failure; carries the probed residual table."""

    def __init__(self, message: str, table: Sequence[tuple[float, float]] = ()):
        super().__init__(message)
        self.table = tuple(table)


def _tie_break(samples: np.ndarray, values: np.ndarray) -> int:
    vmax = float(np.max(values))
    slack = 1e-12 * (1.0 + abs(vmax))
    tied = np.flatnonzero(values >= vmax - slack)
    if tied.size == 1:
        return int(tied[0])
    keys = [(float(np.linalg.norm(samples[i])), tuple(samples[i]), int(i)) for i in tied]
    return min(keys)[2]


def _scalar_prep(problem: ControlProblem, samples: np.ndarray):
    """Float-only argmax state for one-state box problems, or None."""
    if not (
        problem.state_dim == 1
        and problem.control_dim == 1
        and isinstance(problem.control_set, BoxControls)
        and problem.scalar_dynamics is not None
        and problem.scalar_running_cost is not None
    ):
        return None
    pts = sorted((float(v) for v in samples[:, 0]), key=lambda v: (abs(v), v))
    uniq = np.unique(samples[:, 0])
    step = float(uniq[1] - uniq[0]) if uniq.size > 1 else 0.0
    lo = float(problem.control_set.lower[0])
    hi = float(problem.control_set.upper[0])
    return problem.scalar_dynamics, problem.scalar_running_cost, pts, step, lo, hi


def _scalar_argmax(prep, x: float, psi: float, weight: float) -> float:
    """Grid argmax plus safeguarded parabola refinement on plain floats.

    The scan order (by magnitude, then value) makes a strict comparison
    reproduce the smallest-norm tie-break of the array path.
    """
    dyn, cost, pts, step, lo, hi = prep
    b = pts[0]
    fb = psi * dyn(x, b) - weight * cost(x, b)
    for u_ in pts:
        h = psi * dyn(x, u_) - weight * cost(x, u_)
        if h > fb:
            fb, b = h, u_
    if step == 0.0:
        return b
    a = max(lo, b - step)
    c = min(hi, b + step)
    fa = psi * dyn(x, a) - weight * cost(x, a) if a != b else fb
    fc = psi * dyn(x, c) - weight * cost(x, c) if c != b else fb
    if fa > fb or fc > fb:
        return a if fa >= fc else c
    for _ in range(8):
        denom = (b - a) * (fb - fc) - (b - c) * (fb - fa)
        if abs(denom) < 1e-300:
            break
        vertex = b - 0.5 * ((b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)) / denom
        vertex = min(max(vertex, min(a, c)), max(a, c))
        if abs(vertex - b) < 1e-13 * (1.0 + abs(b)):
            break
        fv = psi * dyn(x, vertex) - weight * cost(x, vertex)
        if fv > fb:
            if vertex < b:
                c, fc = b, fb
            else:
                a, fa = b, fb
            b, fb = vertex, fv
        else:
            if vertex < b:
                a, fa = vertex, fv
            else:
                c, fc = vertex, fv
        if c - a < 1e-13 * (1.0 + abs(b)):
            break
    return b


def synthesize_argmax(
    problem: ControlProblem,
    x: np.ndarray,
    psi: np.ndarray,
    lam: float,
    t: float,
    samples: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Control maximizing the Hamiltonian at one point of the extremal.

    Dense grid search over the admissible samples followed by one
    safeguarded parabolic refinement pass per coordinate (box sets only).
    Ties break toward the smallest control norm, then lexicographically.
    """
    if samples is None:
        samples = problem.control_set.sample()
    prep = _scalar_prep(problem, samples)
    if prep is not None:
        weight = lam * math.exp(-problem.discount * float(t))
        return np.array([_scalar_argmax(prep, float(x[0]), float(psi[0]), weight)])
    values = _hamiltonian_over_samples(problem, x, samples, psi, lam, float(t))
    best = _tie_break(samples, values)
    u = samples[best].copy()
    if not isinstance(problem.control_set, BoxControls):
        return u

    def h_of(u_try: np.ndarray) -> float:
        return hamiltonian(problem, x, u_try, psi, lam, float(t))

    lower, upper = problem.control_set.lower, problem.control_set.upper
    k = u.size
    # Spacing between neighboring sample points along each coordinate;
    # zero marks a pinched coordinate that needs no refinement.
    grid_step = np.empty(k)
    for j in range(k):
        uniq = np.unique(samples[:, j])
        grid_step[j] = float(uniq[1] - uniq[0]) if uniq.size > 1 else 0.0
    value = h_of(u)
    for j in range(k):
        if grid_step[j] == 0.0:
            continue
        u, value = _refine_coordinate(h_of, u, value, j, grid_step[j], lower[j], upper[j])
    return u


def _refine_coordinate(h_of, u, value, j, step, lo, hi, iters: int = 8):
    a = max(lo, u[j] - step)
    c = min(hi, u[j] + step)
    b = u[j]

    def with_coord(val):
        out = u.copy()
        out[j] = val
        return out

    fa, fb, fc = h_of(with_coord(a)), value, h_of(with_coord(c))
    if fa > fb or fc > fb:
        # The grid point was not an interior max along this line (for
        # example a boundary cell); keep the better endpoint.
        if fa >= fc and fa > fb:
            return with_coord(a), fa
        if fc > fb:
            return with_coord(c), fc
    for _ in range(iters):
        denom = (b - a) * (fb - fc) - (b - c) * (fb - fa)
        if abs(denom) < 1e-300:
            break
        vertex = b - 0.5 * ((b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)) / denom
        vertex = min(max(vertex, min(a, c)), max(a, c))
        if abs(vertex - b) < 1e-13 * (1.0 + abs(b)):
            break
        fv = h_of(with_coord(vertex))
        # Keep a bracketing trio around the running maximum.
        if fv > fb:
            if vertex < b:
                c, fc = b, fb
            else:
                a, fa = b, fb
            b, fb = vertex, fv
        else:
            if vertex < b:
                a, fa = vertex, fv
            else:
                c, fc = vertex, fv
        if c - a < 1e-13 * (1.0 + abs(b)):
            break
    return with_coord(b), fb


class SynthesizedControl:
    """Open-loop control replaying the Hamiltonian argmax along a stored extremal."""

    kind = "synthesized"

    def __init__(
        self,
        problem: ControlProblem,
        trajectory: Trajectory,
        psi_trace: CovectorTrace,
        lam: float = 1.0,
        samples: Optional[np.ndarray] = None,
    ):
        self.problem = problem
        self.trajectory = trajectory
        self.psi_trace = psi_trace
        self.lam = lam
        self.samples = (
            problem.control_set.sample() if samples is None else np.asarray(samples)
        )

    def __call__(self, t: float) -> np.ndarray:
        x = self.trajectory(float(t))
        psi = self.psi_trace(float(t))
        return synthesize_argmax(self.problem, x, psi, self.lam, float(t), self.samples)


@dataclass
class ShootResult:
    """Stitched extremal found by covector shooting.

    ``closing_residual`` re-evaluates the closing condition along the
    stitched trajectory; ``bracket_history`` records the bisection rows
    ``(iteration, lo, hi, mid, residual)``; ``anchors`` lists the times
    where the covector was re-bisected during synthesis.
    """

    problem: ControlProblem
    psi0: float
    lam: float
    horizon: float
    closing_residual: float
    t: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    u: np.ndarray
    trajectory: Trajectory
    psi_trace: CovectorTrace
    bracket_history: tuple[tuple[int, float, float, float, float], ...]
    anchors: tuple[float, ...]
    status: str = "converged"

    def to_candidate(self) -> CandidateProcess:
        control = SynthesizedControl(
            self.problem, self.trajectory, self.psi_trace, self.lam
        )
        return CandidateProcess(
            initial_point=self.x[0].copy(),
            control=control,
            trajectory=self.trajectory,
        )


def _shoot_samples(problem: ControlProblem) -> np.ndarray:
    # A thin grid suffices here: the parabola refinement pass locates the
    # interior maximum to full precision, so extra samples only buy
    # robustness against multimodal Hamiltonians, not accuracy.
    if isinstance(problem.control_set, BoxControls):
        return problem.control_set.sample(n_per_dim=33)
    return problem.control_set.sample()


def _require_scalar_normal(problem: ControlProblem) -> None:
    if problem.state_dim != 1:
        raise ValueError("shooting supports exactly one state variable")
    if not (problem.discount > 0.0):
        raise ValueError(
            "shooting needs a positive discount; the closing condition "
            "degenerates at zero discount"
        )


def _synthesized_rhs(problem: ControlProblem, samples: np.ndarray, lam: float):
    m = problem.state_dim
    r = problem.discount
    prep = _scalar_prep(problem, samples)
    if prep is not None:
        dyn, cost = prep[0], prep[1]
        jac_fn = problem.dynamics_jac
        grad_fn = problem.running_cost_grad

        def rhs(t, z):
            x, psi = z[0], z[1]
            disc = math.exp(-r * t)
            u = _scalar_argmax(prep, x, psi, lam * disc)
            xa, ua = z[0:1], np.array([u])
            jac = float(np.asarray(jac_fn(xa, ua)).ravel()[0])
            grad = float(np.asarray(grad_fn(xa, ua)).ravel()[0])
            return np.array(
                [dyn(x, u), -psi * jac + lam * disc * grad, disc * cost(x, u)]
            )

        return rhs

    def rhs(t, z):
        x = z[:m]
        psi = z[m : 2 * m]
        u = synthesize_argmax(problem, x, psi, lam, t, samples)
        f = np.asarray(problem.dynamics(x, u), dtype=float)
        jac = np.asarray(problem.dynamics_jac(x, u), dtype=float)
        grad = np.asarray(problem.running_cost_grad(x, u), dtype=float)
        disc = math.exp(-r * t)
        out = np.empty(2 * m + 1)
        out[:m] = f
        out[m : 2 * m] = -psi @ jac + lam * disc * grad
        out[2 * m] = disc * float(problem.running_cost(x, u))
        return out

    return rhs


def _blowup_event(m: int, guard: float = BLOWUP_GUARD):
    def event(t, z):
        return float(np.max(np.abs(z[: 2 * m]))) - guard

    event.terminal = True
    event.direction = 1.0
    return event


def _run_segment(
    problem: ControlProblem,
    samples: np.ndarray,
    lam: float,
    x0: np.ndarray,
    psi0: np.ndarray,
    payoff0: float,
    t_start: float,
    t_end: float,
    config: IntegratorConfig,
    guard: float = BLOWUP_GUARD,
):
    """Integrate the synthesized system; returns (sol, blown, sign)."""
    m = problem.state_dim
    z0 = np.concatenate([x0, psi0, [payoff0]])
    rhs = _synthesized_rhs(problem, samples, lam)
    try:
        sol = _run_ivp(
            rhs, (t_start, t_end), z0, config, events=[_blowup_event(m, guard)]
        )
    except IntegrationError as err:
        partial = getattr(err, "partial", None)
        if partial is None:
            raise
        tail = partial.y[:, -1]
        if float(np.max(np.abs(tail[: 2 * m]))) < 0.5 * guard:
            raise
        sol = partial
        sol.status = 1
    if sol.status == 1:
        z_end = sol.y[:, -1]
        x_end, psi_end = z_end[:m], z_end[m : 2 * m]
        if float(np.max(np.abs(x_end))) >= float(np.max(np.abs(psi_end))):
            sign = math.copysign(1.0, x_end[int(np.argmax(np.abs(x_end)))])
        else:
            sign = math.copysign(1.0, psi_end[int(np.argmax(np.abs(psi_end)))])
        return sol, True, sign
    return sol, False, 0.0


def michel_residual(
    problem: ControlProblem,
    b: np.ndarray,
    psi0: float,
    horizon: float,
    config: IntegratorConfig = SHOOT_CONFIG,
    samples: Optional[np.ndarray] = None,
) -> float:
    """Closing-condition residual of one shooting trial.

    Integrates the argmax-synthesized pair from ``(b, psi0)`` with a unit
    multiplier and returns ``H(0) + r J(b; horizon)``.  A trajectory
    exceeding the blow-up guard before the horizon yields ``+-1e9`` with
    the sign of the dominant diverging coordinate, so off-manifold trials
    still carry usable sign information.
    """
    _require_scalar_normal(problem)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if samples is None:
        samples = _shoot_samples(problem)
    psi_init = np.array([float(psi0)])
    sol, blown, sign = _run_segment(
        problem, samples, 1.0, b, psi_init, 0.0, 0.0, float(horizon), config
    )
    if blown:
        return sign * SENTINEL
    u0 = synthesize_argmax(problem, b, psi_init, 1.0, 0.0, samples)
    h0 = hamiltonian(problem, b, u0, psi_init, 1.0, 0.0)
    payoff = float(sol.y[-1, -1])
    return h0 + problem.discount * payoff


def _prescan(problem, b, bracket, horizon, config, samples, n=9):
    lo, hi = float(bracket[0]), float(bracket[1])
    points = np.linspace(lo, hi, n)
    table = [
        (float(p), michel_residual(problem, b, float(p), horizon, config, samples))
        for p in points
    ]
    return table


def _sign_changes(table):
    signs = [math.copysign(1.0, r) for _, r in table if r != 0.0]
    return sum(1 for a, b2 in zip(signs, signs[1:]) if a != b2)


def shoot_scalar(
    problem: ControlProblem,
    b: np.ndarray,
    bracket: Sequence[float],
    horizon: float = 40.0,
    tol: float = 1e-6,
    config: IntegratorConfig = SHOOT_CONFIG,
    segment_length: float = 10.0,
    max_iter: int = 200,
) -> ShootResult:
    """Bisect the closing residual over ``bracket`` and stitch the extremal.

    The bracket is prescanned on nine points: identical signs at the ends
    raise :class:`ShootError` with the full residual table, and more than
    one sign change raises a multiple-roots error.  Bisection runs well
    past the requested ``tol`` (down to relative width ``1e-13``) because
    the root is cheap to polish and downstream round-trips consume the
    extra digits.

    The final extremal is re-integrated in segments of ``segment_length``;
    covectors are re-bisected at interior anchors whenever a tight probe
    bracket still shows divergence of both signs, eliminating the
    exponential error growth a single long shot would suffer.
    """
    _require_scalar_normal(problem)
    if len(bracket) != 2 or not bracket[0] < bracket[1]:
        raise ValueError("bracket must be an increasing pair")
    b = np.atleast_1d(np.asarray(b, dtype=float))
    samples = _shoot_samples(problem)
    horizon = float(horizon)

    table = _prescan(problem, b, bracket, horizon, config, samples)
    exact = [p for p, r in table if r == 0.0]
    changes = _sign_changes(table)
    if changes == 0 and not exact:
        raise ShootError(
            "closing residual has no sign change over the bracket", table
        )
    if changes > 1:
        raise ShootError("multiple roots suspected inside the bracket", table)

    history: list[tuple[int, float, float, float, float]] = []
    if exact:
        root = exact[0]
    else:
        idx = next(
            i
            for i, ((_, ra), (_, rb)) in enumerate(zip(table, table[1:]))
            if math.copysign(1.0, ra) != math.copysign(1.0, rb)
        )
        lo, r_lo = table[idx]
        hi, r_hi = table[idx + 1]
        width_goal = min(tol, 1e-13)
        iteration = 0
        while iteration < max_iter:
            mid = 0.5 * (lo + hi)
            if hi - lo <= width_goal * (1.0 + abs(mid)):
                break
            iteration += 1
            r_mid = michel_residual(problem, b, mid, horizon, config, samples)
            history.append((iteration, lo, hi, mid, r_mid))
            if r_mid == 0.0:
                lo = hi = mid
                break
            if math.copysign(1.0, r_mid) == math.copysign(1.0, r_lo):
                lo, r_lo = mid, r_mid
            else:
                hi, r_hi = mid, r_mid
        root = 0.5 * (lo + hi)

    segments, anchors = _stitch_extremal(
        problem, samples, b, root, horizon, segment_length, config
    )
    t_nodes, x_nodes, psi_nodes, trajectory, psi_trace, payoff = _assemble(
        problem, segments
    )
    u_nodes = np.stack(
        [
            synthesize_argmax(problem, x_nodes[i], psi_nodes[i], 1.0, t_nodes[i], samples)
            for i in range(t_nodes.size)
        ]
    )
    u0 = u_nodes[0]
    h0 = hamiltonian(problem, b, u0, np.array([root]), 1.0, 0.0)
    closing = h0 + problem.discount * payoff
    return ShootResult(
        problem=problem,
        psi0=float(root),
        lam=1.0,
        horizon=horizon,
        closing_residual=float(closing),
        t=t_nodes,
        x=x_nodes,
        psi=psi_nodes,
        u=u_nodes,
        trajectory=trajectory,
        psi_trace=psi_trace,
        bracket_history=tuple(history),
        anchors=tuple(anchors),
        status="converged",
    )


def _stitch_extremal(problem, samples, b, psi0, horizon, segment_length, config):
    """Integrate the extremal in re-anchored segments.

    Each segment starts from the previous end state; the covector is
    re-bisected inside a tight bracket around the continued value when a
    probe shows blow-up of both signs before the lookahead time.  The
    dense pass uses a capped step so the stored grid resolves the
    extremal everywhere.
    """
    m = problem.state_dim
    dense_config = config.with_overrides(max_step=0.02)
    boundaries = list(np.arange(0.0, horizon, segment_length)) + [horizon]
    segments = []
    anchors = []
    x_cur = b.copy()
    psi_cur = np.array([float(psi0)])
    payoff_cur = 0.0
    for i in range(len(boundaries) - 1):
        t0, t1 = boundaries[i], boundaries[i + 1]
        if i > 0:
            psi_new = _reanchor(
                problem, samples, x_cur, psi_cur, t0, horizon, config
            )
            if psi_new is not None:
                psi_cur = psi_new
                anchors.append(t0)
        sol, blown, _ = _run_segment(
            problem, samples, 1.0, x_cur, psi_cur, payoff_cur, t0, t1, dense_config
        )
        if blown:
            raise ShootError(
                f"stitched extremal diverged on [{t0}, {t1}] despite re-anchoring"
            )
        segments.append(sol)
        z_end = sol.y[:, -1]
        x_cur = z_end[:m].copy()
        psi_cur = z_end[m : 2 * m].copy()
        payoff_cur = float(z_end[2 * m])
    return segments, anchors


def _reanchor(problem, samples, x_cur, psi_pred, t0, lookahead, config):
    """Bisect the covector near its continued value; None keeps the prediction.

    Probes run against a guard far below the public blow-up sentinel: the
    achievable anchoring precision is the guard shrunk by the unstable
    growth over the remaining window, so a tight guard directly tightens
    the tail of the stitched extremal.
    """
    scale = 1.0 + max(float(np.max(np.abs(x_cur))), float(np.max(np.abs(psi_pred))))
    guard = min(BLOWUP_GUARD, 1e3 * scale)

    def probe(psi_val):
        _, blown, sign = _run_segment(
            problem,
            samples,
            1.0,
            x_cur,
            np.array([psi_val]),
            0.0,
            t0,
            lookahead,
            config,
            guard=guard,
        )
        return blown, sign

    center = float(psi_pred[0])
    # Expand the bracket from the prediction until the probes diverge with
    # opposite signs; the prediction may be off by more than its own
    # uncertainty estimate after several growth-dominated segments.
    delta = 1e-6 * (1.0 + abs(center))
    delta_cap = 1.0 + abs(center)
    found = False
    while delta <= delta_cap:
        lo, hi = center - delta, center + delta
        blown_lo, sign_lo = probe(lo)
        blown_hi, sign_hi = probe(hi)
        if blown_lo and blown_hi and sign_lo != sign_hi:
            found = True
            break
        delta *= 4.0
    if not found:
        return None
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-14 * (1.0 + abs(mid)):
            break
        blown_mid, sign_mid = probe(mid)
        if not blown_mid:
            # The probe survives the lookahead at this width: good enough.
            return np.array([mid])
        if sign_mid == sign_lo:
            lo = mid
        else:
            hi = mid
    return np.array([0.5 * (lo + hi)])


class _PiecewiseDense:
    """Dense evaluator stitched from per-segment solver interpolants."""

    def __init__(self, segments, sel):
        self.segments = segments
        self.sel = sel
        self.starts = np.array([float(s.t[0]) for s in segments])
        self.t_min = float(segments[0].t[0])
        self.t_max = float(segments[-1].t[-1])

    def _one(self, s: float) -> np.ndarray:
        s = min(max(float(s), self.t_min), self.t_max)
        idx = int(np.searchsorted(self.starts, s, side="right")) - 1
        idx = min(max(idx, 0), len(self.segments) - 1)
        return np.asarray(self.segments[idx].sol(s), dtype=float)[self.sel]

    def __call__(self, at):
        if np.ndim(at) == 0:
            return self._one(float(at))
        return np.stack([self._one(float(s)) for s in np.asarray(at).ravel()], axis=1)


def _assemble(problem, segments):
    m = problem.state_dim
    t_parts = []
    y_parts = []
    for i, sol in enumerate(segments):
        t_seg = sol.t
        y_seg = sol.y
        if i > 0:
            t_parts.append(t_seg[1:])
            y_parts.append(y_seg[:, 1:])
        else:
            t_parts.append(t_seg)
            y_parts.append(y_seg)
    t_nodes = np.concatenate(t_parts)
    z_nodes = np.concatenate(y_parts, axis=1).T
    x_nodes = z_nodes[:, :m]
    psi_nodes = z_nodes[:, m : 2 * m]
    x_dense = _PiecewiseDense(segments, slice(0, m))
    psi_dense = _PiecewiseDense(segments, slice(m, 2 * m))
    trajectory = Trajectory(t=t_nodes, y=x_nodes, dense=x_dense)
    psi_trace = CovectorTrace(
        t=t_nodes, values=psi_nodes, _evaluate=lambda s: psi_dense(float(s))
    )
    payoff = float(segments[-1].y[-1, -1])
    return t_nodes, x_nodes, psi_nodes, trajectory, psi_trace, payoff
