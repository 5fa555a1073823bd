"""Numerical toolkit for limiting co-states of discounted control problems.

Build a finite-horizon adjoint family with free right endpoint, follow it
to its limit, certify the limit against first-order optimality checks,
and cross-examine everything with a shooting solver and a brute-force
direct-transcription oracle.
"""

from .costate import (
    HamiltonianTrace,
    HorizonCostate,
    LimitingSolution,
    cauchy_costate,
    finite_horizon_costate,
    hamiltonian,
    hamiltonian_trace,
    integrate_costate,
    limiting_costate,
    write_costate_csv,
    write_horizon_csv,
)
from .integrate import (
    DEFAULT_CONFIG,
    CovectorTrace,
    FundamentalTrace,
    IntegrationError,
    IntegratorConfig,
    PayoffAccount,
    TailError,
    TailEstimate,
    Trajectory,
    accumulate_gradient_integral,
    payoff,
    solve_closed_loop,
    solve_fundamental,
    solve_state,
    tail_payoff,
    write_trace_csv,
)
from .oracle import (
    Transcription,
    discrete_adjoint,
    discrete_value,
    perturbation_certificate,
    transcribe,
    write_transcription_csv,
)
from .problems import (
    BoxControls,
    CandidateProcess,
    CatalogError,
    ControlProblem,
    FiniteControls,
    FreeSpace,
    HorizonSequence,
    PolicyControl,
    ProblemError,
    Singleton,
    TabulatedControl,
    ValueFunctionModel,
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
from .shoot import (
    ShootError,
    ShootResult,
    SynthesizedControl,
    michel_residual,
    shoot_scalar,
    synthesize_argmax,
)
from .verify import (
    CHECK_IDS,
    CheckResult,
    SequenceReport,
    VerificationReport,
    build_report,
    limiting_sequence_report,
    report_to_json,
    run_verification,
)

__version__ = "0.1.0"
