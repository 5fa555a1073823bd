"""Command-line front end.

Subcommands
-----------
``costate``
    Build the horizon family and its limit; writes ``horizons.csv`` and
    ``limiting.json``.
``verify``
    Costate artifacts plus the full check battery: ``report.json`` and a
    plot-ready ``hamiltonian.csv`` (columns ``T, H_direct, H_michel``).
``shoot``
    One-state shooting solve; writes ``shoot.json`` and ``bracket.csv``.
``oracle``
    Direct transcription; writes ``transcription.csv`` and ``oracle.json``.
``catalog``
    List built-in problem ids.

Options may come from flags or a TOML file (``--config``); flags win.
Exit codes: 0 success / all checks pass, 2 failed checks or
non-convergence (the triggering error is recorded in the command's JSON
artifact), 1 usage or configuration errors.  Artifacts are byte-identical
across reruns with the same configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import costate as costate_mod
from . import oracle as oracle_mod
from . import shoot as shoot_mod
from . import verify as verify_mod
from .integrate import DEFAULT_CONFIG, IntegrationError, TailError, _format
from .problems import (
    Box,
    CatalogError,
    HorizonSequence,
    ProblemError,
    Singleton,
    candidate_process,
    catalog_ids,
    instantiate_problem,
)

__all__ = ["RunConfig", "parse_config", "run", "main"]

_CONFIG_KEYS = {
    "problem",
    "b",
    "tau",
    "ode_tol",
    "check_tol",
    "horizon",
    "out",
    "seed",
    "bracket",
    "T",
    "N",
    "checks",
    "json",
    "csv",
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved invocation: one command plus its settings."""

    command: str
    problem: Optional[str] = None
    b: Optional[tuple] = None
    tau: tuple = ()
    ode_tol: float = 1e-10
    check_tol: float = 1e-6
    horizon: float = 40.0
    out: str = "."
    seed: int = 0
    bracket: Optional[tuple] = None
    T: float = 8.0
    N: int = 800
    checks: Optional[tuple] = None
    emit_json: bool = True
    emit_csv: bool = True


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(part) for part in str(text).split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _build_parser() -> _Parser:
    parser = _Parser(prog="costatekit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(p):
        p.add_argument("--config", help="TOML file with the same keys as the flags")
        p.add_argument("--problem", help="catalog id, e.g. LQ1")
        p.add_argument("--b", type=_floats, help="initial state, comma separated")
        p.add_argument("--ode-tol", dest="ode_tol", type=float, help="ODE relative tolerance")
        p.add_argument("--check-tol", dest="check_tol", type=float, help="check tolerance")
        p.add_argument("--horizon", type=float, help="evaluation horizon")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for randomized spot checks")
        p.add_argument("--no-json", action="store_true", help="skip JSON artifacts")
        p.add_argument("--no-csv", action="store_true", help="skip CSV artifacts")

    p_costate = sub.add_parser("costate", help="horizon family and its limit")
    common(p_costate)
    p_costate.add_argument("--tau", type=_floats, help='horizons, e.g. "2,4,8"')

    p_verify = sub.add_parser("verify", help="run the check battery")
    common(p_verify)
    p_verify.add_argument("--tau", type=_floats, help='horizons, e.g. "2,4,8"')
    p_verify.add_argument("--checks", help="comma-separated check ids (default: all)")

    p_shoot = sub.add_parser("shoot", help="one-state shooting solve")
    common(p_shoot)
    p_shoot.add_argument("--bracket", type=_floats, help="initial covector bracket lo,hi")

    p_oracle = sub.add_parser("oracle", help="direct transcription")
    common(p_oracle)
    p_oracle.add_argument("--T", type=float, help="transcription horizon")
    p_oracle.add_argument("--N", type=int, help="number of Euler cells")

    sub.add_parser("catalog", help="list built-in problem ids")
    return parser


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Resolve flags and optional TOML file into a RunConfig.

    Flag values override file values; unknown file keys and nonpositive
    tolerances are usage errors (exit 1 via the parser).
    """
    parser = _build_parser()
    args = parser.parse_args(list(argv))
    if args.command == "catalog":
        return RunConfig(command="catalog")

    merged: dict = {}
    if args.config:
        try:
            with open(args.config, "rb") as handle:
                data = tomllib.load(handle)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            parser.error(f"cannot read config file: {exc}")
        for key, value in data.items():
            if key not in _CONFIG_KEYS:
                parser.error(f"unknown config key {key!r}")
            merged[key] = value

    for key in _CONFIG_KEYS - {"json", "csv"}:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if getattr(args, "no_json", False):
        merged["json"] = False
    if getattr(args, "no_csv", False):
        merged["csv"] = False

    def seq(value):
        if value is None:
            return None
        if isinstance(value, str):
            return _floats(value)
        if isinstance(value, (int, float)):
            return (float(value),)
        return tuple(float(v) for v in value)

    ode_tol = float(merged.get("ode_tol", 1e-10))
    check_tol = float(merged.get("check_tol", 1e-6))
    if ode_tol <= 0 or check_tol <= 0:
        parser.error("tolerances must be positive")
    horizon = float(merged.get("horizon", 40.0))
    if horizon <= 0:
        parser.error("horizon must be positive")

    tau = seq(merged.get("tau"))
    if tau is None:
        tau = tuple(HorizonSequence.geometric(2.0, 2.0, 6))
    bracket = seq(merged.get("bracket"))
    if bracket is not None and len(bracket) != 2:
        parser.error("bracket takes exactly two values lo,hi")

    checks = merged.get("checks")
    if isinstance(checks, str):
        checks = tuple(part.strip() for part in checks.split(",") if part.strip())
    elif checks is not None:
        checks = tuple(str(c) for c in checks)

    problem = merged.get("problem")
    if problem is None:
        parser.error(f"{args.command} requires a problem id (--problem)")
    if args.command == "shoot" and bracket is None:
        parser.error("shoot requires --bracket lo,hi")

    return RunConfig(
        command=args.command,
        problem=str(problem),
        b=seq(merged.get("b")),
        tau=tau,
        ode_tol=ode_tol,
        check_tol=check_tol,
        horizon=horizon,
        out=str(merged.get("out", ".")),
        seed=int(merged.get("seed", 0)),
        bracket=bracket,
        T=float(merged.get("T", 8.0)),
        N=int(merged.get("N", 800)),
        checks=checks,
        emit_json=bool(merged.get("json", True)),
        emit_csv=bool(merged.get("csv", True)),
    )


def _default_b(problem) -> np.ndarray:
    init = problem.initial_set
    if isinstance(init, Singleton):
        return np.array(init.point, dtype=float)
    if isinstance(init, Box):
        return 0.5 * (init.lower + init.upper)
    return np.ones(problem.state_dim)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value.ravel()]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    return value


def _prepare(config: RunConfig):
    problem = instantiate_problem(config.problem)
    b = np.asarray(config.b, dtype=float) if config.b is not None else _default_b(problem)
    ode = DEFAULT_CONFIG.with_overrides(rtol=config.ode_tol, atol=config.ode_tol * 1e-2)
    return problem, b, ode


def _limiting_pipeline(config: RunConfig, need_horizon: float):
    problem, b, ode = _prepare(config)
    horizons = HorizonSequence(tuple(config.tau))
    span = max(horizons.last, need_horizon) + 1.0
    candidate = candidate_process(problem, b=b, horizon=span, config=ode)
    limiting = costate_mod.limiting_costate(
        problem, candidate, horizons, tol=config.check_tol, config=ode
    )
    return problem, b, ode, candidate, limiting


def _limiting_payload(config: RunConfig, b, limiting) -> dict:
    return {
        "problem": config.problem,
        "b": _jsonable(b),
        "lambda_star": float(limiting.lambda_star),
        "psi0_star": _jsonable(limiting.psi0_star),
        "abnormal": bool(limiting.abnormal),
        "converged": bool(limiting.converged),
        "lambda_raw": float(limiting.lambda_raw),
        "deltas": _jsonable(limiting.deltas),
        "notes": list(limiting.notes),
        "horizons": [
            {
                "tau": float(h.tau),
                "lambda_n": float(h.lambda_n),
                "psi0_n": _jsonable(h.psi0),
                "I_norm": float(h.I_norm),
            }
            for h in limiting.horizon_diagnostics
        ],
    }


def _run_costate(config: RunConfig, out: Path) -> int:
    problem, b, ode, candidate, limiting = _limiting_pipeline(config, config.horizon)
    if config.emit_csv:
        costate_mod.write_horizon_csv(out / "horizons.csv", limiting.horizon_diagnostics)
    if config.emit_json:
        _write_json(out / "limiting.json", _limiting_payload(config, b, limiting))
    return 0 if limiting.converged else 2


def _run_verify(config: RunConfig, out: Path) -> int:
    problem, b, ode, candidate, limiting = _limiting_pipeline(config, config.horizon)
    checks = verify_mod.run_verification(
        problem,
        candidate,
        limiting,
        check_tol=config.check_tol,
        horizon=config.horizon,
        config=ode,
        checks=config.checks,
    )
    report = verify_mod.build_report(
        problem,
        candidate,
        limiting,
        checks,
        config_echo={
            "ode_tol": config.ode_tol,
            "check_tol": config.check_tol,
            "horizon": config.horizon,
            "tau": list(config.tau),
            "seed": config.seed,
        },
    )
    if config.emit_csv:
        costate_mod.write_horizon_csv(out / "horizons.csv", limiting.horizon_diagnostics)
        grid = np.linspace(0.0, min(10.0, config.horizon / 2.0), 101)
        htrace = costate_mod.hamiltonian_trace(
            problem,
            candidate,
            limiting,
            grid=grid,
            horizon=config.horizon,
            config=ode,
            check_tol=config.check_tol,
        )
        with open(out / "hamiltonian.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["T", "H_direct", "H_michel"])
            for t, hd, hm in zip(htrace.grid, htrace.H_direct, htrace.H_michel):
                writer.writerow([_format(t), _format(hd), _format(hm)])
    if config.emit_json:
        _write_json(out / "limiting.json", _limiting_payload(config, b, limiting))
        (out / "report.json").write_text(verify_mod.report_to_json(report) + "\n")
    return 0 if report.all_passed else 2


def _run_shoot(config: RunConfig, out: Path) -> int:
    problem, b, ode = _prepare(config)
    shoot_config = shoot_mod.SHOOT_CONFIG.with_overrides(
        rtol=config.ode_tol, atol=config.ode_tol * 1e-2
    )
    result = shoot_mod.shoot_scalar(
        problem,
        b,
        bracket=config.bracket,
        horizon=config.horizon,
        tol=config.check_tol,
        config=shoot_config,
    )
    if config.emit_csv:
        with open(out / "bracket.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["iter", "psi_lo", "psi_hi", "psi_mid", "residual"])
            for row in result.bracket_history:
                writer.writerow([str(row[0])] + [_format(v) for v in row[1:]])
    if config.emit_json:
        _write_json(
            out / "shoot.json",
            {
                "problem": config.problem,
                "b": _jsonable(b),
                "psi0": float(result.psi0),
                "lambda": float(result.lam),
                "horizon": float(result.horizon),
                "closing_residual": float(result.closing_residual),
                "status": result.status,
                "anchors": _jsonable(result.anchors),
            },
        )
    return 0 if result.status == "converged" else 2


def _run_oracle(config: RunConfig, out: Path) -> int:
    problem, b, _ = _prepare(config)
    trans = oracle_mod.transcribe(
        problem,
        b,
        T=config.T,
        N=config.N,
        tol=config.check_tol,
        seed=config.seed,
    )
    certificate = oracle_mod.perturbation_certificate(trans, seed=config.seed)
    if config.emit_csv:
        oracle_mod.write_transcription_csv(out / "transcription.csv", trans)
    if config.emit_json:
        _write_json(
            out / "oracle.json",
            {
                "problem": config.problem,
                "b": _jsonable(b),
                "T": float(trans.T),
                "N": int(trans.N),
                "value": float(trans.value),
                "status": trans.status,
                "sweeps": int(trans.sweeps),
                "p0": _jsonable(trans.p[0]),
                "certificate": {
                    "min_change": float(certificate["min_change"]),
                    "violations": int(certificate["violations"]),
                    "trials": int(certificate["trials"]),
                },
            },
        )
    return 0 if trans.status == "converged" else 2


_ERROR_ARTIFACT = {
    "costate": "limiting.json",
    "verify": "report.json",
    "shoot": "shoot.json",
    "oracle": "oracle.json",
}


def run(config: RunConfig) -> int:
    """Execute a resolved RunConfig; returns the process exit code."""
    if config.command == "catalog":
        for cid in catalog_ids():
            print(cid)
        return 0
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"costatekit: cannot create output directory: {exc}", file=sys.stderr)
        return 1
    runner = {
        "costate": _run_costate,
        "verify": _run_verify,
        "shoot": _run_shoot,
        "oracle": _run_oracle,
    }[config.command]
    try:
        return runner(config, out)
    except (
        ProblemError,
        CatalogError,
        IntegrationError,
        TailError,
        shoot_mod.ShootError,
        ValueError,
    ) as exc:
        payload = {"problem": config.problem, "error": str(exc)}
        table = getattr(exc, "table", None)
        if table is not None:
            payload["residual_table"] = _jsonable(table)
        if config.emit_json:
            _write_json(out / _ERROR_ARTIFACT[config.command], payload)
        print(f"costatekit: {exc}", file=sys.stderr)
        return 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    config = parse_config(sys.argv[1:] if argv is None else argv)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
