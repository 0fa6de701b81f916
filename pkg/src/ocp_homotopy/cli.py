"""Command-line front end for the two-obstacle path-planning example.

Exit codes: 0 success, 1 configuration or input error, 2 solver failure
(or a failing diagnostics check).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .diagnostics import AssumptionReport, check_A5_A6_sampled, validate_params
from .homotopy import HomotopyParams, InvalidParams
from .pathplan import (
    STRATEGIES,
    ConfigError,
    InfeasibleGuess,
    PathPlanConfig,
    build_problem,
    find_initial_guess,
    trajectory,
)
from .problem import NonFiniteError
from .tracker import TrackerConfig, track, write_trace_csv
from .transcription import NlpView

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ocp-homotopy", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log tracker progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="track the zero curve from lam=0 to lam=1")
    solve.add_argument("--config", required=True)
    solve.add_argument("--h", type=float, default=0.1, help="base predictor step")
    solve.add_argument("--b0", type=float, default=1.0)
    solve.add_argument("--c0", type=float, default=1.0)
    solve.add_argument("--guess", choices=STRATEGIES + ("all",), default="straight")
    solve.add_argument("--seed", type=int, default=None, help="jitter the route waypoints")
    solve.add_argument("--trace", help="per-step trace CSV")
    solve.add_argument("--full-trace", action="store_true", help="append u and mu columns to the trace")
    solve.add_argument("--result", help="result JSON")
    solve.add_argument("--max-steps", type=int, default=10000)

    check = sub.add_parser("check", help="run the assumption diagnostics")
    check.add_argument("--config", required=True)
    check.add_argument("--samples", type=int, default=200)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--guess", choices=STRATEGIES, default="straight")
    check.add_argument("--b0", type=float, default=1.0)

    roll = sub.add_parser("rollout", help="print the state trajectory for a control CSV")
    roll.add_argument("--config", required=True)
    roll.add_argument("--controls", required=True, help="CSV with N rows of m controls (header optional)")
    return p


def _suffixed(path, tag):
    p = Path(path)
    return p.with_name(f"{p.stem}-{tag}{p.suffix}")


def solve_one(config: PathPlanConfig, guess: str, h: float, b0: float, c0: float, seed=None, max_steps: int = 10000):
    """Build, validate and track one configuration. Returns ``(view, params, result)``."""
    view = NlpView(build_problem(config))
    u0 = find_initial_guess(config, guess, seed)
    params = HomotopyParams.constant(u0, view.s, b0, c0)
    params.check_against(view)
    result = track(params, view, TrackerConfig(h=h, max_steps=max_steps))
    return view, params, result


def result_summary(config: PathPlanConfig, result) -> dict:
    xs = trajectory(config, result.u)
    margins = [
        float(np.min(np.linalg.norm(xs[1:-1] - np.array(ob.m), axis=1) ** 2 - ob.r**2)) for ob in config.obstacles
    ]
    kkt = {k: result.kkt[k] for k in ("stationarity", "primal", "complementarity", "dual")} if result.kkt else None
    return {
        "status": result.status.value,
        "lambda_final": float(result.lam),
        "cost": float(result.cost),
        "kkt": kkt,
        "steps": result.steps,
        "min_obstacle_margin": min(margins) if margins else None,
        "terminal_error": float(np.linalg.norm(xs[-1] - np.array(config.xN))),
        "seconds": round(result.seconds, 3),
        "message": result.message,
    }


def _cmd_solve(args) -> int:
    config = PathPlanConfig.load(args.config)
    guesses = STRATEGIES if args.guess == "all" else (args.guess,)

    def run(g):
        return g, solve_one(config, g, args.h, args.b0, args.c0, args.seed, args.max_steps)

    if len(guesses) == 1:
        outcomes = [run(guesses[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(guesses)) as pool:
            outcomes = list(pool.map(run, guesses))

    code = EXIT_OK
    report = {}
    for g, (view, _, result) in outcomes:
        summary = result_summary(config, result)
        report[g] = summary
        tag = g if len(guesses) > 1 else None
        if args.trace:
            path = _suffixed(args.trace, tag) if tag else args.trace
            write_trace_csv(path, result.trace, view.r, view.s, full=args.full_trace)
        print(f"{g}: {summary['status']} lam={summary['lambda_final']:.6f} cost={summary['cost']:.9f} steps={summary['steps']}")
        if not result.converged:
            code = EXIT_SOLVER
    if args.result:
        payload = report if len(guesses) > 1 else report[guesses[0]]
        Path(args.result).write_text(json.dumps(payload, indent=2) + "\n")
    return code


def _cmd_check(args) -> int:
    config = PathPlanConfig.load(args.config)
    view = NlpView(build_problem(config))
    u0 = find_initial_guess(config, args.guess, validate=False)
    params = HomotopyParams(u0, np.full(view.s, args.b0), np.ones(view.s))
    report = AssumptionReport().extend(validate_params(view, params))
    report.extend(check_A5_A6_sampled(view, samples=args.samples, seed=args.seed))
    print(report.to_json(indent=2))
    return EXIT_OK if report.ok else EXIT_SOLVER


def read_controls(path, N: int, m: int) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read controls {path}: {exc}") from exc
    rows = list(csv.reader(ln for ln in text.splitlines() if ln.strip()))
    try:
        data = [[float(v) for v in row] for row in rows[1:]]
        try:
            data.insert(0, [float(v) for v in rows[0]])
        except ValueError:
            pass  # header row
        data = np.array(data, dtype=float)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed controls CSV: {exc}") from exc
    if data.shape != (N, m):
        raise ConfigError(f"controls CSV must have {N} rows of {m} values, got shape {data.shape}")
    return data.reshape(-1)


def _cmd_rollout(args) -> int:
    config = PathPlanConfig.load(args.config)
    u = read_controls(args.controls, config.N, 2)
    xs = trajectory(config, u)
    out = sys.stdout
    out.write("k,x1,x2\n")
    for k, x in enumerate(xs):
        out.write(f"{k},{float(x[0])!r},{float(x[1])!r}\n")
    return EXIT_OK


_COMMANDS = {"solve": _cmd_solve, "check": _cmd_check, "rollout": _cmd_rollout}


def cli_main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, InfeasibleGuess, InvalidParams) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
