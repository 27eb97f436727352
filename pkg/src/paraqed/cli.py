"""Command-line entry point.

Subcommands: ``validate``, ``run``, ``compare``, ``analyze``, ``emit-plots``.
Exit codes: 0 success, 2 validation error, 3 guard trip, 4 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import field_report, report_text
from .backaction import GaussianFieldState, NonQuadraticError, SolverError, ZerosGuardError
from .config import ConfigError, load_config
from .electron import AliasingError, SampleError
from .field import GridResolutionError, NormalizationError, load_field_state
from .joint import MaskedRegionError
from .pipeline import emit_plot_data, run

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_GUARD = 3
EXIT_SOLVER = 4

GUARD_ERRORS = (ZerosGuardError, AliasingError, SampleError, GridResolutionError,
                NormalizationError, MaskedRegionError)
SOLVER_ERRORS = (SolverError, NonQuadraticError, np.linalg.LinAlgError, FloatingPointError)


def _print_summary(summary: dict) -> None:
    from .io import key_value_lines

    print("\n".join(key_value_lines(summary)))


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: {cfg.name} ({len(cfg.modes)} mode(s), solver={cfg.solver}, field_path={cfg.field_path})")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.solver:
        cfg = replace(cfg, solver=args.solver)
    if args.field_path:
        cfg = replace(cfg, field_path=args.field_path)
    _print_summary(run(cfg, args.out))
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = replace(load_config(args.config), solver="both")
    summary = run(cfg, args.out)
    _print_summary({k: v for k, v in summary.items()
                    if "compare" in k or k.startswith(("slope.", "scenario"))})
    return EXIT_OK


def _cmd_analyze(args) -> int:
    path = Path(args.state)
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic == b"FSGRID01":
        state = load_field_state(path)
    else:
        state = GaussianFieldState.from_text(path.read_text(encoding="utf-8"))
    sys.stdout.write(report_text(field_report(state, args.t)))
    return EXIT_OK


def _cmd_emit(args) -> int:
    for q in args.quantity:
        print(emit_plot_data(args.run_dir, q))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paraqed", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    r = sub.add_parser("run", help="run a scenario or sweep")
    r.add_argument("config")
    r.add_argument("--out", help="run directory (default from config)")
    r.add_argument("--solver", choices=("parametric", "joint", "both"))
    r.add_argument("--field-path", choices=("grid", "gaussian", "both"))
    r.set_defaults(func=_cmd_run)
    c = sub.add_parser("compare", help="run parametric and joint solvers and compare")
    c.add_argument("config")
    c.add_argument("--out")
    c.set_defaults(func=_cmd_compare)
    a = sub.add_parser("analyze", help="diagnostics of a saved field state")
    a.add_argument("state", help="grid checkpoint (.bin) or Gaussian record (.txt)")
    a.add_argument("--t", type=float, default=None, help="time stamp to include in the report")
    a.set_defaults(func=_cmd_analyze)
    e = sub.add_parser("emit-plots", help="write plot data from a run directory")
    e.add_argument("run_dir")
    e.add_argument("quantity", nargs="+", help="var_q, N, d12 or infidelity")
    e.set_defaults(func=_cmd_emit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("validation failed:", file=sys.stderr)
        for key, msg in exc.errors:
            print(f"  {key}: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except GUARD_ERRORS as exc:
        print(f"guard trip: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
