"""Command-line front end: simulation, audits, and analysis artifacts.

All randomness flows from --seed (default 0; never the wall clock), so
identical invocations produce byte-identical primary outputs.  Angles accept
``pi`` literal arithmetic (``3pi/4``) to avoid decimal drift in thresholds.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, tables
from .models import parse_model_spec
from .sampling import (
    RunConfig,
    SettingsGrid,
    UniformIID,
    grid_from_json,
    parse_angle,
    planar_grid,
    run_experiment,
    write_events_csv,
    write_events_jsonl,
)

#: Default audit grid: two settings per wing in the xz-plane, containing a
#: pair at angle 3pi/4 (inside the signaling region) and mixed smaller angles.
AUDIT_GRID_ANGLES = (("0", "pi/2"), ("3pi/4", "pi/4"))

_DEFAULTS = {
    "simulate": {"samples": 1000},
    "correlate": {"samples": 100000, "omega_grid": "0:pi:25"},
    "chsh": {"samples": 100000, "angles": "0,pi/2,pi/4,3pi/4"},
    "region-map": {"omega_grid": "pi/2:pi:50", "theta_grid": "0:pi/2:50"},
    "audit": {"samples": 100000},
    "table-export": {"samples": 100000},
}


class CliError(Exception):
    """Validation failure; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise CliError(message)


def _add_common(sub: argparse.ArgumentParser, model: bool = True) -> None:
    if model:
        sub.add_argument("--model", help="gr | bell | qm | localdet:<file.json>")
    sub.add_argument("--samples", type=int, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--threads", type=int, default=None)
    sub.add_argument("--out", default=None, help="output path (default: stdout)")
    sub.add_argument("--format", choices=("csv", "json"), default=None)
    sub.add_argument("--config", default=None, help="JSON file with flag defaults")


def build_parser() -> _Parser:
    parser = _Parser(prog="singletlab", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="write an event stream")
    _add_common(sim)
    sim.add_argument("--omega", default=None, help="pair angle for a 1x1 grid")
    sim.add_argument("--grid-file", default=None, help="JSON settings grid")
    sim.add_argument("--hide-lambda", action="store_true")

    cor = subs.add_parser("correlate", help="correlation curve over pair angles")
    _add_common(cor)
    cor.add_argument("--omega-grid", default=None, help="start:stop:count")

    ch = subs.add_parser("chsh", help="four-correlator CHSH estimate")
    _add_common(ch)
    ch.add_argument("--angles", default=None, help="a,a',b,b' planar angles")

    reg = subs.add_parser("region-map", help="signaling-region map")
    _add_common(reg, model=False)
    reg.add_argument("--omega-grid", default=None, help="start:stop:count (cells)")
    reg.add_argument("--theta-grid", default=None, help="start:stop:count (cells)")

    aud = subs.add_parser("audit", help="constraint checkers and implication audit")
    _add_common(aud)
    aud.add_argument("--omega", default=None)
    aud.add_argument("--grid-file", default=None)
    aud.add_argument("--hide-lambda", action="store_true")

    exp = subs.add_parser("table-export", help="serialize the empirical joint table")
    _add_common(exp)
    exp.add_argument("--omega", default=None)
    exp.add_argument("--grid-file", default=None)
    exp.add_argument("--hide-lambda", action="store_true")

    return parser


def _merge_config(args: argparse.Namespace) -> None:
    """Fill unset options from --config JSON, then from per-command defaults."""
    merged = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                merged = json.load(fh)
        except OSError as exc:
            raise CliError(f"unreadable config file: {exc}")
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not valid JSON: {exc}")
        if not isinstance(merged, dict):
            raise CliError("config file must contain a JSON object")
    defaults = dict(_DEFAULTS.get(args.command, {}))
    for key, value in {**defaults, **merged}.items():
        dest = key.replace("-", "_")
        if getattr(args, dest, None) in (None, False) and hasattr(args, dest):
            setattr(args, dest, value)
    if args.seed is None:
        args.seed = 0
    if args.threads is None:
        args.threads = 1
    if getattr(args, "format", None) is None:
        args.format = "csv"


def _parse_range(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise CliError(f"range {text!r} must be start:stop:count")
    try:
        lo, hi, count = parse_angle(parts[0]), parse_angle(parts[1]), int(parts[2])
    except ValueError as exc:
        raise CliError(str(exc))
    if count < 2:
        raise CliError("range count must be at least 2")
    return lo, hi, count


def _resolve_grid(args: argparse.Namespace) -> SettingsGrid:
    if getattr(args, "omega", None) is not None and getattr(args, "grid_file", None):
        raise CliError("--omega and --grid-file are mutually exclusive")
    if getattr(args, "omega", None) is not None:
        try:
            omega = parse_angle(args.omega)
        except ValueError as exc:
            raise CliError(str(exc))
        return planar_grid(["0"], [omega])
    if getattr(args, "grid_file", None):
        try:
            return grid_from_json(args.grid_file)
        except OSError as exc:
            raise CliError(f"unreadable grid file: {exc}")
        except (ValueError, json.JSONDecodeError) as exc:
            raise CliError(f"bad grid file: {exc}")
    if args.command == "simulate":
        raise CliError("simulate requires --omega or --grid-file")
    return planar_grid(*AUDIT_GRID_ANGLES)


def _model(args: argparse.Namespace):
    if not getattr(args, "model", None):
        raise CliError(f"{args.command} requires --model")
    try:
        return parse_model_spec(args.model)
    except OSError as exc:
        raise CliError(f"unreadable mixture file: {exc}")
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"bad model spec: {exc}")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write output file: {exc}")


def _run(args: argparse.Namespace):
    model = _model(args)
    grid = _resolve_grid(args)
    cfg = RunConfig(
        model=model, grid=grid, samples=args.samples, seed=args.seed, policy=UniformIID()
    )
    result = run_experiment(cfg, threads=args.threads)
    if getattr(args, "hide_lambda", False):
        partition = tables.TrivialPartition()
    else:
        partition = tables.default_partition(model, grid)
    return model, tables.build_table(result, partition)


def _cmd_simulate(args) -> int:
    model = _model(args)
    grid = _resolve_grid(args)
    cfg = RunConfig(
        model=model, grid=grid, samples=args.samples, seed=args.seed, policy=UniformIID()
    )
    result = run_experiment(cfg, threads=args.threads)
    buf = io.StringIO()
    if args.format == "json":
        write_events_jsonl(result, buf, hide_lambda=args.hide_lambda)
    else:
        write_events_csv(result, buf, hide_lambda=args.hide_lambda)
    _emit(buf.getvalue(), args.out)
    return 0


def _cmd_correlate(args) -> int:
    model = _model(args)
    lo, hi, count = _parse_range(args.omega_grid)
    omegas = np.linspace(lo, hi, count)
    curve = analysis.correlation_curve(model, omegas, args.samples, args.seed, args.threads)
    if args.format == "json":
        _emit(json.dumps(curve.to_dict(), indent=2) + "\n", args.out)
    else:
        _emit(curve.to_csv(), args.out)
    return 0


def _cmd_chsh(args) -> int:
    model = _model(args)
    try:
        angles = [parse_angle(t) for t in args.angles.split(",")]
    except ValueError as exc:
        raise CliError(str(exc))
    if len(angles) != 4:
        raise CliError("--angles needs four comma-separated values: a,a',b,b'")
    result = analysis.chsh_from_angles(model, angles, args.samples, args.seed, args.threads)
    if args.format == "json":
        _emit(json.dumps(result.to_dict(), indent=2) + "\n", args.out)
    else:
        lines = ["pair,E,stderr,N"]
        for label, e, se in result.correlators:
            lines.append(f"{label},{e!r},{se!r},{args.samples}")
        lines.append(f"S,{result.s_value!r},{result.stderr!r},")
        _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_region_map(args) -> int:
    o_lo, o_hi, n_o = _parse_range(args.omega_grid)
    t_lo, t_hi, n_t = _parse_range(args.theta_grid)
    rm = analysis.region_map(
        n_omega=n_o, n_theta=n_t, omega_lo=o_lo, omega_hi=o_hi, theta_lo=t_lo, theta_hi=t_hi
    )
    if args.out is not None and args.out.endswith(".svg"):
        _emit(analysis.region_svg(rm), args.out)
    elif args.format == "json":
        payload = {
            "omegas": [float(v) for v in rm.omegas],
            "thetas": [float(v) for v in rm.thetas],
            "analytic": rm.analytic.astype(int).tolist(),
            "mc": rm.mc.astype(int).tolist(),
            "tie_cells": rm.tie_cells,
        }
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    else:
        _emit(rm.to_csv(), args.out)
    return 0


def _witness_str(witness: dict | None) -> str:
    if not witness:
        return ""
    return ";".join(f"{k}={v}" for k, v in witness.items())


def _cmd_audit(args) -> int:
    model, table = _run(args)
    if args.hide_lambda:
        reports = [tables.check_ns_weak(table)]
        payload = {
            "constraints": [r.to_dict() for r in reports],
            "consistent": True,
            "notes": [
                "hidden readout suppressed: only the readout-free checker evaluated"
            ],
        }
        consistent = True
    else:
        audit = tables.audit_implications(
            table,
            deterministic=model.is_deterministic,
            reproduces_singlet=model.reproduces_singlet,
        )
        payload = audit.to_dict()
        reports = audit.constraints
        consistent = audit.consistent
    if args.format == "json":
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    else:
        lines = ["id,pass,max_deviation,tolerance,witness,skipped_cells"]
        for r in reports:
            lines.append(
                f"{r.constraint_id},{int(r.passed)},{r.max_deviation!r},"
                f"{r.tolerance!r},{_witness_str(r.witness)},{r.skipped_cells}"
            )
        _emit("\n".join(lines) + "\n", args.out)
    return 0 if consistent else 2


def _cmd_table_export(args) -> int:
    if args.format == "csv":
        # flat JSON is the only serialized table form
        args.format = "json"
    _, table = _run(args)
    _emit(json.dumps(table.to_dict()) + "\n", args.out)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "correlate": _cmd_correlate,
    "chsh": _cmd_chsh,
    "region-map": _cmd_region_map,
    "audit": _cmd_audit,
    "table-export": _cmd_table_export,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _merge_config(args)
        if args.samples is not None and args.samples < 1:
            raise CliError("--samples must be a positive integer")
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"singletlab: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"singletlab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
