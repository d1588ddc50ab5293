"""Command-line entry point: ``gkappa lint|compile|simulate``.

Exit status is 0 on success, 1 when the model has errors and 2 for I/O or
usage problems.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Sequence

from .compiler import emit_json, emit_text, resolve_model
from .diagnostics import Diagnostic, ModelError, has_errors
from .engine import SimConfig, available_cpus, run, summary_csv, sweep
from .hierarchy import hierarchy_from_model, validate_fringe
from .syntax import format_rule, parse_model

EXIT_OK, EXIT_MODEL, EXIT_IO = 0, 1, 2


class _IOFailure(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _IOFailure(f"{path}: cannot read: {exc.strerror or exc}") from None


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise _IOFailure(f"{path}: cannot write: {exc.strerror or exc}") from None


def _report(diags: Sequence[Diagnostic], path: str) -> None:
    for d in diags:
        print(d.located(path), file=sys.stderr)


def _fringe(arg: str | None) -> list[str] | None:
    if arg is None:
        return None
    return [a.strip() for a in arg.split(",") if a.strip()]


def cmd_lint(args) -> int:
    ast = parse_model(_read(args.input), args.input)
    h = hierarchy_from_model(ast)
    fringe = _fringe(args.fringe)
    diags = validate_fringe(h, fringe if fringe is not None else ast.fringe, 0 if fringe is not None else ast.fringe_line)
    sys.stdout.write(h.report())
    _report(diags, args.input)
    return EXIT_MODEL if has_errors(diags) else EXIT_OK


def _resolve(args):
    ast = parse_model(_read(args.input), args.input)
    model = resolve_model(ast, _fringe(args.fringe), args.drop_below_fringe)
    _report(model.warnings, args.input)
    return model


def _rules_csv(model) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["name", "source", "rule", "rate", "unary_rate", "provenance"])
    for rule, prov in zip(model.rules, model.ruleset.provenance):
        w.writerow([rule.name, prov.source, format_rule(rule, label=False),
                    "" if rule.rate is None else rule.rate,
                    "" if rule.unary_rate is None else rule.unary_rate, str(prov)])
    return out.getvalue()


def cmd_compile(args) -> int:
    model = _resolve(args)
    emit = {"text": emit_text, "json": emit_json, "csv": _rules_csv}[args.emit or "text"]
    _write(args.output, emit(model))
    return EXIT_OK


def _parse_sweep(spec: str) -> tuple[str, list[str]]:
    name, sep, values = spec.partition("=")
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not sep or not name.strip() or not items:
        raise _IOFailure(f"--sweep expects name=v1,v2,..., got {spec!r}")
    for v in items:
        try:
            float(v)
        except ValueError:
            raise _IOFailure(f"--sweep: {v!r} is not a number") from None
    return name.strip(), items


def cmd_simulate(args) -> int:
    if args.emit not in (None, "csv"):
        raise _IOFailure("simulate only emits csv")
    if args.end_time is None and args.max_events is None:
        raise _IOFailure("simulate needs --end-time or --max-events")
    config = SimConfig(args.seed, args.end_time, args.max_events, args.sample, args.events is not None)
    if args.sweep is None:
        traj = run(_resolve(args), config)
        _write(args.output, traj.to_csv())
        if args.events:
            _write(args.events, traj.events_csv())
        return EXIT_OK
    name, values = _parse_sweep(args.sweep)
    if args.output is None:
        raise _IOFailure("--sweep needs -o to name the output files")
    if args.events:
        raise _IOFailure("--events cannot be combined with --sweep")
    model = _resolve(args)
    results = sweep(model.ast, name, [float(v) for v in values], config, model.fringe, args.jobs)
    out = Path(args.output)
    for text, (_, traj) in zip(values, results):
        _write(str(out.with_name(f"{out.stem}.{name}={text}{out.suffix or '.csv'}")), traj.to_csv())
    _write(str(out.with_name(f"{out.stem}.summary{out.suffix or '.csv'}")), summary_csv(name, results))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gkappa",
        description="Lint, compile and simulate hierarchical rule-based models.",
        epilog="Rates are per embedding: every injective match of a rule's left-hand side counts "
               "once, with no division by pattern symmetries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("input", help="model file (.gka)")
        p.add_argument("--fringe", help="comma-separated concrete agents; overrides %%concrete:")

    p = sub.add_parser("lint", help="check a model and print its hierarchy")
    common(p)
    p.set_defaults(func=cmd_lint)

    def resolving(p):
        common(p)
        p.add_argument("--drop-below-fringe", action="store_true",
                       help="drop rules mentioning agents below the fringe instead of failing")
        p.add_argument("-o", "--output", help="output path (default: stdout)")
        p.add_argument("--emit", choices=("text", "json", "csv"))

    p = sub.add_parser("compile", help="compile generic rules to concrete ones")
    resolving(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="run a stochastic simulation, writing a trajectory CSV")
    resolving(p)
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--end-time", type=float)
    p.add_argument("--max-events", type=int)
    p.add_argument("--sample", type=float, help="sampling interval (default: after every event)")
    p.add_argument("--sweep", help="name=v1,v2,...: one run per %%param value, same seed for each")
    p.add_argument("--jobs", type=int, default=None,
                   help=f"parallel runs for --sweep (default: available CPUs, here {available_cpus()})")
    p.add_argument("--events", help="also write the event log CSV here")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelError as exc:
        _report(exc.diagnostics, args.input)
        return EXIT_MODEL
    except _IOFailure as exc:
        print(f"gkappa: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
