"""Command-line front end.

    polyfract validate FILE
    polyfract analyze FILE [--max-level N] [--json PATH]
    polyfract energy FILE --p P [--M M] [--m-max K] [--csv PATH]
    polyfract dimar FILE --p-lo A --p-hi B [--tol T]
    polyfract render FILE --level M [--overlay KIND[:ARG]] --out PATH
    polyfract examples list | show NAME | write NAME PATH
"""
import argparse
import json
import sys
import time
from pathlib import Path
from typing import List, Optional, TextIO

import numpy as np
from loguru import logger

from polyfract.config.settings import settings
from polyfract.core.exceptions import EXIT_USAGE, PolyfractError
from polyfract.core.logging_config import setup_logging
from polyfract.schemas.schemas import AxiomReport, Report
from polyfract.services import energy as energy_service
from polyfract.services.boundary import essential_boundary, isolated_contact_report
from polyfract.services.conditions import theorem_dispatch
from polyfract.services.fixtures import example_text, list_examples, write_example
from polyfract.services.paths import folded_trace_check, random_ell_path
from polyfract.services.render import RenderSpec, parse_overlay, render_svg
from polyfract.services.system import ValidatedSystem, load_system_file, validate
from polyfract.services.wordtree import level_graph, level_stats, vertex_in_K


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--workers", type=int, default=None, help="worker pool size")
    common.add_argument("--seed", type=int, default=settings.default_seed, help="seed for sampled paths")
    common.add_argument("--deterministic", action="store_true", help="omit timings from reports")
    common.add_argument("--log-level", default=None)

    parser = _Parser(prog="polyfract", description="Analyze G-symmetric polygon-based self-similar systems")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check the axioms")
    p.add_argument("file")

    p = sub.add_parser("analyze", parents=[common], help="combinatorial report and verdict")
    p.add_argument("file")
    p.add_argument("--max-level", type=int, default=2)
    p.add_argument("--oracle-depth", type=int, default=3)
    p.add_argument("--paths", type=int, default=0, help="sample this many paths for the folded trace check")
    p.add_argument("--json", dest="json_out", metavar="PATH", nargs="?", const="-", default=None,
                   help="write the JSON report ('-' or no value for stdout); errors go to stderr as JSON")

    p = sub.add_parser("energy", parents=[common], help="conductance scaling table")
    p.add_argument("file")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--m-max", type=int, default=3)
    p.add_argument("--csv", default="-", help="CSV destination ('-' for stdout)")

    p = sub.add_parser("dimar", parents=[common], help="bracket the conformal dimension")
    p.add_argument("file")
    p.add_argument("--p-lo", type=float, required=True)
    p.add_argument("--p-hi", type=float, default=None, help="defaults to the Hausdorff dimension")
    p.add_argument("--tol", type=float, default=0.1)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--m-max", type=int, default=3)

    p = sub.add_parser("render", parents=[common], help="SVG of a generation")
    p.add_argument("file")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--overlay", default=None, help="none, essential_edges, phi_parity_fill or components:i,j")
    p.add_argument("--out", required=True)

    p = sub.add_parser("examples", parents=[common], help="builtin systems")
    p.add_argument("action", choices=["list", "show", "write"])
    p.add_argument("name", nargs="?")
    p.add_argument("path", nargs="?")

    for name, command in sub.choices.items():
        if name != "analyze":
            command.add_argument("--json", dest="json_errors", action="store_true",
                                 help="print errors as JSON objects on stderr")
    return parser


def _emit(text: str, dest: Optional[str], out: TextIO):
    if dest in (None, "-"):
        out.write(text)
        if not text.endswith("\n"):
            out.write("\n")
    else:
        Path(dest).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {dest}")


def _require(args) -> ValidatedSystem:
    result = validate(load_system_file(args.file))
    if isinstance(result, AxiomReport):
        raise _AxiomFailure(result)
    return result


class _AxiomFailure(Exception):
    def __init__(self, report: AxiomReport):
        super().__init__("axioms failed")
        self.report = report


def build_report(system: ValidatedSystem, max_level: int, oracle_depth: int, deterministic: bool,
                 paths: int = 0, seed: Optional[int] = None) -> Report:
    timing = {}
    started = time.perf_counter()

    def lap(name: str):
        nonlocal started
        now = time.perf_counter()
        timing[name] = round(now - started, 6)
        started = now

    levels = [level_stats(system, level_graph(system, m)) for m in range(1, max_level + 1)]
    lap("levels")
    essential = essential_boundary(system)
    contact = isolated_contact_report(system, oracle_depth)
    lap("contact")
    verdict = theorem_dispatch(system, contact)
    lap("verdict")
    if paths:
        verdict.details["folded_traces"] = _folded_trace_summary(system, paths, seed, max_level)
        lap("paths")
    return Report(
        system=system.summary(),
        axioms=system.report,
        essential_boundary=essential.to_list(),
        vertex_in_K=sorted(vertex_in_K(system).in_K),
        levels=levels,
        contact=contact,
        verdict=verdict,
        timing=None if deterministic else timing,
    )


def _folded_trace_summary(system: ValidatedSystem, count: int, seed: Optional[int], level: int) -> dict:
    rng = np.random.default_rng(settings.default_seed if seed is None else seed)
    graph = level_graph(system, max(level, 2))
    checked, failures = 0, []
    for _ in range(count):
        gamma = random_ell_path(graph, rng, 4 * graph.level * system.J)
        result = folded_trace_check(system, gamma, 1)
        if result is None:
            continue
        checked += 1
        if not result["ok"]:
            failures.append(result)
    return {"sampled": count, "qualifying": checked, "failures": failures}


def run(argv: Optional[List[str]] = None, stdout: TextIO = None, stderr: TextIO = None) -> int:
    """Run one command and return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        stderr.write(f"usage error: {err}\n")
        return EXIT_USAGE
    json_errors = getattr(args, "json_errors", False) or getattr(args, "json_out", None) is not None
    setup_logging(args.log_level)

    try:
        return _dispatch(args, stdout)
    except _AxiomFailure as failure:
        stdout.write(failure.report.model_dump_json(indent=2) + "\n")
        return 2
    except PolyfractError as err:
        logger.error(f"{err.code}: {err.message}")
        if json_errors:
            stderr.write(json.dumps(err.to_dict(), sort_keys=True, default=str) + "\n")
        return err.exit_code
    except UsageError as err:
        stderr.write(f"usage error: {err}\n")
        return EXIT_USAGE


def _dispatch(args, stdout: TextIO) -> int:
    if args.command == "examples":
        return _examples(args, stdout)

    if args.command == "validate":
        result = validate(load_system_file(args.file))
        report = result if isinstance(result, AxiomReport) else result.report
        stdout.write(report.model_dump_json(indent=2) + "\n")
        return 0 if report.passed else 2

    system = _require(args)

    if args.command == "analyze":
        report = build_report(system, args.max_level, args.oracle_depth, args.deterministic, args.paths, args.seed)
        if args.json_out is not None:
            _emit(report.model_dump_json(indent=2), args.json_out, stdout)
        else:
            verdict = report.verdict
            stdout.write(
                f"{system.name}: J={system.J} N={system.N} {system.group!r}\n"
                f"essential boundary: {report.essential_boundary}\n"
                f"isolated contact points: {report.contact.verdict.value} ({report.contact.route})\n"
                f"verdict: {verdict.status.value} [{verdict.theorem.value}] M_J={verdict.M_J}\n"
            )
        return 0

    if args.command == "energy":
        estimate = energy_service.scaling_estimate(system, args.p, args.M, args.m_max, workers=args.workers)
        rows = energy_service.scaling_rows(system, estimate)
        if args.csv in (None, "-"):
            energy_service.write_energy_csv(rows, stdout)
        else:
            with open(args.csv, "w", encoding="utf-8", newline="") as handle:
                energy_service.write_energy_csv(rows, handle)
            logger.info(f"Wrote {args.csv}")
        return 0

    if args.command == "dimar":
        p_hi = args.p_hi if args.p_hi is not None else system.hausdorff_dimension
        bracket = energy_service.dimar_bracket(system, args.p_lo, p_hi, args.tol, args.M, args.m_max, workers=args.workers)
        stdout.write(bracket.model_dump_json(indent=2) + "\n")
        return 0

    if args.command == "render":
        kind, cut = parse_overlay(args.overlay)
        data = render_svg(system, RenderSpec(level=args.level, overlay=kind, cut=cut), workers=args.workers)
        Path(args.out).write_bytes(data)
        logger.info(f"Wrote {args.out}")
        return 0

    raise UsageError(f"unknown command {args.command}")


def _examples(args, stdout: TextIO) -> int:
    if args.action == "list":
        for name in list_examples():
            stdout.write(name + "\n")
        return 0
    if not args.name:
        raise UsageError(f"examples {args.action} needs a NAME")
    if args.action == "show":
        stdout.write(example_text(args.name))
        return 0
    if not args.path:
        raise UsageError("examples write needs NAME and PATH")
    write_example(args.name, args.path)
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
