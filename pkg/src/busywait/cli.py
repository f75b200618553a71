"""Command line front end.

Subcommands:

  run      execute a program under a scheduler, print the outcome
  verify   decide fair termination and optionally emit a checked proof
  check    validate a proof document or replay an annotated trace
  trace    run a program under a checked proof, emitting an annotated trace
  pograph  turn an annotated trace into a program order graph or balance report
  corpus   enumerate small programs and cross-check every decision route

Exit codes: 0 success (verified, terminated, valid, balanced); 1 negative
result (refuted, fair divergence, failed check, imbalance); 2 usage, IO, or
malformed input, and internal disagreement between decision routes; 3
inconclusive (fuel or search limits).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from . import __version__
from .annotated import (
    StuckError,
    TraceError,
    TraceFormatError,
    annotated_run,
    annotated_trace_from_json,
    annotated_trace_to_json,
    check_annotated_trace,
)
from .lang import ParseError, enumerate_commands, parse_program, pretty
from .pograph import (
    build_graph,
    check_leaf_balance,
    graph_to_json,
    max_loop_free_prefix,
    spin_support_report,
    to_dot,
)
from .proof import (
    ProofError,
    ProofFormatError,
    check_proof,
    proof_from_json,
    proof_to_json,
    synthesize,
)
from .semantics import (
    FAIRLY_DIVERGES,
    TERMINATES,
    FairDivergence,
    FuelExhausted,
    RoundRobin,
    Scheduler,
    Scripted,
    SearchLimitError,
    SeededRandom,
    Terminated,
    ThreadPool,
    UnknownThreadError,
    explore_fair_termination,
    run,
    static_termination_oracle,
    trace_to_json,
)

OK = 0
NEGATIVE = 1
USAGE = 2
INCONCLUSIVE = 3

DEFAULT_FUEL = 100_000
DEFAULT_MAX_NODES = 7


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _write_text(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
            if not text.endswith("\n"):
                f.write("\n")


def _load_json(path: str):
    return json.loads(_read_text(path))


def _scheduler_from_args(args) -> Scheduler:
    if args.scheduler == "round-robin":
        return RoundRobin()
    if args.scheduler == "random":
        return SeededRandom(args.seed)
    script = tuple(int(part) for part in args.script.split(",")) if args.script else ()
    return Scripted(script)


def _add_scheduler_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--scheduler",
        choices=("round-robin", "random", "scripted"),
        default="round-robin",
        help="thread picking policy (default round-robin)",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for the random scheduler")
    p.add_argument(
        "--script",
        default="",
        help="comma-separated thread ids for the scripted scheduler",
    )
    p.add_argument(
        "--fuel", type=int, default=DEFAULT_FUEL, help=f"step budget (default {DEFAULT_FUEL})"
    )


def cmd_run(args) -> int:
    try:
        program = parse_program(_read_text(args.program))
    except (OSError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    scheduler = _scheduler_from_args(args)
    try:
        outcome, trace = run(ThreadPool.initial(program), scheduler, args.fuel)
    except UnknownThreadError as e:
        print(f"error: script names thread {e.args[0]}, not in the pool", file=sys.stderr)
        return USAGE
    if args.trace is not None:
        _write_text(json.dumps(trace_to_json(trace), indent=2), args.trace)
    if isinstance(outcome, Terminated):
        print(f"terminated in {outcome.steps} steps")
        return OK
    if isinstance(outcome, FairDivergence):
        print(f"fair divergence: {outcome.witness.describe()}")
        return NEGATIVE
    print(f"fuel exhausted after {outcome.steps} steps")
    return INCONCLUSIVE


def cmd_verify(args) -> int:
    try:
        program = parse_program(_read_text(args.program))
    except (OSError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE

    oracle_verdicts = {}
    if args.oracle in ("static", "both"):
        oracle_verdicts["static"] = static_termination_oracle(program)
    if args.oracle in ("explore", "both"):
        try:
            oracle_verdicts["explore"] = explore_fair_termination(program).verdict
        except SearchLimitError as e:
            print(f"inconclusive: {e}", file=sys.stderr)
            return INCONCLUSIVE

    tree = synthesize(program)
    if tree is not None:
        try:
            check_proof(tree)
        except ProofError as e:
            print(f"internal disagreement: synthesized proof failed its own check: {e}",
                  file=sys.stderr)
            return USAGE
    proof_verdict = TERMINATES if tree is not None else FAIRLY_DIVERGES
    for name, verdict in oracle_verdicts.items():
        if verdict != proof_verdict:
            print(
                f"internal disagreement: proof search says {proof_verdict}, "
                f"{name} oracle says {verdict}",
                file=sys.stderr,
            )
            return USAGE

    if tree is None:
        print(f"refuted: {pretty(program)} fairly diverges")
        return NEGATIVE
    if args.emit_proof is not None:
        _write_text(json.dumps(proof_to_json(tree), indent=2), args.emit_proof)
    print(f"verified: {pretty(program)} terminates under every fair schedule")
    return OK


def _looks_like_proof(doc) -> bool:
    return isinstance(doc, dict) and "rule" in doc


def cmd_check(args) -> int:
    try:
        doc = _load_json(args.document)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    kind = args.kind
    if kind == "auto":
        kind = "proof" if _looks_like_proof(doc) else "trace"

    if kind == "proof":
        try:
            tree = proof_from_json(doc)
        except ProofFormatError as e:
            print(f"error: {e}", file=sys.stderr)
            return USAGE
        if args.program is not None:
            try:
                program = parse_program(_read_text(args.program))
            except (OSError, ParseError) as e:
                print(f"error: {e}", file=sys.stderr)
                return USAGE
            if tree.conclusion.command != program:
                print("check failed: proof concludes a different program")
                return NEGATIVE
        try:
            check_proof(tree)
        except ProofError as e:
            print(f"check failed: {e}")
            return NEGATIVE
        print("proof valid")
        return OK

    try:
        trace = annotated_trace_from_json(doc)
    except TraceFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    try:
        check_annotated_trace(trace)
    except TraceError as e:
        print(f"check failed: {e}")
        return NEGATIVE
    print(f"trace valid: {len(trace.steps)} steps replay cleanly")
    return OK


def cmd_trace(args) -> int:
    try:
        program = parse_program(_read_text(args.program))
    except (OSError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    if args.proof is not None:
        try:
            tree = proof_from_json(_load_json(args.proof))
        except (OSError, json.JSONDecodeError, ProofFormatError) as e:
            print(f"error: {e}", file=sys.stderr)
            return USAGE
        if tree.conclusion.command != program:
            print("error: proof concludes a different program", file=sys.stderr)
            return USAGE
    else:
        tree = synthesize(program)
        if tree is None:
            print(f"refuted: {pretty(program)} fairly diverges; nothing to direct")
            return NEGATIVE
    scheduler = _scheduler_from_args(args)
    try:
        outcome, trace = annotated_run(tree, scheduler, args.fuel)
    except ProofError as e:
        print(f"check failed: {e}")
        return NEGATIVE
    except StuckError as e:
        print(f"stuck: {e}")
        return NEGATIVE
    except UnknownThreadError as e:
        print(f"error: script names thread {e.args[0]}, not in the pool", file=sys.stderr)
        return USAGE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    _write_text(json.dumps(annotated_trace_to_json(trace), indent=2), args.output)
    if isinstance(outcome, FuelExhausted):
        print(f"fuel exhausted after {outcome.steps} steps", file=sys.stderr)
        return INCONCLUSIVE
    return OK


def cmd_pograph(args) -> int:
    try:
        trace = annotated_trace_from_json(_load_json(args.trace))
    except (OSError, json.JSONDecodeError, TraceFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    g = build_graph(trace)
    if args.balance:
        prefix = max_loop_free_prefix(g) if args.loop_free else None
        try:
            report = check_leaf_balance(g, trace, prefix)
        except ValueError as e:
            print(f"imbalance: {e}")
            return NEGATIVE
        support = spin_support_report(g, trace, prefix)
        print(report.describe())
        print(support.describe())
        return OK if report.ok and support.ok else NEGATIVE
    if args.format == "dot":
        _write_text(to_dot(g), args.output)
    else:
        _write_text(json.dumps(graph_to_json(g), indent=2), args.output)
    return OK


def cmd_corpus(args) -> int:
    programs = list(enumerate_commands(args.max_nodes))
    if args.list:
        for c in programs:
            print(pretty(c))
        return OK
    provable = 0
    for c in programs:
        tree = synthesize(c)
        verdict = TERMINATES if tree is not None else FAIRLY_DIVERGES
        if tree is not None:
            try:
                check_proof(tree)
            except ProofError as e:
                print(f"internal disagreement: {pretty(c)}: {e}", file=sys.stderr)
                return USAGE
            provable += 1
        static = static_termination_oracle(c)
        if static != verdict:
            print(
                f"internal disagreement: {pretty(c)}: proof search says {verdict}, "
                f"static oracle says {static}",
                file=sys.stderr,
            )
            return USAGE
        if args.explore:
            try:
                explored = explore_fair_termination(c).verdict
            except SearchLimitError as e:
                print(f"inconclusive: {pretty(c)}: {e}", file=sys.stderr)
                return INCONCLUSIVE
            if explored != verdict:
                print(
                    f"internal disagreement: {pretty(c)}: proof search says {verdict}, "
                    f"exploration says {explored}",
                    file=sys.stderr,
                )
                return USAGE
    print(
        f"{len(programs)} programs with at most {args.max_nodes} nodes: "
        f"{provable} provable, {len(programs) - provable} refuted, all routes agree"
    )
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="busywait",
        description="Prove and probe fair termination of busy-waiting thread pools.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a program under a scheduler")
    p_run.add_argument("program", help="program file, or - for stdin")
    _add_scheduler_args(p_run)
    p_run.add_argument("--trace", help="write the step trace as JSON to this file")
    p_run.set_defaults(fn=cmd_run)

    p_verify = sub.add_parser("verify", help="decide fair termination with proof")
    p_verify.add_argument("program", help="program file, or - for stdin")
    p_verify.add_argument(
        "--oracle",
        choices=("static", "explore", "both"),
        default="both",
        help="independent routes to cross-check the proof verdict (default both)",
    )
    p_verify.add_argument("--emit-proof", help="write the proof as JSON to this file")
    p_verify.set_defaults(fn=cmd_verify)

    p_check = sub.add_parser("check", help="validate a proof or replay a trace")
    p_check.add_argument("document", help="proof or annotated trace JSON file, - for stdin")
    p_check.add_argument(
        "--kind",
        choices=("auto", "proof", "trace"),
        default="auto",
        help="what the document is (default: guess from its shape)",
    )
    p_check.add_argument("--program", help="require the proof to conclude this program")
    p_check.set_defaults(fn=cmd_check)

    p_trace = sub.add_parser("trace", help="emit a proof-directed annotated trace")
    p_trace.add_argument("program", help="program file, or - for stdin")
    p_trace.add_argument("--proof", help="proof JSON to direct the run (default: synthesize)")
    _add_scheduler_args(p_trace)
    p_trace.add_argument("-o", "--output", help="write the annotated trace here")
    p_trace.set_defaults(fn=cmd_trace)

    p_graph = sub.add_parser("pograph", help="program order graph of an annotated trace")
    p_graph.add_argument("trace", help="annotated trace JSON file, or - for stdin")
    p_graph.add_argument(
        "--format", choices=("json", "dot"), default="json", help="output format"
    )
    p_graph.add_argument(
        "--balance",
        action="store_true",
        help="report leaf resource balance instead of printing the graph",
    )
    p_graph.add_argument(
        "--loop-free",
        action="store_true",
        help="balance the largest prefix whose busy-loop steps are leaves",
    )
    p_graph.add_argument("-o", "--output", help="write the graph here")
    p_graph.set_defaults(fn=cmd_pograph)

    p_corpus = sub.add_parser("corpus", help="cross-check all small programs")
    p_corpus.add_argument(
        "--max-nodes",
        type=int,
        default=DEFAULT_MAX_NODES,
        help=f"syntax tree size bound (default {DEFAULT_MAX_NODES})",
    )
    p_corpus.add_argument("--list", action="store_true", help="print the programs only")
    p_corpus.add_argument(
        "--explore",
        action="store_true",
        help="also cross-check by exhaustive interleaving search",
    )
    p_corpus.set_defaults(fn=cmd_corpus)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
