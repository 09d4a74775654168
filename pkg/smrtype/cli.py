"""The `smrtype` command line.

Exit codes: 0 if the analysis succeeds (the program typechecks, the exploration is
clean), 1 if it fails, 2 on usage errors and on unreadable or malformed input.
"""

import argparse
import contextlib
import json
import logging
import pathlib
import sys

from .annotator import describe_insertions, repair
from .errors import AutomatonError, ConfigurationError, ParseError
from .inference import typecheck
from .instrument import instrument, size_ratio
from .lang import parse_program, pretty_print
from .oracle import MODES, PRF, ExplorationBudget, explore
from .rules import SafeCallTable, verify_safe_call_table
from .smr import (
    interference_closure,
    load_automaton,
    safe_locations,
)


logger = logging.getLogger(__name__)

OK = 0
FAILED = 1
USAGE = 2


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--json", action="store_true", help="Machine-readable output.")
    parser.add_argument("--out", help="Write the output to this file.")
    parser.add_argument("--verbose", action="store_true", help="Debug logging.")


def _automaton_args(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--smr",
        required=True,
        help="Built-in automaton (base, ebr, hp2) or a path to an automaton file.",
    )
    parser.add_argument(
        "--no-base",
        action="store_true",
        help="Do not multiply the automaton with the base automaton.",
    )


def _budget_args(parser: argparse.ArgumentParser):
    parser.add_argument("--threads", type=int, default=2)
    parser.add_argument("--addresses", type=int, default=3)
    parser.add_argument("--data", type=int, default=2)
    parser.add_argument("--steps", type=int, default=20)
    parser.add_argument("--rounds", type=int, default=1)
    parser.add_argument(
        "--gc",
        action="store_true",
        help="Garbage-collected semantics: nothing is freed or reused.",
    )
    parser.add_argument(
        "--jobs", type=int, default=1, help="Worker threads for the exploration."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smrtype",
        description="Type-based pointer race analysis for lock-free data "
        "structures that use safe memory reclamation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("typecheck", help="Infer guarantees for every command.")
    p.add_argument("--program", required=True)
    _automaton_args(p)
    p.add_argument(
        "--repair",
        action="store_true",
        help="On failure, try to add invariant annotations.",
    )
    p.add_argument("--max-rounds", type=int, default=8)
    _budget_args(p)
    _common(p)

    p = sub.add_parser("repair", help="Add annotations until the program typechecks.")
    p.add_argument("--program", required=True)
    _automaton_args(p)
    p.add_argument("--max-rounds", type=int, default=8)
    _budget_args(p)
    _common(p)

    p = sub.add_parser("instrument", help="Compile annotations into assertions.")
    p.add_argument("--program", required=True)
    _common(p)

    p = sub.add_parser("explore", help="Bounded exhaustive exploration.")
    p.add_argument("--program", required=True)
    _automaton_args(p)
    _budget_args(p)
    p.add_argument("--mode", choices=MODES, default=PRF)
    p.add_argument(
        "--relaxed",
        action="store_true",
        help="Relaxed unsafe assumptions: comparing an invalid pointer is a race "
        "only if its address was freed.",
    )
    _common(p)

    p = sub.add_parser("automaton", help="Inspect an SMR automaton.")
    p.add_argument(
        "action", choices=("show", "locations", "safeloc", "closure", "audit")
    )
    _automaton_args(p)
    p.add_argument(
        "--locations",
        nargs="*",
        default=(),
        help="Locations to close under interference (for `closure`).",
    )
    _common(p)
    return parser


def _budget(args) -> ExplorationBudget:
    kwargs = dict(
        threads=args.threads,
        addresses=args.addresses,
        data=args.data,
        steps=args.steps,
        rounds=args.rounds,
    )
    if args.gc:
        return ExplorationBudget.gc(**kwargs)
    return ExplorationBudget.liberal(**kwargs)


def _read_program(path: str):
    return parse_program(pathlib.Path(path).read_text())


def _automaton(args):
    return load_automaton(args.smr, with_base=not args.no_base)


def _emit(args, out, payload, text: str):
    if args.json:
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        out.write(text + "\n")


def _run_typecheck(args, out) -> int:
    prog = _read_program(args.program)
    o = _automaton(args)
    report = typecheck(prog, o)
    if report.ok or not args.repair:
        _emit(args, out, report.to_json(), report.format())
        return OK if report.ok else FAILED
    return _run_repair(args, out, prog=prog, o=o)


def _run_repair(args, out, prog=None, o=None) -> int:
    if prog is None:
        prog = _read_program(args.program)
    if o is None:
        o = _automaton(args)
    result = repair(prog, o, _budget(args), args.max_rounds, jobs=args.jobs)
    if args.json:
        for entry in result.log:
            out.write(json.dumps(entry, sort_keys=True) + "\n")
        out.write(
            json.dumps(
                {
                    "verdict": result.report.verdict,
                    "program": pretty_print(result.program),
                },
                sort_keys=True,
            )
            + "\n"
        )
    else:
        for entry in result.log:
            tactic = entry.get("tactic", "")
            out.write(f"round {entry['round']}: {tactic} {entry['result']}\n")
        for line in describe_insertions(prog, result.program):
            out.write(f"  added {line}\n")
        out.write(result.report.format() + "\n")
        if result.ok:
            out.write(pretty_print(result.program))
    return OK if result.ok else FAILED


def _run_instrument(args, out) -> int:
    prog = _read_program(args.program)
    instrumented = instrument(prog)
    text = pretty_print(instrumented)
    ratio = size_ratio(prog, instrumented)
    _emit(
        args,
        out,
        {"program": text, "size_ratio": [ratio.numerator, ratio.denominator]},
        text,
    )
    return OK


def _run_explore(args, out) -> int:
    prog = _read_program(args.program)
    o = _automaton(args)
    report = explore(
        prog, o, _budget(args), args.mode, relaxed=args.relaxed, jobs=args.jobs
    )
    _emit(args, out, report.to_json(), report.format())
    return OK if report.clean else FAILED


def _run_automaton(args, out) -> int:
    o = _automaton(args)
    if args.action == "show":
        lines = [f"automaton {o.name}"]
        lines.append("  vars " + ", ".join(f"{n}: {s}" for n, s in o.variables))
        lines.append("  events " + ", ".join(str(sig) for sig in o.events))
        for t in o.transitions:
            if t.source == t.target:
                continue
            event = f"{t.kind} {t.func}".strip()
            lines.append(f"  {t.source} -> {t.target} on {event} [{t.guard}]")
        payload = {
            "name": o.name,
            "locations": list(o.locations),
            "initial": o.initial,
            "accepting": list(o.accepting),
            "active": list(o.active),
            "transitions": [
                [t.source, t.target, t.kind, t.func, str(t.guard)]
                for t in o.transitions
                if t.source != t.target
            ],
        }
        _emit(args, out, payload, "\n".join(lines))
    elif args.action == "locations":
        marks = []
        for loc in o.locations:
            tags = [
                tag
                for tag, members in (
                    ("initial", (o.initial,)),
                    ("active", o.active),
                    ("accepting", o.accepting),
                )
                if loc in members
            ]
            marks.append((loc, tags))
        text = "\n".join(f"{loc} {' '.join(tags)}".rstrip() for loc, tags in marks)
        _emit(args, out, {loc: tags for loc, tags in marks}, text)
    elif args.action == "safeloc":
        safe = sorted(safe_locations(o))
        _emit(args, out, safe, "{" + ", ".join(safe) + "}")
    elif args.action == "closure":
        unknown = sorted(set(args.locations) - set(o.locations))
        if unknown:
            raise ConfigurationError(
                f"Unknown locations {', '.join(unknown)} of automaton {o.name}."
            )
        closed = sorted(interference_closure(o, args.locations))
        _emit(args, out, closed, "{" + ", ".join(closed) + "}")
    else:
        audits = verify_safe_call_table(o, SafeCallTable.from_automaton(o))
        payload = [
            {
                "func": a.func,
                "valid": list(a.valid),
                "status": a.status,
                "witness": a.witness,
            }
            for a in audits
        ]
        text = "\n".join(
            f"{a.func}{tuple(a.valid)}: {a.status}"
            + (f" at {a.witness}" if a.witness else "")
            for a in audits
        )
        _emit(args, out, payload, text)
        if any(a.status == "refuted" for a in audits):
            return FAILED
    return OK


_COMMANDS = {
    "typecheck": _run_typecheck,
    "repair": _run_repair,
    "instrument": _run_instrument,
    "explore": _run_explore,
    "automaton": _run_automaton,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE if e.code else OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        with contextlib.ExitStack() as stack:
            if args.out:
                out = stack.enter_context(open(args.out, "w"))
            else:
                out = sys.stdout
            return _COMMANDS[args.command](args, out)
    except (ParseError, AutomatonError, ConfigurationError, OSError) as e:
        print(f"smrtype: error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
