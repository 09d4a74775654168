import concurrent.futures
import hashlib
import logging
from typing import Dict, List, Optional, Tuple

from ..lang.ast import Program
from ..lang.printer import format_command
from ..module import Module, static_field
from ..rules import SafeCallTable
from ..smr.automaton import SmrAutomaton
from .config import ExplorationBudget
from .semantics import ENV, PRF, Configuration, Semantics


logger = logging.getLogger(__name__)

CLEAN = "clean"
VIOLATION = "violation"


class TraceStep(Module):
    thread: str = static_field()
    command: str = static_field()
    update: str = static_field()


class ExplorationReport(Module):
    """The outcome of [`smrtype.oracle.explore`][].

    `verdict` is `clean` or `violation`; `kind` names the violation (a pointer race
    kind, `invariant` or `assert`); `trace` is a shortest witness. `exhausted` is
    set when some computation was cut off by the step bound, so `clean` only holds
    within the budget.
    """

    verdict: str = static_field()
    mode: str = static_field()
    budget: ExplorationBudget
    states: int = static_field()
    steps: int = static_field()
    exhausted: bool = static_field()
    kind: Optional[str] = static_field(default=None)
    trace: Tuple[TraceStep, ...] = ()
    fingerprint: str = static_field(default="")

    @property
    def clean(self) -> bool:
        return self.verdict == CLEAN

    def to_json(self) -> Dict:
        return {
            "verdict": self.verdict,
            "mode": self.mode,
            "kind": self.kind,
            "trace": [[s.thread, s.command, s.update] for s in self.trace],
            "states": self.states,
            "steps": self.steps,
            "exhausted": self.exhausted,
            "budget": self.budget.to_json(),
            "fingerprint": self.fingerprint,
        }

    def format(self) -> str:
        if self.clean:
            suffix = " (step bound reached)" if self.exhausted else ""
            return (
                f"clean within budget: {self.states} states, {self.steps} steps"
                f"{suffix}"
            )
        lines = [f"{self.kind} after {len(self.trace)} steps:"]
        for s in self.trace:
            update = f"  [{s.update}]" if s.update else ""
            lines.append(f"  {s.thread}: {s.command}{update}")
        return "\n".join(lines)


def _label(move, update) -> TraceStep:
    if move.actor == ENV:
        return TraceStep(ENV, update, "")
    if move.command is None:
        return TraceStep(str(move.actor), "return", "")
    return TraceStep(str(move.actor), format_command(move.command), update)


def _expand(sem: Semantics, cfgs: List[Configuration]):
    out = []
    for cfg in cfgs:
        results = []
        for move in sem.moves(cfg):
            violation = sem.violation(cfg, move)
            if violation is not None:
                results.append((move, None, "", violation))
                break
            for succ, update in sem.step(cfg, move):
                results.append((move, succ, update, None))
        out.append(results)
    return out


def _chunks(items, n):
    size = max(1, -(-len(items) // n))
    return [items[i : i + size] for i in range(0, len(items), size)]


def fingerprint(states) -> str:
    """A digest of the program part of a set of configurations; independent of the
    order in which they were found."""
    digests = sorted(
        {
            hashlib.sha256(repr(cfg.program_part()).encode()).hexdigest()
            for cfg in states
        }
    )
    return hashlib.sha256("".join(digests).encode()).hexdigest()


def explore(
    prog: Program,
    o: SmrAutomaton,
    budget: ExplorationBudget,
    mode: str = PRF,
    *,
    relaxed: bool = False,
    table: Optional[SafeCallTable] = None,
    jobs: int = 1,
) -> ExplorationReport:
    """Breadth-first exploration of every interleaving of `budget.threads` threads,
    each invoking `budget.rounds` operations, up to `budget.steps` steps. The
    environment frees retired addresses of `budget.free` whenever no thread is
    inside an atomic block.

    **Arguments:**

    - `prog`: the program. A procedure named `init` runs first, alone.
    - `o`: the SMR automaton; histories it accepts are cut off.
    - `budget`: the exploration bounds.
    - `mode`: what counts as a violation: `prf` (pointer races), `invariants`
        (annotations that do not hold) or `asserts` (failing `assert`s).
    - `relaxed`: use relaxed unsafe assumptions in `prf` mode.
    - `table`: safe-call table; defaults to the automaton's.
    - `jobs`: number of worker threads expanding each frontier. The report does not
        depend on it.

    **Returns:**

    An `ExplorationReport`.
    """
    sem = Semantics(prog, o, budget, table, mode, relaxed)
    start = sem.initial()
    parents: Dict[Configuration, Tuple[Optional[Configuration], object]] = {
        start: (None, None)
    }
    frontier = [start]
    depth = 0
    exhausted = False
    violation = None
    pool = (
        concurrent.futures.ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    )
    try:
        while frontier:
            if depth == budget.steps:
                exhausted = any(sem.moves(cfg) for cfg in frontier)
                break
            if pool is None:
                expanded = _expand(sem, frontier)
            else:
                expanded = []
                for part in pool.map(
                    lambda chunk: _expand(sem, chunk), _chunks(frontier, jobs)
                ):
                    expanded.extend(part)
            next_frontier = []
            for cfg, results in zip(frontier, expanded):
                for move, succ, update, kind in results:
                    if kind is not None:
                        violation = (cfg, _label(move, update), kind)
                        break
                    if succ in parents:
                        continue
                    sem.check(succ)
                    parents[succ] = (cfg, _label(move, update))
                    next_frontier.append(succ)
                if violation is not None:
                    break
            if violation is not None:
                break
            frontier = next_frontier
            depth += 1
            logger.debug("depth %d: %d new configurations", depth, len(frontier))
    finally:
        if pool is not None:
            pool.shutdown()

    common = dict(
        mode=mode,
        budget=budget,
        states=len(parents),
        steps=depth,
        exhausted=exhausted,
        fingerprint=fingerprint(parents),
    )
    if violation is None:
        logger.info("exploration clean: %d states", len(parents))
        return ExplorationReport(verdict=CLEAN, **common)
    cfg, last, kind = violation
    trace = [last]
    while True:
        parent, label = parents[cfg]
        if parent is None:
            break
        trace.append(label)
        cfg = parent
    logger.info("exploration found %s after %d states", kind, len(parents))
    return ExplorationReport(
        verdict=VIOLATION, kind=kind, trace=tuple(reversed(trace)), **common
    )
