"""Guess-and-check repair of failed type inferences.

A tactic proposes invariant annotations for the first failure reported by
[`smrtype.typecheck`][]. A proposal is kept only if type inference gets past the
failure and the instrumented program passes the oracle under garbage collection,
so every annotation that survives holds within the exploration budget.
"""

import logging
from typing import Dict, Iterator, Optional, Sequence, Tuple

from .custom_types import ProgramPoint
from .inference import Failure, TypeReport, typecheck
from .instrument import instrument
from .lang.ast import (
    AssumeEq,
    BeginAtomic,
    Choice,
    Com,
    Command,
    EndAtomic,
    Enter,
    Exit,
    InvActiveAngel,
    InvActivePtr,
    InvAngel,
    InvMember,
    Procedure,
    Program,
    Seq,
    Stmt,
    atomic,
    is_annotation,
    seq,
)
from .lang.printer import format_command
from .lang.transform import (
    children,
    erase_annotations,
    iter_commands,
    locate,
    real_commands,
)
from .module import Module, static_field
from .oracle import ASSERTS, ExplorationBudget, explore
from .tree import tree_at, tree_equal


logger = logging.getLogger(__name__)


# Program surgery


def _split_point(point: ProgramPoint) -> Tuple[str, str]:
    name, _, path = point.partition(":")
    return name, path


def _atomic_commands(stmt: Stmt, inside: bool, out: set) -> bool:
    if isinstance(stmt, Com):
        if isinstance(stmt.command, BeginAtomic):
            return True
        if isinstance(stmt.command, EndAtomic):
            return False
        if inside:
            out.add(id(stmt))
        return inside
    if isinstance(stmt, Seq):
        middle = _atomic_commands(stmt.first, inside, out)
        return _atomic_commands(stmt.second, middle, out)
    if isinstance(stmt, Choice):
        _atomic_commands(stmt.right, inside, out)
        return _atomic_commands(stmt.left, inside, out)
    _atomic_commands(stmt.body, inside, out)
    return inside


def inside_atomic(body: Stmt, com: Com) -> bool:
    """Whether the command node `com` of `body` sits inside an atomic block."""
    out: set = set()
    _atomic_commands(body, False, out)
    return id(com) in out


def _insert(body: Stmt, com: Com, annotations: Sequence[Command], after: bool) -> Stmt:
    """Places `annotations` right before (or after) `com`, in the same atomic block;
    a command outside of atomic blocks gets a block of its own."""
    extra = [Com(a) for a in annotations]
    new = seq(com, *extra) if after else seq(*extra, com)
    if not inside_atomic(body, com):
        new = atomic(new)
    return tree_at(lambda b: com, body, replace=new)


def _replace_body(prog: Program, proc: Procedure, body: Stmt, angels=None) -> Program:
    new = Procedure(
        proc.name,
        proc.pointers,
        proc.data,
        proc.angels if angels is None else angels,
        body,
    )
    procedures = tuple(new if p.name == proc.name else p for p in prog.procedures)
    return Program(prog.struct, prog.shared, procedures, prog.shared_data)


def _failing_command(prog: Program, failure: Failure):
    name, path = _split_point(failure.point)
    if path == "exit":
        return None, None
    proc = prog.procedure(name)
    com = locate(proc.body, path)
    return proc, com


def _before(body: Stmt, com: Com) -> Tuple[Com, ...]:
    """Real commands preceding `com` in program order."""
    out = []
    for _, c in real_commands(body):
        if c is com:
            return tuple(out)
        out.append(c)
    raise ValueError("Command is not part of the procedure body.")


def _fresh(prog: Program, proc: Procedure, base: str = "r") -> str:
    taken = set(prog.shared) | set(prog.shared_data)
    taken |= set(proc.pointers) | set(proc.data) | set(proc.angels)
    if base not in taken:
        return base
    i = 1
    while f"{base}{i}" in taken:
        i += 1
    return f"{base}{i}"


# Tactics


class Tactic(Module):
    """Proposes an annotated program for a failed type inference.

    `propose` returns `None` when the tactic does not apply to the failure. Tactics
    only insert annotations and angel declarations: erasing annotations from the
    proposal gives back the input program.
    """

    name: str = static_field()

    def propose(self, prog: Program, failure: Failure) -> Optional[Program]:
        raise NotImplementedError


class ActiveBeforeFailure(Tactic):
    """`@inv active(x)` right before the command that needs `x`."""

    name: str = static_field(default="active-before-failure")

    def propose(self, prog, failure):
        proc, com = _failing_command(prog, failure)
        if proc is None or not failure.variable or failure.variable in proc.angels:
            return None
        body = _insert(proc.body, com, [InvActivePtr(failure.variable)], after=False)
        return _replace_body(prog, proc, body)


class ActiveAfterRecheck(Tactic):
    """`@inv active(x)` right after the last comparison of `x` that follows an SMR
    call taking `x`: the point where a protection is confirmed by re-reading a
    shared pointer."""

    name: str = static_field(default="active-after-recheck")

    def propose(self, prog, failure):
        proc, com = _failing_command(prog, failure)
        x = failure.variable
        if proc is None or not x or x in proc.angels:
            return None
        protected = False
        recheck = None
        for c in _before(proc.body, com):
            command = c.command
            if isinstance(command, Enter) and x in command.pointers:
                protected, recheck = True, None
            elif (
                protected
                and isinstance(command, AssumeEq)
                and x in (command.lhs, command.rhs)
            ):
                recheck = c
        if recheck is None:
            return None
        body = _insert(proc.body, recheck, [InvActivePtr(x)], after=True)
        return _replace_body(prog, proc, body)


class AngelTemplate(Tactic):
    """Captures everything an SMR call protects in an angel.

    The syntactically most recent `enter func(); exit func;` before the failure
    becomes

        @inv angel r;
        atomic { enter func(); exit func; @inv active(r); }

    and `@inv x in r` is placed before the failing command. An angel introduced
    this way earlier is reused.
    """

    name: str = static_field(default="angel-template")
    func: str = static_field(default="leaveQ")

    def _call(self, proc: Procedure, com: Com):
        before = _before(proc.body, com)
        enter_index = None
        for i, c in enumerate(before):
            if isinstance(c.command, Enter) and c.command.func == self.func:
                enter_index = i
        if enter_index is None:
            return None
        rest = [
            c for c in before[enter_index + 1 :] if not isinstance(c.command, InvAngel)
        ]
        if not rest or not (
            isinstance(rest[0].command, Exit) and rest[0].command.func == self.func
        ):
            return None
        angel = None
        if len(rest) > 1 and isinstance(rest[1].command, InvActiveAngel):
            angel = rest[1].command.angel
        return before[enter_index], rest[0], angel

    def propose(self, prog, failure):
        proc, com = _failing_command(prog, failure)
        x = failure.variable
        if proc is None or not x or x in prog.shared or x in proc.angels:
            return None
        call = self._call(proc, com)
        if call is None:
            return None
        enter, exit_, angel = call
        body = proc.body
        angels = proc.angels
        if angel is None:
            angel = _fresh(prog, proc)
            angels = angels + (angel,)
            body = self._wrap(body, enter, exit_, angel)
            if body is None:
                return None
        body = _insert(body, com, [InvMember(x, angel)], after=False)
        return _replace_body(prog, proc, body, angels)

    @staticmethod
    def _wrap(body: Stmt, enter: Com, exit_: Com, angel: str) -> Optional[Stmt]:
        if inside_atomic(body, enter):
            if not inside_atomic(body, exit_):
                return None
            body = tree_at(
                lambda b: enter, body, replace=seq(Com(InvAngel(angel)), enter)
            )
            return tree_at(
                lambda b: exit_, body, replace=seq(exit_, Com(InvActiveAngel(angel)))
            )
        # `enter; exit; rest` or `enter; exit` in one sequence
        for node in _subtrees(body):
            if not (isinstance(node, Seq) and node.first is enter):
                continue
            if node.second is exit_:
                rest = None
            elif isinstance(node.second, Seq) and node.second.first is exit_:
                rest = node.second.second
            else:
                return None
            block = seq(
                Com(InvAngel(angel)),
                atomic(seq(enter, exit_, Com(InvActiveAngel(angel)))),
            )
            new = block if rest is None else Seq(block, rest)
            return tree_at(lambda b: node, body, replace=new)
        return None


def _subtrees(stmt: Stmt) -> Iterator[Stmt]:
    yield stmt
    for child in children(stmt):
        yield from _subtrees(child)


_TACTICS: Dict[str, Tuple[Tactic, ...]] = {
    "EBR": (ActiveBeforeFailure(), AngelTemplate()),
    "HP2": (ActiveBeforeFailure(), ActiveAfterRecheck()),
}
_DEFAULT = (ActiveBeforeFailure(),)


def tactics_for(automaton_name: str) -> Tuple[Tactic, ...]:
    """The tactics tried for an automaton, in order. Products are split into their
    components; each component contributes its own tactics."""
    out = []
    for component in automaton_name.split("*"):
        for tactic in _TACTICS.get(component, ()):
            if tactic not in out:
                out.append(tactic)
    return tuple(out) or _DEFAULT


# Repair loop


class RepairResult(Module):
    """The outcome of [`smrtype.repair`][].

    `program` is the last accepted program (the input if nothing was accepted),
    `report` its type report, and `log` one dict per tactic tried.
    """

    program: Program
    report: TypeReport
    log: Tuple[Dict, ...] = ()

    @property
    def ok(self) -> bool:
        return self.report.ok


def _anchor(prog: Program, failure: Failure):
    """Locates a failure by executable commands only, so that annotations inserted
    elsewhere do not move it."""
    proc, com = _failing_command(prog, failure)
    if proc is None:
        return failure.point, failure.variable
    k = sum(1 for c in _before(proc.body, com) if not is_annotation(c.command))
    return proc.name, k, failure.variable, failure.rule


def _annotations(prog: Program):
    return sum(
        1
        for proc in prog.procedures
        for _, c in iter_commands(proc.body)
        if is_annotation(c.command)
    )


def repair(
    prog: Program,
    o,
    budget: Optional[ExplorationBudget] = None,
    max_rounds: int = 8,
    *,
    jobs: int = 1,
) -> RepairResult:
    """Tries to make `prog` typecheck by adding invariant annotations.

    Each round takes the first failure of type inference and tries the tactics of
    the automaton in order. A proposal is accepted if type inference fails later
    (or not at all) and the instrumented proposal has no failing assertion in a
    bounded exploration under garbage collection.

    **Arguments:**

    - `prog`: the program.
    - `o`: the SMR automaton.
    - `budget`: exploration bounds used to check proposals; frees are ignored.
        Defaults to `ExplorationBudget()`.
    - `max_rounds`: give up after this many accepted proposals.
    - `jobs`: worker threads for the explorations.

    **Returns:**

    A `RepairResult`. Repair never raises on analysis failure; the log says which
    tactics were tried and why they were rejected.
    """
    if budget is None:
        budget = ExplorationBudget()
    gc = ExplorationBudget.gc(
        threads=budget.threads,
        addresses=budget.addresses,
        data=budget.data,
        steps=budget.steps,
        rounds=budget.rounds,
    )
    tactics = tactics_for(o.name)
    erased = erase_annotations(prog)
    log = []
    report = typecheck(prog, o)
    rounds = 0
    while not report.ok and rounds < max_rounds:
        rounds += 1
        failure = report.failure
        anchor = _anchor(prog, failure)
        accepted = None
        for tactic in tactics:
            entry = {"round": rounds, "failure": str(failure), "tactic": tactic.name}
            candidate = tactic.propose(prog, failure)
            if candidate is None:
                log.append({**entry, "result": "not applicable"})
                continue
            assert tree_equal(erase_annotations(candidate), erased)
            new_report = typecheck(candidate, o)
            if not new_report.ok and _anchor(candidate, new_report.failure) == anchor:
                log.append({**entry, "result": "no progress"})
                continue
            exploration = explore(instrument(candidate), o, gc, ASSERTS, jobs=jobs)
            if not exploration.clean:
                log.append(
                    {
                        **entry,
                        "result": "refuted",
                        "trace": [[s.thread, s.command] for s in exploration.trace],
                    }
                )
                continue
            log.append(
                {
                    **entry,
                    "result": "accepted",
                    "states": exploration.states,
                    "exhausted": exploration.exhausted,
                }
            )
            logger.debug("round %d: %s accepted", rounds, tactic.name)
            accepted = (candidate, new_report)
            break
        if accepted is None:
            log.append({"round": rounds, "failure": str(failure), "result": "give up"})
            break
        prog, report = accepted
    logger.info(
        "repair %s after %d rounds, %d annotations",
        "succeeded" if report.ok else "failed",
        rounds,
        _annotations(prog),
    )
    return RepairResult(prog, report, tuple(log))


def describe_insertions(before: Program, after: Program) -> Tuple[str, ...]:
    """The annotations of `after` that `before` lacks, printed."""
    old = [
        format_command(c.command)
        for proc in before.procedures
        for _, c in iter_commands(proc.body)
        if is_annotation(c.command)
    ]
    out = []
    for proc in after.procedures:
        for _, c in iter_commands(proc.body):
            if not is_annotation(c.command):
                continue
            text = format_command(c.command)
            if text in old:
                old.remove(text)
            else:
                out.append(f"{proc.name}: {text}")
    return tuple(out)
