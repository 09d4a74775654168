"""Type rules for primitive commands.

`sp(lattice, env, command, table)` is the strongest type environment that a rule
derives from `env` for `command`, or `TOP` if the premise of the rule fails.
"""

import itertools as it
import logging
from typing import Dict, Optional, Sequence, Tuple

from .domain import A, L, TOP, TypeEnvironment, TypeLattice, is_top
from .errors import AutomatonError
from .lang.ast import (
    Assert,
    AssumeEq,
    AssumeFormula,
    AssumeNeq,
    AssumePred,
    BeginAtomic,
    Command,
    DataConst,
    DataLoad,
    DataOp,
    DataStore,
    EndAtomic,
    Enter,
    Exit,
    Havoc,
    InvActiveAngel,
    InvActivePtr,
    InvAngel,
    InvEq,
    InvMember,
    Malloc,
    PtrAssign,
    PtrLoad,
    PtrStore,
    Skip,
)
from .module import Module, static_field
from .smr.automaton import ADDRESS, ENTER, THREAD, SmrAutomaton
from .smr.nfa import (
    abstract_to_nfa,
    call_discipline,
    discipline_location,
    nfa_language_inclusion,
    reachable_states,
)


logger = logging.getLogger(__name__)

RETIRE = "retire"


class PremiseFailure(Exception):
    """The premise of a type rule does not hold. Caught by `sp`, which then returns
    `TOP`; `typecheck` reports it."""

    def __init__(self, rule: str, variable: str, reason: str):
        self.rule = rule
        self.variable = variable
        self.reason = reason
        super().__init__(f"{rule}: {reason}")


# Safe calls


class SafeCallTable(Module):
    """Which SMR calls may be made with invalid pointer arguments.

    `requirements` maps a function to the 0-based positions (over its pointer
    arguments) that must hold valid pointers. A call is safe iff every required
    position is valid; functions without requirements are always safe.
    """

    requirements: Tuple[Tuple[str, Tuple[int, ...]], ...] = ()

    @classmethod
    def from_automaton(cls, o: SmrAutomaton) -> "SafeCallTable":
        requirements = dict(o.safe_calls)
        if o.has_event(ENTER, RETIRE):
            requirements.setdefault(RETIRE, tuple(range(_arity(o, RETIRE))))
        return cls(tuple(sorted(requirements.items())))

    def required(self, func: str) -> Tuple[int, ...]:
        return dict(self.requirements).get(func, ())

    def is_safe(self, func: str, valid: Sequence[bool]) -> bool:
        return all(i < len(valid) and valid[i] for i in self.required(func))


def _arity(o: SmrAutomaton, func: str) -> int:
    return len(o.event(ENTER, func).pointer_params)


def safe_call(
    lattice: TypeLattice,
    env: TypeEnvironment,
    func: str,
    pointers: Sequence[str],
    table: SafeCallTable,
) -> bool:
    """Whether `enter func(pointers)` is safe given the validity of its arguments.

    **Raises:**

    `AutomatonError` if `func` is not in the automaton's alphabet or is called with
    the wrong number of pointers.
    """
    arity = _arity(lattice.automaton, func)
    if arity != len(pointers):
        raise AutomatonError(
            f"{func} takes {arity} pointer arguments, but {len(pointers)} are given."
        )
    valid = [lattice.is_valid(env[p]) for p in pointers]
    return table.is_safe(func, valid)


class SafeCallAudit(Module):
    func: str = static_field()
    valid: Tuple[bool, ...] = static_field()
    status: str = static_field()
    witness: Optional[str] = static_field(default=None)


def verify_safe_call_table(
    o: SmrAutomaton, table: SafeCallTable
) -> Tuple[SafeCallAudit, ...]:
    """Audits every entry of `table` that declares a call safe although some pointer
    argument may be invalid.

    An invalid argument may hold any address, including the tracked one. Calling with
    the tracked address must not allow more frees than calling with another address:
    for every reachable location and every abstract event, the forbidden
    continuations after the event with the argument *different* from the tracked
    address must be included in the forbidden continuations after the event with the
    argument *equal* to it. Only continuations in which the tracked thread makes one
    call at a time are considered.

    **Returns:**

    One `SafeCallAudit` per (function, validity pattern), with status `verified`,
    `refuted` (and a witness location) or `inconclusive` (the automaton has no
    address variable).
    """
    nfa = abstract_to_nfa(o)
    za = o.variable(ADDRESS)
    zt = o.variable(THREAD)
    if zt is None:
        location = str
    else:
        nfa = call_discipline(nfa, zt)
        location = discipline_location
    live = reachable_states(nfa)
    states = [q for q in nfa.states if q in live]
    cache: Dict = {}

    def included(sub, sup):
        key = (sub, sup)
        if key not in cache:
            cache[key] = nfa_language_inclusion(
                nfa.with_initial(sub), nfa.with_initial(sup)
            )
        return cache[key]

    out = []
    for sig in o.events:
        if sig.kind != ENTER or not sig.pointer_params:
            continue
        arity = len(sig.pointer_params)
        for valid in it.product((True, False), repeat=arity):
            if not table.is_safe(sig.func, valid):
                continue
            invalid = [i for i, v in enumerate(valid) if not v]
            if not invalid:
                out.append(SafeCallAudit(sig.func, valid, "verified"))
                continue
            if za is None:
                out.append(SafeCallAudit(sig.func, valid, "inconclusive"))
                continue
            positions = [
                j
                for j, p in enumerate(sig.params)
                if p in sig.pointer_params
                and sig.pointer_params.index(p) in invalid
            ]
            witness = None
            for event in nfa.alphabet:
                if event.key != sig.key or witness is not None:
                    continue
                for j in positions:
                    if event.values[j]:
                        continue
                    tracked = event.replace(j, frozenset([za]))
                    for state in states:
                        other = nfa.successors([state], event)
                        same = nfa.successors([state], tracked)
                        if not included(other, same):
                            witness = location(state)
                            break
                    if witness is not None:
                        break
            status = "verified" if witness is None else "refuted"
            out.append(SafeCallAudit(sig.func, valid, status, witness))
            logger.debug("audit %s %s: %s", sig.func, valid, status)
    return tuple(out)


# Strongest post


def _require_valid(lattice, env, rule, variable):
    if not lattice.is_valid(env[variable]):
        raise PremiseFailure(rule, variable, f"{variable} not valid")


def _require_local(env, rule, variable):
    if variable in env.shared:
        raise PremiseFailure(rule, variable, f"{variable} is shared")


def _is_pointer(env, name):
    return name in env.names


def rule_name(command: Command) -> str:
    """The name of the type rule that handles `command`."""
    return _RULE_NAMES.get(type(command), "ASSUME2")


_RULE_NAMES = {
    PtrAssign: "ASSIGN1",
    PtrLoad: "ASSIGN2",
    PtrStore: "ASSIGN3",
    DataStore: "ASSIGN4",
    DataLoad: "ASSIGN5",
    DataOp: "ASSIGN6",
    DataConst: "ASSIGN6",
    Malloc: "MALLOC",
    AssumeEq: "ASSUME1",
    InvEq: "EQUAL",
    InvActivePtr: "ACTIVE",
    InvActiveAngel: "ACTIVE",
    InvAngel: "ANGEL",
    InvMember: "MEMBER",
    Enter: "ENTER",
    Exit: "EXIT",
    Skip: "SKIP",
    BeginAtomic: "BEGIN",
    EndAtomic: "END",
    Havoc: "HAVOC",
    Assert: "ASSERT",
}


def _post(lattice, env, command, table) -> TypeEnvironment:
    rule = rule_name(command)
    if isinstance(command, PtrAssign):
        t = lattice.remove_flags(env[command.rhs], L)
        return env.update({command.lhs: t, command.rhs: t})
    if isinstance(command, PtrLoad):
        _require_valid(lattice, env, rule, command.rhs)
        return env.update({command.lhs: lattice.empty})
    if isinstance(command, PtrStore):
        _require_valid(lattice, env, rule, command.lhs)
        return env.update(
            {command.rhs: lattice.remove_flags(env[command.rhs], L)}
        )
    if isinstance(command, DataLoad):
        _require_valid(lattice, env, rule, command.rhs)
        return env
    if isinstance(command, DataStore):
        _require_valid(lattice, env, rule, command.lhs)
        return env
    if isinstance(command, Malloc):
        _require_local(env, rule, command.lhs)
        return env.update({command.lhs: lattice.make({L})})
    if isinstance(command, AssumeEq):
        if not (_is_pointer(env, command.lhs) and _is_pointer(env, command.rhs)):
            return env
        _require_valid(lattice, env, rule, command.lhs)
        _require_valid(lattice, env, rule, command.rhs)
        t = lattice.remove_flags(
            lattice.meet(env[command.lhs], env[command.rhs]), L
        )
        return env.update({command.lhs: t, command.rhs: t})
    if isinstance(command, InvEq):
        t = lattice.meet(env[command.lhs], env[command.rhs])
        return env.update({command.lhs: t, command.rhs: t})
    if isinstance(command, InvActivePtr):
        return env.update(
            {command.pointer: lattice.meet(env[command.pointer], lattice.make({A}))}
        )
    if isinstance(command, InvActiveAngel):
        return env.update(
            {command.angel: lattice.meet(env[command.angel], lattice.make({A}))}
        )
    if isinstance(command, InvAngel):
        _require_local(env, rule, command.angel)
        return env.update({command.angel: lattice.empty})
    if isinstance(command, InvMember):
        t = lattice.meet(env[command.pointer], env[command.angel])
        return env.update({command.pointer: t})
    if isinstance(command, Enter):
        if not safe_call(lattice, env, command.func, command.pointers, table):
            culprit = next(
                (p for p in command.pointers if not lattice.is_valid(env[p])), ""
            )
            raise PremiseFailure(
                rule, culprit, f"unsafe call {command.func}({culprit} not valid)"
            )
        if command.func == RETIRE:
            for p in command.pointers:
                if A not in env[p].flags:
                    raise PremiseFailure(rule, p, f"{p} not active")
        return _transform_all(lattice, env, command)
    if isinstance(command, Exit):
        return _transform_all(lattice, env, command)
    if isinstance(command, Havoc):
        return env.update({command.pointer: lattice.empty})
    if isinstance(
        command,
        (DataOp, DataConst, AssumeNeq, AssumePred, AssumeFormula, Assert, Skip),
    ):
        return env
    if isinstance(command, (BeginAtomic, EndAtomic)):
        return env
    raise ValueError(f"No type rule for {command}.")


def _transform_all(lattice, env, command):
    return env.with_types(
        lattice.transformer(t, name, env.role(name), command) for name, t in env.items()
    )


def sp_explain(
    lattice: TypeLattice, env, command: Command, table: SafeCallTable
) -> Tuple[object, Optional[PremiseFailure]]:
    """Like [`smrtype.sp`][], but also returns the failed premise when the result
    is `TOP` because of `command` (and `None` otherwise)."""
    if is_top(env):
        return TOP, None
    try:
        return _post(lattice, env, command, table), None
    except PremiseFailure as failure:
        return TOP, failure


def sp(lattice: TypeLattice, env, command: Command, table: SafeCallTable):
    """The strongest type environment obtained from `env` by executing `command`.

    **Arguments:**

    - `lattice`: the type lattice of the SMR automaton.
    - `env`: a `TypeEnvironment`, or `TOP`.
    - `command`: any primitive command. `beginAtomic`/`endAtomic` are the identity
        here; the removal of transient guarantees at the end of an atomic block is
        done by the constraint system.
    - `table`: the safe-call table.

    **Returns:**

    The new environment, or `TOP` if a premise of the rule for `command` fails.

    !!! example

        ```python
        lattice = TypeLattice(load_automaton("ebr"))
        env = initial_environment(lattice, ["p"], [])
        env = sp(lattice, env, Malloc("p"), SafeCallTable())
        assert env["p"].flags == {"L"}
        ```
    """
    return sp_explain(lattice, env, command, table)[0]
