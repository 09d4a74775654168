"""Executable operational semantics of programs running against an SMR automaton.

A configuration stores the concrete memory, the validity of pointer expressions,
the fresh/freed/retired address sets, the owner of the atomic lock and, for every
valuation of the automaton variables, the set of automaton locations reached by
the history so far. Histories are never stored: a successor whose history leaves
the specification of the automaton is discarded on the spot.

Values: addresses are `0, …, |Adr|-1` and `UNDEF` is the undefined pointer value;
data values are `0, …, |Dom|-1`.
"""

import functools as ft
import itertools as it
import logging
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Tuple

from ..lang.ast import (
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
    FlagTest,
    Formula,
    Havoc,
    InvActiveAngel,
    InvActivePtr,
    InvAngel,
    InvEq,
    InvMember,
    Malloc,
    Program,
    PtrAssign,
    PtrCompare,
    PtrLoad,
    PtrStore,
    Skip,
    dereferenced,
)
from ..errors import ConfigurationError
from ..lang.flow import control_flow
from ..rules import RETIRE, SafeCallTable
from ..smr.automaton import (
    ADDRESS,
    ENTER,
    EXIT,
    THREAD,
    Event,
    SmrAutomaton,
    free_event,
    step_locations,
)
from .config import ExplorationBudget


logger = logging.getLogger(__name__)

UNDEF = -1
IDLE = -1
ENV = "env"

# Pointer race verdicts.
NONE = "none"
UNSAFE_ACCESS = "unsafe-access"
UNSAFE_ASSUMPTION = "unsafe-assumption"
UNSAFE_RETIRE = "unsafe-retire"
UNSAFE_CALL = "unsafe-call"

PRF = "prf"
INVARIANTS = "invariants"
ASSERTS = "asserts"
MODES = (PRF, INVARIANTS, ASSERTS)


class Thread(NamedTuple):
    proc: int
    node: int
    rounds: int


class Configuration(NamedTuple):
    """A configuration. Pointer expressions are keyed `("s", i)` for shared
    variable `i`, `("l", t, i)` for local pointer `i` of thread `t` and `("h", a)`
    for the `next` selector of address `a`."""

    threads: Tuple[Thread, ...]
    booting: bool
    shared: Tuple[int, ...]
    shared_data: Tuple[int, ...]
    locals: Tuple[Tuple[int, ...], ...]
    local_data: Tuple[Tuple[int, ...], ...]
    heap_next: Tuple[int, ...]
    heap_data: Tuple[int, ...]
    valid: FrozenSet[tuple]
    fresh: FrozenSet[int]
    freed: FrozenSet[int]
    retired: FrozenSet[int]
    ever_freed: FrozenSet[int]
    lock: Optional[int]
    observers: Tuple[FrozenSet[str], ...]
    # per thread, per angel: None or (required members, active at every snapshot)
    ledger: Tuple[Tuple[Optional[Tuple[FrozenSet[int], FrozenSet[int]]], ...], ...]

    def program_part(self) -> tuple:
        """The configuration without the observer and angel bookkeeping."""
        return self[:14]


class Move(NamedTuple):
    actor: object
    command: Optional[Command]
    target: int
    proc: int
    path: str


class _Proc(NamedTuple):
    name: str
    entry: int
    exit: int
    moves: Tuple[Tuple[Tuple[Command, int, str], ...], ...]
    can_return: Tuple[bool, ...]


def _compile_proc(proc) -> _Proc:
    flow = control_flow(proc.body, exact_loops=True)
    silent: Dict[int, List[int]] = {}
    commands: Dict[int, List[Tuple[Command, int, str]]] = {}
    for e in flow.edges:
        if e.command is None or isinstance(e.command, Skip):
            silent.setdefault(e.source, []).append(e.target)
        else:
            commands.setdefault(e.source, []).append((e.command, e.target, e.path))
    moves = []
    can_return = []
    for node in range(flow.size):
        closure = {node}
        stack = [node]
        while stack:
            for nxt in silent.get(stack.pop(), ()):
                if nxt not in closure:
                    closure.add(nxt)
                    stack.append(nxt)
        moves.append(
            tuple(m for n in sorted(closure) for m in commands.get(n, ()))
        )
        can_return.append(flow.exit in closure)
    return _Proc(proc.name, flow.entry, flow.exit, tuple(moves), tuple(can_return))


class Semantics:
    """A program compiled for exploration against one automaton and budget."""

    def __init__(
        self,
        prog: Program,
        o: SmrAutomaton,
        budget: ExplorationBudget,
        table: Optional[SafeCallTable] = None,
        mode: str = PRF,
        relaxed: bool = False,
    ):
        if mode not in MODES:
            raise ConfigurationError(
                f"Unknown mode {mode}; choose one of {', '.join(MODES)}."
            )
        self.prog = prog
        self.o = o
        self.budget = budget
        self.table = SafeCallTable.from_automaton(o) if table is None else table
        self.mode = mode
        self.relaxed = relaxed
        self.procs = tuple(_compile_proc(p) for p in prog.procedures)
        self.init = next(
            (i for i, p in enumerate(prog.procedures) if p.name == "init"), None
        )
        self.operations = tuple(
            i for i, p in enumerate(prog.procedures) if p.name != "init"
        )
        self.shared_index = {name: i for i, name in enumerate(prog.shared)}
        self.shared_data_index = {name: i for i, name in enumerate(prog.shared_data)}
        local_names = sorted(
            {n for p in prog.procedures for n in p.pointers + p.angels}
        )
        data_names = sorted({n for p in prog.procedures for n in p.data})
        self.local_index = {name: i for i, name in enumerate(local_names)}
        self.data_index = {name: i for i, name in enumerate(data_names)}
        angel_names = sorted({n for p in prog.procedures for n in p.angels})
        self.angel_index = {name: i for i, name in enumerate(angel_names)}
        self.addresses = frozenset(range(budget.addresses))
        self.free_pool = frozenset(budget.free)
        self.reuse_pool = frozenset(budget.reuse)
        domains = []
        for name, sort in o.variables:
            if sort == THREAD:
                domains.append([(name, t) for t in range(budget.threads)])
            elif sort == ADDRESS:
                domains.append([(name, a) for a in range(budget.addresses)])
            else:
                domains.append([(name, d) for d in range(budget.data)])
        self.valuations = tuple(dict(v) for v in it.product(*domains))

    # Configurations

    def initial(self) -> Configuration:
        b = self.budget
        threads = tuple(Thread(IDLE, 0, b.rounds) for _ in range(b.threads))
        booting = self.init is not None and bool(
            self.procs[self.init].moves[self.procs[self.init].entry]
        )
        if booting:
            threads = (Thread(self.init, self.procs[self.init].entry, b.rounds),) + (
                threads[1:]
            )
        return Configuration(
            threads=threads,
            booting=booting,
            shared=(UNDEF,) * len(self.shared_index),
            shared_data=(0,) * len(self.shared_data_index),
            locals=((UNDEF,) * len(self.local_index),) * b.threads,
            local_data=((0,) * len(self.data_index),) * b.threads,
            heap_next=(UNDEF,) * b.addresses,
            heap_data=(0,) * b.addresses,
            valid=frozenset(),
            fresh=self.addresses,
            freed=frozenset(),
            retired=frozenset(),
            ever_freed=frozenset(),
            lock=None,
            observers=(frozenset([self.o.initial]),) * len(self.valuations),
            ledger=((None,) * len(self.angel_index),) * b.threads,
        )

    def key(self, t: int, name: str) -> tuple:
        if name in self.shared_index:
            return ("s", self.shared_index[name])
        return ("l", t, self.local_index[name])

    def value(self, cfg: Configuration, t: int, name: str) -> int:
        if name in self.shared_index:
            return cfg.shared[self.shared_index[name]]
        if name in self.local_index:
            return cfg.locals[t][self.local_index[name]]
        if name in self.shared_data_index:
            return cfg.shared_data[self.shared_data_index[name]]
        return cfg.local_data[t][self.data_index[name]]

    def is_valid(self, cfg: Configuration, t: int, name: str) -> bool:
        return self.key(t, name) in cfg.valid

    def active(self, cfg: Configuration) -> FrozenSet[int]:
        return self.addresses - cfg.freed - cfg.retired

    # Moves

    def moves(self, cfg: Configuration) -> List[Move]:
        """Every move enabled in `cfg`: thread commands, returns (`command=None`) and
        environment frees (`actor == ENV`, `target` the address)."""
        out = []
        for t, th in enumerate(cfg.threads):
            if cfg.booting and t != 0:
                continue
            if cfg.lock is not None and cfg.lock != t:
                continue
            if th.proc == IDLE:
                if th.rounds == 0:
                    continue
                for p in self.operations:
                    proc = self.procs[p]
                    for command, target, path in proc.moves[proc.entry]:
                        if self._lock_ok(cfg, command):
                            out.append(Move(t, command, target, p, path))
                continue
            proc = self.procs[th.proc]
            for command, target, path in proc.moves[th.node]:
                if self._lock_ok(cfg, command):
                    out.append(Move(t, command, target, th.proc, path))
            if proc.can_return[th.node] and proc.moves[th.node]:
                out.append(Move(t, None, proc.exit, th.proc, ""))
        if cfg.lock is None and not cfg.booting:
            for a in sorted(self.free_pool - cfg.fresh - cfg.freed):
                out.append(Move(ENV, None, a, IDLE, ""))
        return out

    def _lock_ok(self, cfg, command) -> bool:
        if isinstance(command, BeginAtomic) and not cfg.booting:
            return cfg.lock is None
        return True

    # Checks

    def detect_pointer_race(self, cfg: Configuration, t: int, command: Command) -> str:
        """Classifies `command`, about to be executed by thread `t`, as a pointer
        race or `none`. Comparing with the undefined pointer is never a race. In
        relaxed mode an equality assumption is only a race if an invalid side holds
        an address that has been freed before."""
        ptr = dereferenced(command)
        if ptr is not None and not self.is_valid(cfg, t, ptr):
            return UNSAFE_ACCESS
        if isinstance(command, AssumeEq):
            invalid = [
                n
                for n in (command.lhs, command.rhs)
                if not self.is_valid(cfg, t, n) and self.value(cfg, t, n) != UNDEF
            ]
            if invalid:
                if not self.relaxed:
                    return UNSAFE_ASSUMPTION
                if any(self.value(cfg, t, n) in cfg.ever_freed for n in invalid):
                    return UNSAFE_ASSUMPTION
        if isinstance(command, Enter):
            valid = [self.is_valid(cfg, t, p) for p in command.pointers]
            if command.func == RETIRE and not all(valid):
                return UNSAFE_RETIRE
            if not self.table.is_safe(command.func, valid):
                return UNSAFE_CALL
        return NONE

    def eval_invariant(self, cfg: Configuration, t: int, command: Command) -> bool:
        """Whether the annotation `command` holds in `cfg`, taking the angel ledger
        into account. Undefined pointers count as active and are never members."""
        active = self.active(cfg)
        if isinstance(command, InvEq):
            return self.value(cfg, t, command.lhs) == self.value(cfg, t, command.rhs)
        if isinstance(command, InvActivePtr):
            v = self.value(cfg, t, command.pointer)
            return v == UNDEF or v in active
        if isinstance(command, (InvMember, InvActiveAngel)):
            entry = cfg.ledger[t][self.angel_index[command.angel]]
            members, snapshot = _ledger_step(
                entry, self._member(cfg, t, command), active, command
            )
            return members <= snapshot
        return True

    def _member(self, cfg, t, command):
        if isinstance(command, InvMember):
            v = self.value(cfg, t, command.pointer)
            return frozenset() if v == UNDEF else frozenset([v])
        return frozenset()

    def eval_formula(self, cfg: Configuration, t: int, formula: Formula) -> bool:
        results = []
        for atom in formula.atoms:
            if isinstance(atom, PtrCompare):
                same = self.value(cfg, t, atom.lhs) == self.value(cfg, t, atom.rhs)
                results.append(same == atom.equal)
            elif isinstance(atom, FlagTest):
                results.append((self.value(cfg, t, atom.var) != 0) != atom.negated)
            else:
                raise ValueError(f"Unknown formula atom {atom}.")
        return all(results) if formula.op == "and" else any(results)

    def violation(self, cfg: Configuration, move: Move) -> Optional[str]:
        """The violation `move` commits in the current mode, if any."""
        if move.actor == ENV or move.command is None:
            return None
        command = move.command
        if self.mode == PRF:
            race = self.detect_pointer_race(cfg, move.actor, command)
            return None if race == NONE else race
        if self.mode == INVARIANTS:
            if not self.eval_invariant(cfg, move.actor, command):
                return "invariant"
            return None
        if isinstance(command, Assert):
            if not self.eval_formula(cfg, move.actor, command.formula):
                return "assert"
        return None

    # Successors

    def step(self, cfg: Configuration, move: Move) -> List[Tuple[Configuration, str]]:
        """The successors of `cfg` under `move`, each with a short description of
        the update. An empty list means the move is blocked."""
        if move.actor == ENV:
            return self._free(cfg, move.target)
        t = move.actor
        th = cfg.threads[t]
        if th.proc == IDLE:
            cfg = self._invoke(cfg, t, move.proc)
        if move.command is None:
            return [(self._finish(cfg, t), "return")]
        out = []
        for succ, update in self._execute(cfg, t, move.command):
            threads = list(succ.threads)
            threads[t] = Thread(move.proc, move.target, threads[t].rounds)
            succ = succ._replace(threads=tuple(threads))
            proc = self.procs[move.proc]
            if proc.can_return[move.target] and not proc.moves[move.target]:
                succ = self._finish(succ, t)
            out.append((succ, update))
        return out

    def _invoke(self, cfg, t, p):
        locals_ = list(cfg.locals)
        locals_[t] = (UNDEF,) * len(self.local_index)
        data = list(cfg.local_data)
        data[t] = (0,) * len(self.data_index)
        ledger = list(cfg.ledger)
        ledger[t] = (None,) * len(self.angel_index)
        valid = frozenset(k for k in cfg.valid if not (k[0] == "l" and k[1] == t))
        return cfg._replace(
            locals=tuple(locals_),
            local_data=tuple(data),
            ledger=tuple(ledger),
            valid=valid,
        )

    def _finish(self, cfg, t):
        th = cfg.threads[t]
        threads = list(cfg.threads)
        booting = cfg.booting
        if booting and th.proc == self.init:
            threads[t] = Thread(IDLE, 0, th.rounds)
            booting = False
        else:
            threads[t] = Thread(IDLE, 0, th.rounds - 1)
        lock = None if cfg.lock == t else cfg.lock
        return cfg._replace(threads=tuple(threads), booting=booting, lock=lock)

    def _set(self, cfg, t, name, value, valid):
        key = self.key(t, name)
        if key[0] == "s":
            shared = list(cfg.shared)
            shared[key[1]] = value
            cfg = cfg._replace(shared=tuple(shared))
        else:
            locals_ = list(cfg.locals)
            row = list(locals_[t])
            row[key[2]] = value
            locals_[t] = tuple(row)
            cfg = cfg._replace(locals=tuple(locals_))
        return self._mark(cfg, key, valid)

    def _mark(self, cfg, key, valid):
        if valid:
            return cfg._replace(valid=cfg.valid | {key})
        return cfg._replace(valid=cfg.valid - {key})

    def _set_data(self, cfg, t, name, value):
        if name in self.shared_data_index:
            data = list(cfg.shared_data)
            data[self.shared_data_index[name]] = value
            return cfg._replace(shared_data=tuple(data))
        rows = list(cfg.local_data)
        row = list(rows[t])
        row[self.data_index[name]] = value
        rows[t] = tuple(row)
        return cfg._replace(local_data=tuple(rows))

    def _observe(self, cfg, event: Event) -> Optional[Configuration]:
        observers = []
        for valuation, locations in zip(self.valuations, cfg.observers):
            nxt = step_locations(self.o, valuation, locations, event)
            if any(l in self.o.accepting for l in nxt):
                return None
            observers.append(nxt)
        return cfg._replace(observers=tuple(observers))

    def _free(self, cfg, a):
        cfg = self._observe(cfg, free_event(a))
        if cfg is None:
            return []
        valid = frozenset(k for k in cfg.valid if not self._holds(cfg, k, a))
        cfg = cfg._replace(
            valid=valid - {("h", a)},
            retired=cfg.retired - {a},
            freed=cfg.freed | {a},
            ever_freed=cfg.ever_freed | {a},
        )
        return [(cfg, f"free({a})")]

    def _holds(self, cfg, key, a) -> bool:
        if key[0] == "s":
            return cfg.shared[key[1]] == a
        if key[0] == "l":
            return cfg.locals[key[1]][key[2]] == a
        return cfg.heap_next[key[1]] == a

    def _execute(self, cfg, t, command) -> List[Tuple[Configuration, str]]:
        v = ft.partial(self.value, cfg, t)
        if isinstance(command, PtrAssign):
            value = v(command.rhs)
            valid = self.is_valid(cfg, t, command.rhs)
            succ = self._set(cfg, t, command.lhs, value, valid)
            return [(succ, f"{command.lhs}={value}")]
        if isinstance(command, PtrLoad):
            a = v(command.rhs)
            if a == UNDEF:
                return []
            value = cfg.heap_next[a]
            valid = self.is_valid(cfg, t, command.rhs) and ("h", a) in cfg.valid
            succ = self._set(cfg, t, command.lhs, value, valid)
            return [(succ, f"{command.lhs}={value}")]
        if isinstance(command, PtrStore):
            a = v(command.lhs)
            if a == UNDEF:
                return []
            heap = list(cfg.heap_next)
            heap[a] = v(command.rhs)
            succ = cfg._replace(heap_next=tuple(heap))
            valid = self.is_valid(cfg, t, command.rhs) and a not in cfg.freed
            succ = self._mark(succ, ("h", a), valid)
            return [(succ, f"{a}.next={heap[a]}")]
        if isinstance(command, DataLoad):
            a = v(command.rhs)
            if a == UNDEF:
                return []
            value = cfg.heap_data[a]
            succ = self._set_data(cfg, t, command.lhs, value)
            return [(succ, f"{command.lhs}={value}")]
        if isinstance(command, DataStore):
            a = v(command.lhs)
            if a == UNDEF:
                return []
            heap = list(cfg.heap_data)
            heap[a] = v(command.rhs)
            return [(cfg._replace(heap_data=tuple(heap)), f"{a}.data={heap[a]}")]
        if isinstance(command, DataOp):
            if command.op == "id" and len(command.args) == 1:
                values = [v(command.args[0])]
            else:
                values = range(self.budget.data)
            return [
                (self._set_data(cfg, t, command.lhs, x), f"{command.lhs}={x}")
                for x in values
            ]
        if isinstance(command, DataConst):
            x = int(command.value)
            return [(self._set_data(cfg, t, command.lhs, x), f"{command.lhs}={x}")]
        if isinstance(command, Malloc):
            out = []
            candidates = cfg.fresh | ((cfg.freed & self.reuse_pool) - cfg.retired)
            for a in sorted(candidates):
                succ = cfg._replace(fresh=cfg.fresh - {a}, freed=cfg.freed - {a})
                heap = list(succ.heap_next)
                heap[a] = UNDEF
                data = list(succ.heap_data)
                data[a] = 0
                succ = succ._replace(heap_next=tuple(heap), heap_data=tuple(data))
                succ = self._mark(succ, ("h", a), False)
                succ = self._set(succ, t, command.lhs, a, True)
                out.append((succ, f"{command.lhs}={a}"))
            return out
        if isinstance(command, AssumeEq):
            if v(command.lhs) != v(command.rhs):
                return []
            if self.is_valid(cfg, t, command.lhs) or self.is_valid(cfg, t, command.rhs):
                for name in (command.lhs, command.rhs):
                    cfg = self._mark(cfg, self.key(t, name), True)
            return [(cfg, "")]
        if isinstance(command, AssumeNeq):
            return [(cfg, "")] if v(command.lhs) != v(command.rhs) else []
        if isinstance(command, AssumeFormula):
            return [(cfg, "")] if self.eval_formula(cfg, t, command.formula) else []
        if isinstance(command, AssumePred):
            return [(cfg, "")]
        if isinstance(command, Assert):
            return [(cfg, "")]
        if isinstance(command, Havoc):
            return [
                (self._set(cfg, t, command.pointer, x, False), f"{command.pointer}={x}")
                for x in (UNDEF,) + tuple(range(self.budget.addresses))
            ]
        if isinstance(command, BeginAtomic):
            return [(cfg if cfg.booting else cfg._replace(lock=t), "")]
        if isinstance(command, EndAtomic):
            return [(cfg._replace(lock=None) if cfg.lock == t else cfg, "")]
        if isinstance(command, Enter):
            values = tuple(v(p) for p in command.pointers) + tuple(
                v(d) for d in command.data
            )
            succ = self._observe(cfg, Event(ENTER, command.func, t, values))
            if succ is None:
                return []
            if command.func == RETIRE:
                retired = {x for x in values[: len(command.pointers)] if x != UNDEF}
                succ = succ._replace(retired=succ.retired | retired)
            return [(succ, "")]
        if isinstance(command, Exit):
            succ = self._observe(cfg, Event(EXIT, command.func, t))
            return [] if succ is None else [(succ, "")]
        if isinstance(command, InvAngel):
            return [(self._set_ledger(cfg, t, command.angel, None, reset=True), "")]
        if isinstance(command, (InvMember, InvActiveAngel)):
            entry = cfg.ledger[t][self.angel_index[command.angel]]
            entry = _ledger_step(
                entry, self._member(cfg, t, command), self.active(cfg), command
            )
            return [(self._set_ledger(cfg, t, command.angel, entry), "")]
        if isinstance(command, (InvEq, InvActivePtr, Skip)):
            return [(cfg, "")]
        raise ValueError(f"Cannot execute {command}.")

    def _set_ledger(self, cfg, t, angel, entry, reset=False):
        if reset:
            entry = (frozenset(), self.addresses)
        rows = list(cfg.ledger)
        row = list(rows[t])
        row[self.angel_index[angel]] = entry
        rows[t] = tuple(row)
        return cfg._replace(ledger=tuple(rows))

    def check(self, cfg: Configuration):
        """Internal consistency of a reachable configuration."""
        assert not cfg.fresh & cfg.retired, "fresh and retired addresses overlap"
        for key in cfg.valid:
            assert not any(
                self._holds(cfg, key, a) for a in cfg.freed
            ), f"{key} is valid but holds a freed address"
            if key[0] == "h":
                assert key[1] not in cfg.freed, "selector of a freed address is valid"


def _ledger_step(entry, members, active, command):
    required, snapshot = entry
    required = required | members
    if isinstance(command, InvActiveAngel):
        snapshot = snapshot & active
    return required, snapshot
