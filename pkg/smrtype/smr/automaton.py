import functools as ft
import logging
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from ..errors import AutomatonError
from ..lang.ast import Command, Enter, Exit
from ..module import Module, static_field
from .guards import Guard, Literal, complement


logger = logging.getLogger(__name__)

ENTER = "enter"
EXIT = "exit"
FREE = "free"

THREAD = "thread"
ADDRESS = "address"
DATA = "data"

SINK = "(LF)"


class EventSig(Module):
    """An entry of the event alphabet. For `enter`/`exit` the first parameter is the
    thread; `free` takes one address."""

    kind: str = static_field()
    func: str = static_field()
    params: Tuple[str, ...]
    sorts: Tuple[str, ...] = static_field()

    @property
    def key(self) -> Tuple[str, str]:
        return (self.kind, self.func)

    @property
    def pointer_params(self) -> Tuple[str, ...]:
        return tuple(
            p for p, s in zip(self.params[1:], self.sorts[1:]) if s == ADDRESS
        )

    @property
    def data_params(self) -> Tuple[str, ...]:
        return tuple(p for p, s in zip(self.params[1:], self.sorts[1:]) if s == DATA)

    def __str__(self):
        if self.kind == FREE:
            return f"free({', '.join(self.params)})"
        if self.kind == EXIT:
            return f"exit {self.func}({', '.join(self.params)})"
        return f"enter {self.func}({', '.join(self.params)})"


class Transition(Module):
    source: str
    target: str
    kind: str = static_field()
    func: str = static_field()
    guard: Guard

    @property
    def key(self) -> Tuple[str, str]:
        return (self.kind, self.func)


class Event(Module):
    """A concrete history event. `thread` is `None` for frees; `values` holds the
    actual arguments (empty for exits)."""

    kind: str = static_field()
    func: str = static_field()
    thread: Optional[int]
    values: Tuple[object, ...] = ()

    @property
    def key(self) -> Tuple[str, str]:
        return (self.kind, self.func)


def free_event(address) -> Event:
    return Event(FREE, "", None, (address,))


class SmrAutomaton(Module):
    """An SMR automaton. Its transitions are complete: the implicit self-loops of
    every (location, event) pair are stored explicitly."""

    name: str = static_field()
    variables: Tuple[Tuple[str, str], ...]
    events: Tuple[EventSig, ...]
    locations: Tuple[str, ...]
    initial: str
    accepting: Tuple[str, ...]
    active: Tuple[str, ...]
    transitions: Tuple[Transition, ...]
    safe_calls: Tuple[Tuple[str, Tuple[int, ...]], ...] = ()
    elision: bool = static_field(default=False)

    def event(self, kind: str, func: str = "") -> EventSig:
        for sig in self.events:
            if sig.kind == kind and sig.func == func:
                return sig
        name = "free" if kind == FREE else f"{kind} {func}"
        raise AutomatonError(f"Event {name} is not in the alphabet of {self.name}.")

    def has_event(self, kind: str, func: str = "") -> bool:
        return any(sig.kind == kind and sig.func == func for sig in self.events)

    def variable(self, sort: str) -> Optional[str]:
        """The first automaton variable of the given sort (`zt`, `za`)."""
        for name, s in self.variables:
            if s == sort:
                return name
        return None

    def outgoing(self, location: str, key: Tuple[str, str]) -> Tuple[Transition, ...]:
        return _outgoing_table(self).get((location, key), ())

    def index(self, location: str) -> int:
        return _location_index(self)[location]


@ft.lru_cache(maxsize=None)
def _outgoing_table(o: SmrAutomaton) -> Dict:
    table: Dict = {}
    for t in o.transitions:
        table.setdefault((t.source, t.key), []).append(t)
    return {k: tuple(v) for k, v in table.items()}


@ft.lru_cache(maxsize=None)
def _location_index(o: SmrAutomaton) -> Dict[str, int]:
    return {loc: i for i, loc in enumerate(o.locations)}


def build_automaton(
    name: str,
    variables: Sequence[Tuple[str, str]],
    events: Sequence[EventSig],
    locations: Sequence[str],
    initial: str,
    accepting: Iterable[str],
    active: Iterable[str],
    transitions: Sequence[Transition],
    safe_calls: Sequence[Tuple[str, Tuple[int, ...]]] = (),
    elision: bool = False,
) -> SmrAutomaton:
    """Checks well-formedness and completes `transitions` with implicit self-loops.

    **Raises:**

    `AutomatonError` if a guard relates anything other than one event parameter and
    one variable of the same sort, if an accepting location is entered by a non-free
    transition or left towards a non-accepting location, or on unknown names.
    """
    locations = tuple(locations)
    accepting = tuple(l for l in locations if l in set(accepting))
    active = tuple(l for l in locations if l in set(active))
    if len(set(locations)) != len(locations):
        raise AutomatonError(f"Duplicate location in automaton {name}.")
    if initial not in locations:
        raise AutomatonError(f"Initial location {initial} is not declared.")
    if initial in accepting:
        raise AutomatonError("The initial location must not be accepting.")
    sorts = dict(variables)
    sigs = {sig.key: sig for sig in events}
    explicit: Dict = {}
    for t in transitions:
        for loc in (t.source, t.target):
            if loc not in locations:
                raise AutomatonError(f"Unknown location {loc} in automaton {name}.")
        try:
            sig = sigs[t.key]
        except KeyError:
            raise AutomatonError(
                f"Transition {t.source} -> {t.target} uses an event outside the "
                "alphabet."
            )
        param_sorts = dict(zip(sig.params, sig.sorts))
        for lit in t.guard.literals:
            if lit.param not in param_sorts:
                raise AutomatonError(
                    f"Guard `{t.guard}` must compare a parameter of {sig} with a "
                    "variable; two parameters or two variables are not supported."
                )
            if lit.var not in sorts:
                raise AutomatonError(
                    f"Guard `{t.guard}` mentions {lit.var}, which is not a variable."
                )
            if sorts[lit.var] != param_sorts[lit.param]:
                raise AutomatonError(
                    f"Guard `{t.guard}` compares values of different sorts."
                )
        if t.target in accepting and t.kind != FREE:
            raise AutomatonError(
                f"Accepting location {t.target} may only be reached by `free`."
            )
        if t.source in accepting and t.target not in accepting:
            raise AutomatonError(
                f"Accepting location {t.source} must not lead back to {t.target}."
            )
        explicit.setdefault((t.source, t.key), []).append(t)
    complete = list(transitions)
    for loc in locations:
        for sig in events:
            listed = [t.guard for t in explicit.get((loc, sig.key), [])]
            for guard in complement(listed):
                complete.append(Transition(loc, loc, sig.kind, sig.func, guard))
    return SmrAutomaton(
        name=name,
        variables=tuple(variables),
        events=tuple(events),
        locations=locations,
        initial=initial,
        accepting=accepting,
        active=active,
        transitions=tuple(complete),
        safe_calls=tuple(safe_calls),
        elision=elision,
    )


def _bind(sig: EventSig, event: Event) -> Dict[str, object]:
    if event.kind == FREE:
        values = event.values
    else:
        values = (event.thread,) + tuple(event.values)
    if len(values) != len(sig.params):
        raise AutomatonError(f"Event {sig} applied to {len(values)} values.")
    return dict(zip(sig.params, values))


def step_locations(
    o: SmrAutomaton,
    valuation: Mapping[str, object],
    locations: Iterable[str],
    event: Event,
) -> FrozenSet[str]:
    """Locations reachable from `locations` by one concrete event."""
    if not o.has_event(event.kind, event.func):
        # Events outside the alphabet are invisible to this automaton.
        return frozenset(locations)
    values = _bind(o.event(event.kind, event.func), event)
    out = set()
    for loc in locations:
        for t in o.outgoing(loc, event.key):
            if t.guard.holds(values, valuation):
                out.add(t.target)
    return frozenset(out)


def run_history(
    o: SmrAutomaton, valuation: Mapping[str, object], history: Iterable[Event]
) -> FrozenSet[str]:
    """The set of locations reachable from the initial location under `history`,
    for the fixed variable valuation `valuation`. The history is in the
    specification (for this valuation) iff no accepting location is reached."""
    for name, _ in o.variables:
        if name not in valuation:
            raise ValueError(f"Valuation does not bind variable {name}.")
    current = frozenset([o.initial])
    for event in history:
        current = step_locations(o, valuation, current, event)
    return current


def accepts(o: SmrAutomaton, valuation, history) -> bool:
    return any(l in o.accepting for l in run_history(o, valuation, history))


# Post image


@ft.lru_cache(maxsize=None)
def _post_transitions(
    o: SmrAutomaton, key: Tuple[str, str], binding: Tuple[Literal, ...]
) -> Tuple[Tuple[str, str], ...]:
    out = []
    for t in o.transitions:
        if t.key == key and t.guard.conjoin(Guard(binding)).satisfiable():
            out.append((t.source, t.target))
    return tuple(out)


def event_binding(
    o: SmrAutomaton, variable: str, role: str, command: Command
) -> Tuple[Tuple[str, str], Tuple[Literal, ...]]:
    """The event emitted by `command` and the constraints that tie it to the
    tracked thread and, when `variable` is a pointer passed to the call, to the
    tracked address."""
    if isinstance(command, Enter):
        sig = o.event(ENTER, command.func)
        pointer_params = sig.pointer_params
        if len(pointer_params) != len(command.pointers) or len(
            sig.data_params
        ) != len(command.data):
            raise AutomatonError(
                f"enter {command.func} is called with {len(command.pointers)} "
                f"pointer and {len(command.data)} data arguments, but {sig} is "
                "declared."
            )
    elif isinstance(command, Exit):
        sig = o.event(EXIT, command.func)
        pointer_params = ()
    else:
        raise AutomatonError(f"{command} does not emit an SMR event.")
    binding = []
    zt = o.variable(THREAD)
    if zt is not None:
        binding.append(Literal(sig.params[0], zt, True))
    za = o.variable(ADDRESS)
    if role == "pointer" and za is not None:
        for param, arg in zip(pointer_params, getattr(command, "pointers", ())):
            if arg == variable:
                binding.append(Literal(param, za, True))
    return sig.key, tuple(Guard(binding).literals)


def post_image(
    o: SmrAutomaton,
    variable: str,
    role: str,
    command: Optional[Command],
    locations: Iterable[str],
) -> FrozenSet[str]:
    """Locations reached from `locations` when the tracked thread executes `command`.

    **Arguments:**

    - `o`: the automaton.
    - `variable`: the program variable whose type is being transformed.
    - `role`: `"pointer"` or `"angel"`. Only pointers are tied to the tracked
        address: angels denote sets of addresses.
    - `command`: an `Enter`/`Exit` command, or `None` for the silent step.
    - `locations`: the source locations.

    **Returns:**

    The frozenset of target locations.
    """
    locations = frozenset(locations)
    if command is None:
        return locations
    key, binding = event_binding(o, variable, role, command)
    return frozenset(
        target
        for source, target in _post_transitions(o, key, binding)
        if source in locations
    )


# Product


def _location_name(l1: str, l2: str) -> str:
    return f"({l1},{l2})"


def product(o1: SmrAutomaton, o2: SmrAutomaton) -> SmrAutomaton:
    """Synchronous product of two automata; its specification is the intersection
    of the two specifications.

    Shared events synchronise; an event of only one alphabet leaves the other
    component unchanged. Variables with the same name are identified. Every pair
    with an accepting component is collapsed into the single accepting location
    `(LF)`, and unreachable pairs are pruned.

    **Raises:**

    `AutomatonError` if a shared event has different parameter sorts in the two
    alphabets, or a shared variable has two sorts.
    """
    variables = list(o1.variables)
    sorts = dict(o1.variables)
    for name, sort in o2.variables:
        if name in sorts:
            if sorts[name] != sort:
                raise AutomatonError(f"Variable {name} has two sorts in the product.")
        else:
            variables.append((name, sort))
            sorts[name] = sort
    events = list(o1.events)
    renaming: Dict[Tuple[str, str], Dict[str, str]] = {}
    for sig in o2.events:
        if o1.has_event(sig.kind, sig.func):
            sig1 = o1.event(sig.kind, sig.func)
            if sig1.sorts != sig.sorts:
                raise AutomatonError(
                    f"Event {sig} clashes with {sig1}: arities or sorts differ."
                )
            renaming[sig.key] = dict(zip(sig.params, sig1.params))
        else:
            events.append(sig)
            renaming[sig.key] = {}
    keys1 = {sig.key for sig in o1.events}
    keys2 = {sig.key for sig in o2.events}

    transitions: List[Transition] = []
    seen = set()

    def add(source, target, key, guard):
        if not guard.satisfiable():
            return
        t = Transition(source, target, key[0], key[1], guard)
        if t not in seen:
            seen.add(t)
            transitions.append(t)

    for l1 in o1.locations:
        if l1 in o1.accepting:
            continue
        for l2 in o2.locations:
            if l2 in o2.accepting:
                continue
            source = _location_name(l1, l2)
            for sig in events:
                key = sig.key
                moves1 = [(t.target, t.guard) for t in o1.outgoing(l1, key)]
                moves2 = [
                    (t.target, t.guard.rename(renaming[key]))
                    for t in o2.outgoing(l2, key)
                ]
                if key not in keys1:
                    moves1 = [(l1, Guard())]
                if key not in keys2:
                    moves2 = [(l2, Guard())]
                for t1, g1 in moves1:
                    for t2, g2 in moves2:
                        if t1 in o1.accepting or t2 in o2.accepting:
                            target = SINK
                        else:
                            target = _location_name(t1, t2)
                        add(source, target, key, g1.conjoin(g2))
    for sig in events:
        add(SINK, SINK, sig.key, Guard())

    initial = _location_name(o1.initial, o2.initial)
    graph = nx.MultiDiGraph()
    graph.add_node(initial)
    graph.add_edges_from((t.source, t.target) for t in transitions)
    reachable = nx.descendants(graph, initial) | {initial}
    locations = [
        _location_name(l1, l2)
        for l1 in o1.locations
        for l2 in o2.locations
        if _location_name(l1, l2) in reachable
    ]
    if SINK in reachable:
        locations.append(SINK)
    transitions = [t for t in transitions if t.source in reachable]

    active = []
    for loc in locations:
        if loc == SINK:
            continue
        l1, l2 = _split(loc, o1, o2)
        if (not o1.active or l1 in o1.active) and (not o2.active or l2 in o2.active):
            if o1.active or o2.active:
                active.append(loc)

    required: Dict[str, set] = {}
    for func, positions in o1.safe_calls + o2.safe_calls:
        required.setdefault(func, set()).update(positions)
    safe_calls = tuple((f, tuple(sorted(p))) for f, p in required.items())

    out = SmrAutomaton(
        name=f"{o1.name}*{o2.name}",
        variables=tuple(variables),
        events=tuple(events),
        locations=tuple(locations),
        initial=initial,
        accepting=(SINK,) if SINK in reachable else (),
        active=tuple(active),
        transitions=tuple(transitions),
        safe_calls=safe_calls,
        elision=o1.elision and o2.elision,
    )
    logger.debug(
        "product %s has %d reachable locations and %d transitions",
        out.name,
        len(out.locations),
        len(out.transitions),
    )
    return out


@ft.lru_cache(maxsize=None)
def _pair_names(o1: SmrAutomaton, o2: SmrAutomaton) -> Dict[str, Tuple[str, str]]:
    return {
        _location_name(l1, l2): (l1, l2) for l1 in o1.locations for l2 in o2.locations
    }


def _split(loc: str, o1: SmrAutomaton, o2: SmrAutomaton) -> Tuple[str, str]:
    return _pair_names(o1, o2)[loc]
