import collections
import functools as ft
import itertools as it
from typing import Dict, FrozenSet, Iterable, Optional, Sequence, Tuple

from ..module import Module, static_field
from .automaton import DATA, ENTER, EXIT, SmrAutomaton
from .guards import Guard, Literal


class AbstractEvent(Module):
    """An event whose arguments are abstract values: the set of automaton variables
    the concrete argument is equal to."""

    kind: str = static_field()
    func: str = static_field()
    values: Tuple[FrozenSet[str], ...]

    @property
    def key(self):
        return (self.kind, self.func)

    def replace(self, position: int, value: FrozenSet[str]) -> "AbstractEvent":
        values = list(self.values)
        values[position] = value
        return AbstractEvent(self.kind, self.func, tuple(values))


class AbstractNfa(Module):
    states: Tuple[str, ...]
    initial: FrozenSet[str]
    accepting: FrozenSet[str]
    alphabet: Tuple[AbstractEvent, ...]
    transitions: Tuple[Tuple[str, AbstractEvent, str], ...]

    def successors(self, states: Iterable[str], event: AbstractEvent) -> FrozenSet[str]:
        delta = _delta(self)
        out = set()
        for state in states:
            out.update(delta.get((state, event), ()))
        return frozenset(out)

    def with_initial(self, initial: Iterable[str]) -> "AbstractNfa":
        return AbstractNfa(
            self.states,
            frozenset(initial),
            self.accepting,
            self.alphabet,
            self.transitions,
        )

    def accepts(self, word: Sequence[AbstractEvent]) -> bool:
        current = self.initial
        for event in word:
            current = self.successors(current, event)
        return bool(current & self.accepting)


@ft.lru_cache(maxsize=None)
def _delta(nfa: AbstractNfa) -> Dict:
    delta: Dict = collections.defaultdict(set)
    for source, event, target in nfa.transitions:
        delta[(source, event)].add(target)
    return dict(delta)


def _subsets(names: Sequence[str]):
    for r in range(len(names) + 1):
        for combo in it.combinations(names, r):
            yield frozenset(combo)


def abstract_to_nfa(
    o: SmrAutomaton, variables: Optional[Iterable[str]] = None
) -> AbstractNfa:
    """The finite abstraction of an automaton's observer semantics.

    Each event argument is abstracted to the set of automaton variables it equals.
    There is an edge `l --f(v#)--> l'` iff some transition `l --f(r)--> l'` has a guard
    that is satisfiable together with `r_i == u` for `u` in `v#_i` and `r_i != u` for
    the remaining bound variables `u` of matching sort.

    **Arguments:**

    - `o`: the automaton.
    - `variables`: the bound variables (defaults to all of them).
    """
    if variables is None:
        variables = [name for name, _ in o.variables]
    variables = [name for name, _ in o.variables if name in set(variables)]
    sorts = dict(o.variables)
    alphabet = []
    for sig in o.events:
        choices = []
        for sort in sig.sorts:
            names = [] if sort == DATA else [v for v in variables if sorts[v] == sort]
            choices.append(list(_subsets(names)))
        for values in it.product(*choices):
            alphabet.append(AbstractEvent(sig.kind, sig.func, tuple(values)))
    transitions = []
    for event in alphabet:
        sig = o.event(event.kind, event.func)
        membership = []
        for param, sort, value in zip(sig.params, sig.sorts, event.values):
            for var in variables:
                if sorts[var] == sort and sort != DATA:
                    membership.append(Literal(param, var, var in value))
        membership = Guard(membership)
        for loc in o.locations:
            for t in o.outgoing(loc, event.key):
                if t.guard.conjoin(membership).satisfiable():
                    transitions.append((loc, event, t.target))
    return AbstractNfa(
        states=o.locations,
        initial=frozenset([o.initial]),
        accepting=frozenset(o.accepting),
        alphabet=tuple(alphabet),
        transitions=tuple(dict.fromkeys(transitions)),
    )


def nfa_language_inclusion(a1: AbstractNfa, a2: AbstractNfa) -> bool:
    """Decides `L(a1) ⊆ L(a2)` exactly, exploring `a1` against the subset
    construction of `a2` and pruning with antichains.

    **Raises:**

    `ValueError` if the alphabets differ.
    """
    if set(a1.alphabet) != set(a2.alphabet):
        raise ValueError("Language inclusion needs automata over the same alphabet.")
    # For every a1 state, the minimal a2 macro-states seen so far.
    antichain: Dict[str, list] = collections.defaultdict(list)

    def subsumed(q, macro):
        return any(seen <= macro for seen in antichain[q])

    queue = collections.deque()
    start = frozenset(a2.initial)
    for q in a1.initial:
        if not subsumed(q, start):
            antichain[q].append(start)
            queue.append((q, start))
    while queue:
        q, macro = queue.popleft()
        if q in a1.accepting and not macro & a2.accepting:
            return False
        for event in a1.alphabet:
            targets = a1.successors([q], event)
            if not targets:
                continue
            next_macro = a2.successors(macro, event)
            for target in targets:
                if subsumed(target, next_macro):
                    continue
                antichain[target] = [
                    m for m in antichain[target] if not next_macro <= m
                ] + [next_macro]
                queue.append((target, next_macro))
    return True


_IDLE = ""


def _call_step(event: AbstractEvent, pending: str, thread: str) -> Optional[str]:
    if event.kind not in (ENTER, EXIT) or thread not in event.values[0]:
        return pending
    if event.kind == ENTER:
        return event.func if pending == _IDLE else None
    return _IDLE if pending == event.func else None


def discipline_state(location: str, pending: str) -> str:
    return f"{location}@{pending}"


def discipline_location(state: str) -> str:
    return state.rsplit("@", 1)[0]


def call_discipline(nfa: AbstractNfa, thread: str) -> AbstractNfa:
    """Restricts `nfa` to words in which the tracked thread `thread` alternates its
    enter and exit events, as a thread executing calls one at a time does.

    States become `location@pending`, where `pending` is the function the tracked
    thread is inside of (empty while it is between calls).
    """
    funcs = sorted({e.func for e in nfa.alphabet if e.kind in (ENTER, EXIT)})
    modes = (_IDLE,) + tuple(funcs)
    transitions = []
    for source, event, target in nfa.transitions:
        for pending in modes:
            after = _call_step(event, pending, thread)
            if after is not None:
                transitions.append(
                    (
                        discipline_state(source, pending),
                        event,
                        discipline_state(target, after),
                    )
                )
    return AbstractNfa(
        states=tuple(discipline_state(q, m) for q in nfa.states for m in modes),
        initial=frozenset(discipline_state(q, _IDLE) for q in nfa.initial),
        accepting=frozenset(
            discipline_state(q, m) for q in nfa.accepting for m in modes
        ),
        alphabet=nfa.alphabet,
        transitions=tuple(transitions),
    )


def reachable_states(nfa: AbstractNfa) -> FrozenSet[str]:
    """States reachable from the initial ones by some word."""
    edges: Dict[str, set] = collections.defaultdict(set)
    for source, _, target in nfa.transitions:
        edges[source].add(target)
    seen = set(nfa.initial)
    queue = collections.deque(nfa.initial)
    while queue:
        for target in edges[queue.popleft()]:
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return frozenset(seen)
