"""Guards of SMR automata: conjunctions of (dis)equalities between one formal
parameter and one automaton variable. Satisfiability is decided with z3 over the
integers, i.e. over an unbounded value domain."""

import functools as ft
import itertools as it
from typing import FrozenSet, Iterable, List, Mapping, Tuple

import z3

from ..module import Module, static_field


class Literal(Module):
    param: str
    var: str
    equal: bool = static_field(default=True)

    def negate(self) -> "Literal":
        return Literal(self.param, self.var, not self.equal)

    def holds(self, values: Mapping[str, object], valuation: Mapping[str, object]):
        return (values[self.param] == valuation[self.var]) == self.equal

    def __str__(self):
        return f"{self.param} {'==' if self.equal else '!='} {self.var}"


class Guard(Module):
    literals: Tuple[Literal, ...] = ()

    def __init__(self, literals: Iterable[Literal] = ()):
        # Canonical order, duplicates removed.
        self.literals = tuple(
            sorted(set(literals), key=lambda l: (l.param, l.var, l.equal))
        )

    def conjoin(self, other: "Guard") -> "Guard":
        return Guard(self.literals + other.literals)

    def rename(self, params: Mapping[str, str]) -> "Guard":
        return Guard(
            Literal(params.get(l.param, l.param), l.var, l.equal)
            for l in self.literals
        )

    def holds(self, values: Mapping[str, object], valuation: Mapping[str, object]):
        return all(l.holds(values, valuation) for l in self.literals)

    def satisfiable(self) -> bool:
        return satisfiable(self.literals)

    def __str__(self):
        if not self.literals:
            return "true"
        return " && ".join(str(l) for l in self.literals)


TRUE = Guard()


@ft.lru_cache(maxsize=None)
def _satisfiable(key: FrozenSet[Tuple[str, str, bool]]) -> bool:
    solver = z3.Solver()
    names = {}

    def term(name):
        try:
            return names[name]
        except KeyError:
            names[name] = z3.Int(name)
            return names[name]

    for param, var, equal in key:
        lhs, rhs = term("param:" + param), term("var:" + var)
        solver.add(lhs == rhs if equal else lhs != rhs)
    return solver.check() == z3.sat


def satisfiable(literals: Iterable[Literal]) -> bool:
    return _satisfiable(frozenset((l.param, l.var, l.equal) for l in literals))


def complement(guards: Iterable[Guard]) -> List[Guard]:
    """A disjunction of satisfiable guards equivalent to the negation of the
    disjunction of `guards`."""
    negated = []
    for guard in guards:
        if not guard.literals:
            return []
        negated.append([l.negate() for l in guard.literals])
    out = []
    seen = set()
    for choice in it.product(*negated):
        guard = Guard(choice)
        if guard in seen or not guard.satisfiable():
            continue
        seen.add(guard)
        out.append(guard)
    return out
