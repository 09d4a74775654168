import logging
from typing import Dict, List, Tuple

from ..errors import AutomatonError, ParseError
from ..lang.lexer import TokenStream
from .automaton import (
    ADDRESS,
    DATA,
    ENTER,
    EXIT,
    FREE,
    THREAD,
    EventSig,
    SmrAutomaton,
    Transition,
    build_automaton,
)
from .guards import Guard, Literal


logger = logging.getLogger(__name__)

_SORTS = (THREAD, ADDRESS, DATA)


class _AutomatonParser:
    def __init__(self, text: str):
        self.stream = TokenStream(text)
        self.events: Dict[Tuple[str, str], EventSig] = {}
        self.variables: List[Tuple[str, str]] = []

    def automaton(self) -> SmrAutomaton:
        s = self.stream
        s.expect("automaton")
        name = s.identifier("automaton name").text
        s.expect("{")
        elision = False
        locations, accepting, active = [], [], []
        initial = None
        transitions = []
        safe_calls = []
        while not s.at("}"):
            keyword = s.identifier("declaration")
            if keyword.text == "assume":
                flag = s.identifier()
                if flag.text != "elision":
                    s.fail("expected `elision`", flag)
                elision = True
            elif keyword.text == "vars":
                while True:
                    token = s.identifier("variable")
                    s.expect(":")
                    sort = s.identifier("sort")
                    if sort.text not in (THREAD, ADDRESS):
                        s.fail("variables are of sort `thread` or `address`", sort)
                    self.variables.append((token.text, sort.text))
                    if not s.accept(","):
                        break
            elif keyword.text == "events":
                self.event_decl()
                while s.accept(","):
                    self.event_decl()
            elif keyword.text == "locations":
                while True:
                    loc = s.identifier("location").text
                    locations.append(loc)
                    while s.at("init", "accepting", "active"):
                        marker = s.next().text
                        if marker == "init":
                            if initial is not None:
                                s.fail("only one location can be initial")
                            initial = loc
                        elif marker == "accepting":
                            accepting.append(loc)
                        else:
                            active.append(loc)
                    if not s.accept(","):
                        break
            elif keyword.text == "call":
                func = s.identifier("function name").text
                word = s.identifier()
                if word.text != "requires":
                    s.fail("expected `requires`", word)
                word = s.identifier()
                if word.text != "valid":
                    s.fail("expected `valid`", word)
                s.expect("(")
                positions = [s.number()]
                while s.accept(","):
                    positions.append(s.number())
                s.expect(")")
                safe_calls.append((func, tuple(positions)))
            else:
                transitions.append(self.transition(keyword))
            s.expect(";")
        s.expect("}")
        if s.peek.kind != "eof":
            s.fail("unexpected text after the automaton")
        if initial is None:
            raise ParseError(f"automaton {name} has no initial location")
        try:
            return build_automaton(
                name,
                self.variables,
                tuple(self.events.values()),
                locations,
                initial,
                accepting,
                active,
                transitions,
                safe_calls,
                elision,
            )
        except AutomatonError as e:
            raise ParseError(str(e)) from e

    def event_decl(self):
        s = self.stream
        if s.at(ENTER, EXIT):
            kind = s.next().text
            func = s.identifier("function name").text
        else:
            token = s.identifier("event")
            if token.text != FREE:
                s.fail("expected `enter`, `exit` or `free`", token)
            kind, func = FREE, ""
        s.expect("(")
        params, sorts = [], []
        while not s.at(")"):
            if params:
                s.expect(",")
            params.append(s.identifier("parameter").text)
            if kind == FREE:
                sort = ADDRESS
            elif len(params) == 1:
                sort = THREAD
            else:
                sort = ADDRESS
            if s.accept(":"):
                token = s.identifier("sort")
                if token.text not in _SORTS:
                    s.fail(f"unknown sort {token.text}", token)
                sort = token.text
            sorts.append(sort)
        s.expect(")")
        if kind == FREE and sorts != [ADDRESS]:
            s.fail("`free` has exactly one address parameter")
        if kind != FREE and (not sorts or sorts[0] != THREAD):
            s.fail(f"the first parameter of {kind} {func} is the thread")
        if kind == EXIT and len(sorts) != 1:
            s.fail(f"exit {func} has only the thread parameter")
        if (kind, func) in self.events:
            s.fail(f"event {kind} {func} is declared twice")
        self.events[(kind, func)] = EventSig(kind, func, tuple(params), tuple(sorts))

    def transition(self, source_token) -> Transition:
        s = self.stream
        s.expect("->")
        target = s.identifier("location").text
        word = s.identifier()
        if word.text != "on":
            s.fail("expected `on`", word)
        if s.at(ENTER, EXIT):
            kind = s.next().text
            func = s.identifier("function name").text
        else:
            token = s.identifier("event")
            if token.text != FREE:
                s.fail("expected `enter`, `exit` or `free`", token)
            kind, func = FREE, ""
        sig = self.events.get((kind, func))
        if sig is None:
            s.fail(f"event {kind} {func} is not declared".strip())
        renaming = {p: p for p in sig.params}
        if s.accept("("):
            local = []
            while not s.at(")"):
                if local:
                    s.expect(",")
                local.append(s.identifier("parameter").text)
            s.expect(")")
            if len(local) != len(sig.params):
                s.fail(f"{sig} has {len(sig.params)} parameters")
            renaming = dict(zip(local, sig.params))
        literals = []
        if s.accept("when"):
            literals.extend(self.guard(renaming))
        return Transition(source_token.text, target, kind, func, Guard(literals))

    def guard(self, renaming) -> List[Literal]:
        s = self.stream
        if s.accept("true"):
            return []
        literals = [self.literal(renaming)]
        while s.accept("&&"):
            literals.append(self.literal(renaming))
        return literals

    def literal(self, renaming) -> Literal:
        s = self.stream
        lhs = s.identifier("parameter")
        if not s.at("==", "!="):
            s.fail("expected `==` or `!=`")
        equal = s.next().text == "=="
        rhs = s.identifier("variable")
        variables = dict(self.variables)
        if lhs.text in renaming and rhs.text in variables:
            return Literal(renaming[lhs.text], rhs.text, equal)
        if rhs.text in renaming and lhs.text in variables:
            return Literal(renaming[rhs.text], lhs.text, equal)
        raise ParseError(
            "a guard compares one event parameter with one automaton variable; "
            "comparisons between two parameters or two variables are not supported",
            lhs.line,
            lhs.column,
        )


def parse_automaton(text: str) -> SmrAutomaton:
    """Parses an SMR automaton and adds its implicit self-loops.

    **Raises:**

    [`smrtype.ParseError`][] on syntax errors, guards relating two parameters (or
    two variables), and accepting locations that are reached other than by `free`.
    """
    o = _AutomatonParser(text).automaton()
    logger.debug(
        "parsed automaton %s: %d locations, %d transitions",
        o.name,
        len(o.locations),
        len(o.transitions),
    )
    return o
