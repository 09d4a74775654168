import itertools as it

import jax.random as jrandom
import pytest

import smrtype
from smrtype.lang import Enter, Exit
from smrtype.rules import SafeCallTable, verify_safe_call_table
from smrtype.smr import (
    AbstractEvent,
    Event,
    abstract_to_nfa,
    accepts,
    builtin,
    builtin_names,
    call_discipline,
    free_event,
    interference_closure,
    largest_closed_subset,
    load_automaton,
    nfa_language_inclusion,
    parse_automaton,
    post_image,
    product,
    reachable_states,
    run_history,
    safe_locations,
)
from smrtype.smr.automaton import DATA, ENTER, EXIT, FREE, step_locations
from smrtype.smr.nfa import discipline_state


SINK = "(LF)"

# Calling `unprotect` with the tracked address lifts the protection, so it allows
# more frees than calling it with any other address.
_UNPROTECT = """
automaton Unprotect {
    vars zt: thread, za: address;
    events enter unprotect(t, a), exit unprotect(t), free(a);
    locations P init active, U active, F accepting;

    P -> U on enter unprotect(t, a) when a == za;
    P -> F on free(a) when a == za;
}
"""


def test_builtins():
    assert builtin_names() == ("base", "ebr", "hp2")
    assert builtin("base").name == "Base"
    assert builtin("ebr").name == "EBR"
    assert builtin("hp2").name == "HP2"
    # 17 locations plus the accepting sink
    assert len(builtin("hp2").locations) == 18
    with pytest.raises(ValueError):
        builtin("rcu")


def test_base_automaton():
    base = load_automaton("base")
    assert base.name == "Base"
    assert base.locations == ("I", "R", "F")
    assert base.active == ("I",)
    assert safe_locations(base) == {"F"}
    assert interference_closure(base, ["I"]) == {"I", "R", "F"}
    assert interference_closure(base, ["F"]) == {"F"}
    assert largest_closed_subset(base, ["I", "R"]) == frozenset()


def test_ebr_product():
    o = load_automaton("ebr")
    assert o.name == "Base*EBR"
    assert o.initial == "(I,init)"
    assert set(o.locations) == {
        "(I,init)",
        "(I,protected)",
        "(R,init)",
        "(R,protected)",
        "(R,retired)",
        SINK,
    }
    assert o.accepting == (SINK,)
    assert set(o.active) == {"(I,init)", "(I,protected)"}
    assert safe_locations(o) == {"(I,protected)", "(R,retired)", SINK}
    assert interference_closure(o, ["(I,protected)"]) == {
        "(I,protected)",
        "(R,retired)",
        SINK,
    }
    # The retire of another thread leaves the initial location.
    assert "(R,init)" in interference_closure(o, ["(I,init)"])


def test_hp2_product():
    o = load_automaton("hp2")
    assert o.name == "Base*HP2"
    assert o.accepting == (SINK,)
    safe = safe_locations(o)
    assert SINK in safe
    assert o.initial not in safe
    assert interference_closure(o, safe) == safe


def test_load_automaton():
    base, ebr = builtin("base"), builtin("ebr")
    assert product(base, ebr) == load_automaton("ebr")
    assert load_automaton("ebr", with_base=False) == ebr


def test_product_clash():
    other = parse_automaton(
        """
        automaton Odd {
            vars zt: thread;
            events enter retire(t), exit retire(t);
            locations A init;
        }
        """
    )
    with pytest.raises(smrtype.AutomatonError):
        product(builtin("base"), other)


def test_histories():
    o = builtin("ebr")
    leave = [Event("enter", "leaveQ", 0, ()), Event("exit", "leaveQ", 0, ())]
    retire = [Event("enter", "retire", 1, (5,)), Event("exit", "retire", 1, ())]
    enter = [Event("enter", "enterQ", 0, ()), Event("exit", "enterQ", 0, ())]
    valuation = {"zt": 0, "za": 5}
    assert run_history(o, valuation, leave) == {"protected"}
    assert accepts(o, valuation, leave + retire + [free_event(5)])
    assert not accepts(o, valuation, leave + retire + enter + [free_event(5)])
    # Other addresses are not tracked by this valuation.
    assert not accepts(o, {"zt": 0, "za": 4}, leave + retire + [free_event(5)])
    with pytest.raises(ValueError):
        run_history(o, {"zt": 0}, leave)


def test_post_image():
    o = builtin("hp2")
    after_enter = post_image(o, "p", "pointer", Enter("protect0", ("p",)), ["S1"])
    assert after_enter == {"S2"}
    after_exit = post_image(o, "p", "pointer", Exit("protect0"), after_enter)
    assert after_exit == {"S3"}
    # Protecting another variable may protect the tracked address or not.
    other = post_image(o, "p", "pointer", Enter("protect0", ("q",)), ["S3"])
    assert other == {"S1", "S3"}
    assert post_image(o, "p", "pointer", None, ["S3"]) == {"S3"}


@pytest.mark.parametrize(
    "text",
    [
        # no initial location
        "automaton X { vars za: address; events free(a); locations A; }",
        # unknown location
        """automaton X { vars za: address; events free(a); locations A init;
           A -> B on free(a) when a == za; }""",
        # an accepting location reached by a non-free event
        """automaton X { vars zt: thread; events enter f(t), exit f(t);
           locations A init, F accepting; A -> F on enter f(t) when t == zt; }""",
        # a guard between two variables
        """automaton X { vars zt: thread, zu: thread; events enter f(t), exit f(t);
           locations A init, B; A -> B on enter f(t) when zt == zu; }""",
        # a guard between values of different sorts
        """automaton X { vars zt: thread, za: address; events enter f(t, a),
           exit f(t); locations A init, B; A -> B on enter f(t, a) when t == za; }""",
        # an undeclared event
        """automaton X { vars za: address; events free(a); locations A init, B;
           A -> B on enter f(t); }""",
    ],
)
def test_malformed_automata(text):
    with pytest.raises(smrtype.ParseError):
        parse_automaton(text)


def test_safe_call_table():
    o = load_automaton("hp2")
    table = SafeCallTable.from_automaton(o)
    assert table.required("retire") == (0,)
    assert table.required("protect0") == ()
    assert table.is_safe("protect0", [False])
    assert not table.is_safe("retire", [False])
    assert table.is_safe("retire", [True])


def test_audit_verified():
    o = load_automaton("hp2")
    audits = verify_safe_call_table(o, SafeCallTable.from_automaton(o))
    entries = {(a.func, a.valid): a.status for a in audits}
    assert entries[("protect0", (False,))] == "verified"
    assert entries[("protect1", (False,))] == "verified"
    assert entries[("retire", (True,))] == "verified"
    assert ("retire", (False,)) not in entries


def test_audit_refuted():
    o = parse_automaton(_UNPROTECT)
    audits = verify_safe_call_table(o, SafeCallTable.from_automaton(o))
    entries = {(a.func, a.valid): a for a in audits}
    refuted = entries[("unprotect", (False,))]
    assert refuted.status == "refuted"
    assert refuted.witness == "P"
    assert entries[("unprotect", (True,))].status == "verified"


_TRIVIAL = """
automaton Trivial {
    vars zt: thread, za: address;
    events free(a);
    locations T init active;
}
"""

_VALUATIONS = ({"zt": 0, "za": 5}, {"zt": 1, "za": 6})


def _concrete_events(o):
    events = []
    for sig in o.events:
        if sig.kind == FREE:
            events.extend(free_event(a) for a in (5, 6))
            continue
        domains = [(7,) if sort == DATA else (5, 6) for sort in sig.sorts[1:]]
        for thread in (0, 1):
            for args in it.product(*domains):
                events.append(Event(sig.kind, sig.func, thread, args))
    return events


def _abstract(o, valuation, event):
    sig = o.event(event.kind, event.func)
    if event.kind == FREE:
        values = event.values
    else:
        values = (event.thread,) + tuple(event.values)
    return AbstractEvent(
        event.kind,
        event.func,
        tuple(
            frozenset(
                name
                for name, s in o.variables
                if s == sort and sort != DATA and valuation[name] == value
            )
            for sort, value in zip(sig.sorts, values)
        ),
    )


def _histories(key, events, n, length):
    idx = jrandom.randint(key, (n, length), 0, len(events))
    return [[events[int(i)] for i in row] for row in idx]


@pytest.mark.parametrize(
    "name,with_base",
    [("base", False), ("ebr", False), ("hp2", False), ("ebr", True)],
)
def test_abstraction_steps(name, with_base):
    o = load_automaton(name, with_base=with_base)
    nfa = abstract_to_nfa(o)
    assert set(nfa.states) == set(o.locations)
    events = _concrete_events(o)
    for valuation in _VALUATIONS:
        for loc in o.locations:
            for event in events:
                concrete = step_locations(o, valuation, [loc], event)
                abstract = nfa.successors([loc], _abstract(o, valuation, event))
                assert concrete == abstract


def test_abstraction_words(getkey):
    o = load_automaton("ebr")
    nfa = abstract_to_nfa(o)
    events = _concrete_events(o)
    for history in _histories(getkey(), events, 300, 10):
        for valuation in _VALUATIONS:
            word = [_abstract(o, valuation, e) for e in history]
            assert accepts(o, valuation, history) == nfa.accepts(word)


def test_language_inclusion(getkey):
    nfa = abstract_to_nfa(builtin("hp2"))
    disciplined = call_discipline(nfa, "zt")
    assert nfa_language_inclusion(nfa, nfa)
    assert nfa_language_inclusion(disciplined, nfa)
    assert not nfa_language_inclusion(nfa, disciplined)
    with pytest.raises(ValueError):
        nfa_language_inclusion(nfa, abstract_to_nfa(builtin("ebr")))

    alphabet = nfa.alphabet
    idx = jrandom.randint(getkey(), (200, 8), 0, len(alphabet))
    for row in idx:
        word = [alphabet[int(i)] for i in row]
        assert not disciplined.accepts(word) or nfa.accepts(word)


def test_call_discipline():
    nfa = abstract_to_nfa(builtin("hp2"))
    disciplined = call_discipline(nfa, "zt")
    zt, za, nobody = frozenset(["zt"]), frozenset(["za"]), frozenset()
    enter0 = AbstractEvent(ENTER, "protect0", (zt, za))
    exit0 = AbstractEvent(EXIT, "protect0", (zt,))
    enter1 = AbstractEvent(ENTER, "protect1", (zt, za))
    retire = AbstractEvent(ENTER, "retire", (nobody, za))
    free = AbstractEvent(FREE, "", (za,))

    one_call = [enter0, exit0, retire, free]
    assert nfa.accepts(one_call)
    assert disciplined.accepts(one_call)
    # protect0 is entered while the tracked thread is still inside protect1
    nested = [enter1, enter0, exit0, retire, free]
    assert nfa.accepts(nested)
    assert not disciplined.accepts(nested)

    live = reachable_states(disciplined)
    assert discipline_state("S1", "") in live
    assert discipline_state("S2", "protect0") in live
    assert discipline_state("S2", "") not in live
    assert live <= set(disciplined.states)


def test_product_with_trivial(getkey):
    ebr = builtin("ebr")
    p = product(ebr, parse_automaton(_TRIVIAL))
    assert p.initial == "(init,T)"
    assert len(p.locations) == len(ebr.locations)
    assert p.accepting == (SINK,)
    for history in _histories(getkey(), _concrete_events(ebr), 300, 8):
        for valuation in _VALUATIONS:
            assert accepts(p, valuation, history) == accepts(ebr, valuation, history)


def test_product_intersects(getkey):
    base, ebr = builtin("base"), builtin("ebr")
    p = product(base, ebr)
    for history in _histories(getkey(), _concrete_events(p), 400, 10):
        for valuation in _VALUATIONS:
            either = accepts(base, valuation, history) or accepts(
                ebr, valuation, history
            )
            assert accepts(p, valuation, history) == either
