import json

import pytest

import smrtype
from smrtype import corpus
from smrtype.oracle import (
    ASSERTS,
    INVARIANTS,
    PRF,
    UNSAFE_ACCESS,
    UNSAFE_ASSUMPTION,
    UNSAFE_CALL,
    UNSAFE_RETIRE,
    ExplorationBudget,
    Semantics,
    explore,
)
from smrtype.smr import load_automaton


@pytest.fixture(scope="module")
def hp2():
    return load_automaton("hp2")


def test_unprotected_read_races(hp2):
    report = explore(
        corpus.load("micro_unprotected_read"), hp2, ExplorationBudget.liberal()
    )
    assert not report.clean
    assert report.verdict == "violation"
    assert report.kind == UNSAFE_ACCESS
    # The witness ends with the dereference after the environment freed the node.
    assert report.trace[-1].command == "v = p->data"
    assert any(step.thread == "env" for step in report.trace)


def test_racy_stack(hp2):
    budget = ExplorationBudget.liberal(steps=24)
    report = explore(corpus.load("micro_racy_stack"), hp2, budget)
    assert report.kind in (
        UNSAFE_ACCESS,
        UNSAFE_ASSUMPTION,
        UNSAFE_RETIRE,
        UNSAFE_CALL,
    )


def test_null_deref(hp2):
    report = explore(corpus.load("micro_null_deref"), hp2, ExplorationBudget.gc())
    assert report.kind == UNSAFE_ACCESS


def test_protected_read_is_clean(hp2):
    report = explore(
        corpus.load("micro_protected_read"), hp2, ExplorationBudget.liberal()
    )
    assert report.clean, report.format()
    assert report.kind is None
    assert report.trace == ()
    assert report.states > 1


def test_treiber_is_clean(hp2):
    budget = ExplorationBudget.liberal(steps=12)
    report = explore(corpus.load("treiber_hp"), hp2, budget)
    assert report.clean, report.format()
    assert report.steps <= 12


def test_invariants(hp2):
    prog = corpus.load("micro_invariant_false")
    budget = ExplorationBudget.gc()
    report = explore(prog, hp2, budget, INVARIANTS)
    assert report.kind == "invariant"
    # The instrumented program fails an assertion instead.
    report = explore(smrtype.instrument(prog), hp2, budget, ASSERTS)
    assert report.kind == "assert"

    prog = corpus.load("micro_protected_read")
    assert explore(prog, hp2, budget, INVARIANTS).clean
    assert explore(smrtype.instrument(prog), hp2, budget, ASSERTS).clean


def test_prf_ignores_annotations(hp2):
    prog = corpus.load("micro_invariant_false")
    assert explore(prog, hp2, ExplorationBudget.gc(), PRF).clean


def test_gc_is_independent_of_the_automaton():
    prog = corpus.load("micro_protected_read")
    budget = ExplorationBudget.gc(steps=12)
    reports = [
        explore(prog, load_automaton(name), budget) for name in ("base", "ebr", "hp2")
    ]
    assert len({r.fingerprint for r in reports}) == 1
    assert all(r.clean for r in reports)


def test_jobs(hp2):
    prog = corpus.load("micro_protected_read")
    budget = ExplorationBudget.liberal(steps=10)
    one = explore(prog, hp2, budget, jobs=1)
    two = explore(prog, hp2, budget, jobs=2)
    assert one.fingerprint == two.fingerprint
    assert (one.verdict, one.states, one.steps) == (two.verdict, two.states, two.steps)


def test_step_bound(hp2):
    prog = corpus.load("micro_protected_read")
    report = explore(prog, hp2, ExplorationBudget.gc(steps=2))
    assert report.clean
    assert report.exhausted
    assert "step bound" in report.format()
    report = explore(prog, hp2, ExplorationBudget.gc(steps=0))
    assert report.states == 1


def test_report_json(hp2):
    report = explore(
        corpus.load("micro_unprotected_read"), hp2, ExplorationBudget.liberal()
    )
    out = json.loads(json.dumps(report.to_json()))
    assert out["verdict"] == "violation"
    assert out["kind"] == UNSAFE_ACCESS
    assert out["budget"]["free"] == [0, 1, 2]
    assert len(out["trace"]) == len(report.trace)
    assert report.format().startswith(UNSAFE_ACCESS)


def test_budget():
    budget = ExplorationBudget()
    assert (budget.threads, budget.addresses, budget.steps) == (2, 3, 20)
    assert budget.is_gc
    liberal = ExplorationBudget.liberal(addresses=2)
    assert liberal.free == liberal.reuse == (0, 1)
    assert not liberal.is_gc
    assert ExplorationBudget.gc().free == ()
    assert ExplorationBudget(free=[2, 0, 2]).free == (0, 2)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(threads=0),
        dict(addresses=0),
        dict(data=0),
        dict(rounds=0),
        dict(steps=-1),
        dict(free=(3,)),
        dict(free=(0,), reuse=(1,)),
    ],
)
def test_budget_errors(kwargs):
    with pytest.raises(ValueError):
        ExplorationBudget(**kwargs)


def test_unknown_mode(hp2):
    prog = corpus.load("micro_protected_read")
    with pytest.raises(ValueError):
        Semantics(prog, hp2, ExplorationBudget(), mode="races")
    with pytest.raises(ValueError):
        explore(prog, hp2, ExplorationBudget(), "races")


def test_environment_frees_follow_the_automaton():
    prog = smrtype.parse_program(
        "shared X; proc read { local p; data v; p = malloc; v = p->data; }"
    )
    budget = ExplorationBudget.liberal(threads=1)
    # Without the base automaton nothing forbids freeing an address never retired.
    report = explore(prog, load_automaton("ebr", with_base=False), budget)
    assert report.kind == UNSAFE_ACCESS
    assert any(step.thread == "env" for step in report.trace)
    assert explore(prog, load_automaton("ebr"), budget).clean


def _automaton(name):
    return load_automaton("ebr" if "ebr" in name else "hp2")


_MICRO = [name for name in corpus.names() if name.startswith("micro_")]


@pytest.mark.parametrize("name", _MICRO)
def test_instrumentation_agrees_with_invariants(name):
    prog = corpus.load(name)
    o = _automaton(name)
    budget = ExplorationBudget.gc(steps=200)
    invariants = explore(prog, o, budget, INVARIANTS)
    asserts = explore(smrtype.instrument(prog), o, budget, ASSERTS)
    # A clean verdict only counts once the state space is exhausted.
    assert invariants.kind is not None or not invariants.exhausted
    assert asserts.kind is not None or not asserts.exhausted
    assert invariants.clean == asserts.clean, (invariants.format(), asserts.format())


@pytest.mark.parametrize(
    "name",
    corpus.structures("hp")
    + corpus.structures("ebr")
    + (
        "micro_alloc_local",
        "micro_data_ops",
        "micro_ebr_read",
        "micro_ebr_two_reads",
        "micro_hp_slot1_read",
        "micro_hp_two_slots",
        "micro_inv_eq",
        "micro_loop_protect",
        "micro_null_check",
        "micro_protected_read",
    ),
)
def test_typed_programs_are_race_free(name):
    prog = corpus.load(name)
    o = _automaton(name)
    assert smrtype.typecheck(prog, o).ok
    budget = ExplorationBudget.liberal(threads=2, addresses=3, steps=20)
    report = explore(prog, o, budget, INVARIANTS)
    assert report.clean, report.format()
    report = explore(prog, o, budget)
    assert report.clean, report.format()


@pytest.mark.parametrize(
    "name", ["micro_ebr_stale_member", "micro_inv_eq_false", "micro_retire_in_place"]
)
def test_false_invariants(name):
    report = explore(
        corpus.load(name), _automaton(name), ExplorationBudget.gc(steps=30), INVARIANTS
    )
    assert report.kind == "invariant"
