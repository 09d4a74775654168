import json

import pytest

import smrtype
from smrtype import corpus
from smrtype.domain import initial_environment
from smrtype.inference import chain_bound, check_solution
from smrtype.lang import Com, InvAngel, Skip, is_annotation, iter_commands, preprocess
from smrtype.smr import load_automaton


def _automaton(name):
    return load_automaton("ebr" if "ebr" in name else "hp2")


@pytest.mark.parametrize("name", corpus.structures("hp"))
def test_hp_structures(name):
    report = smrtype.typecheck(corpus.load(name), load_automaton("hp2"))
    assert report.ok, report.format()


@pytest.mark.parametrize("name", corpus.structures("ebr"))
def test_ebr_structures(name):
    report = smrtype.typecheck(corpus.load(name), load_automaton("ebr"))
    assert report.ok, report.format()


@pytest.mark.parametrize(
    "name",
    [
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
        # The type system trusts invariants and does not track null.
        "micro_ebr_stale_member",
        "micro_inv_eq_false",
        "micro_invariant_false",
        "micro_null_deref",
    ],
)
def test_typechecks(name):
    report = smrtype.typecheck(corpus.load(name), _automaton(name))
    assert report.ok, report.format()
    assert report.failure is None


@pytest.mark.parametrize(
    "name, proc, rule, variable",
    [
        ("micro_assume_invalid", "check", "ASSUME1", "p"),
        ("micro_choose_join", "read", "ASSIGN5", "p"),
        ("micro_ebr_after_enterq", "read", "ASSIGN5", "p"),
        ("micro_ebr_read_bare", "read", "ASSIGN5", "p"),
        ("micro_havoc", "read", "ASSIGN5", "p"),
        ("micro_hp_overwrite", "read", "ASSIGN5", "p"),
        ("micro_msqueue_hp_bare", "deq", "ASSIGN5", "next"),
        ("micro_publish", "publish", "ASSIGN5", "n"),
        ("micro_racy_stack", "pop", "ASSIGN2", "top"),
        ("micro_retire_unprotected", "steal", "ENTER", "o"),
        ("micro_shared_malloc", "op", "MALLOC", "X"),
        ("micro_swap_bare", "swap", "ENTER", "o"),
        ("micro_unprotected_read", "read", "ASSIGN5", "p"),
    ],
)
def test_failures(name, proc, rule, variable):
    report = smrtype.typecheck(corpus.load(name), _automaton(name))
    assert not report.ok
    assert report.verdict == "fail"
    failure = report.failure
    assert failure.point.startswith(f"{proc}:")
    assert (failure.rule, failure.variable) == (rule, variable)
    assert failure.command
    assert str(failure).startswith(failure.point)


def test_failure_inside_loop():
    # The failing read is the first command of the loop, so the loop head (its own
    # input) ends up ⊤ as well.
    prog = smrtype.parse_program(
        """
        shared X;
        proc read {
            local p;
            data v;
            loop {
                v = p->data;
                p = X;
            }
        }
        """
    )
    report = smrtype.typecheck(prog, load_automaton("hp2"))
    assert not report.ok
    failure = report.failure
    assert failure.point == "read:0.0"
    assert (failure.rule, failure.variable) == ("ASSIGN5", "p")
    assert failure.command == "v = p->data"


_FAILING_RULES = {
    "ASSIGN2",
    "ASSIGN3",
    "ASSIGN4",
    "ASSIGN5",
    "ASSUME1",
    "MALLOC",
    "ENTER",
}


@pytest.mark.parametrize("name", ["msqueue_hp", "msqueue_ebr"])
def test_deleted_annotations(name):
    prog = corpus.load(name)
    o = _automaton(name)
    flipped = 0
    for proc in prog.procedures:
        for _, com in iter_commands(proc.body):
            if not is_annotation(com.command) or isinstance(com.command, InvAngel):
                continue
            mutated = smrtype.tree_at(lambda p: com, prog, replace=Com(Skip()))
            report = smrtype.typecheck(mutated, o)
            if report.ok:
                continue
            flipped += 1
            failure = report.failure
            assert failure.rule in _FAILING_RULES, str(failure)
            assert failure.variable
            assert not failure.point.endswith(":exit")
            assert failure.command
    assert flipped > 0


def test_unknown_smr_function():
    prog = smrtype.parse_program(
        "shared X; proc op { enter leaveQ(); exit leaveQ; }"
    )
    with pytest.raises(smrtype.AutomatonError):
        smrtype.typecheck(prog, load_automaton("hp2"))


def test_points():
    prog = corpus.load("micro_protected_read")
    report = smrtype.typecheck(prog, load_automaton("hp2"))
    points = [p.point for p in report.points]
    assert "read:exit" in points
    assert all(p.split(":")[0] in ("init", "swap", "read") for p in points)
    env = report.env("read:exit")
    assert smrtype.S in env["p"].flags
    with pytest.raises(KeyError):
        report.env("read:nowhere")


def test_constraints():
    prog = preprocess(corpus.load("micro_loop_protect"))
    cs = smrtype.build_constraints(prog.procedure("read"))
    assert cs.entry != cs.exit
    assert all(0 <= c.source < cs.size for c in cs.constraints)
    assert all(0 <= c.target < cs.size for c in cs.constraints)
    for i in cs.dep(cs.entry):
        assert cs.constraints[i].source == cs.entry
    assert cs.req(cs.entry) == () or all(
        cs.constraints[i].target == cs.entry for i in cs.req(cs.entry)
    )


@pytest.mark.parametrize("name", ["treiber_hp", "msqueue_hp", "micro_hp_two_slots"])
def test_solve_order_independent(name, getkey):
    o = load_automaton("hp2")
    lattice = smrtype.TypeLattice(o)
    table = smrtype.SafeCallTable.from_automaton(o)
    prog = preprocess(corpus.load(name))
    for proc in prog.operations:
        cs = smrtype.build_constraints(proc)
        init = initial_environment(
            lattice, prog.pointer_variables(proc), prog.shared, proc.angels
        )
        fifo = smrtype.solve(cs, init, lattice, table)
        assert check_solution(cs, fifo, lattice, table)
        for _ in range(3):
            shuffled = smrtype.solve(cs, init, lattice, table, key=getkey())
            assert shuffled.values == fifo.values


def test_report_output():
    report = smrtype.typecheck(corpus.load("micro_inv_eq"), load_automaton("hp2"))
    out = json.loads(json.dumps(report.to_json()))
    assert out["verdict"] == "ok"
    assert "failure" not in out
    assert out["points"][-1]["point"] == "read:exit"
    text = report.format()
    assert text.startswith("typechecks")

    report = smrtype.typecheck(
        corpus.load("micro_unprotected_read"), load_automaton("hp2")
    )
    out = report.to_json()
    assert out["verdict"] == "fail"
    assert out["failure"]["rule"] == "ASSIGN5"
    assert report.format().startswith("type inference failed")


def _protected_reads(n):
    block = (
        "atomic { @inv active(X); p = X; enter protect0(p); exit protect0; } "
        "v = p->data; "
    )
    return f"shared X; proc read {{ local p; data v; loop {{ {block * n}}} }}"


@pytest.mark.parametrize("n", [1, 4, 16, 64])
def test_worklist_pops_linear(n):
    o = load_automaton("hp2")
    lattice = smrtype.TypeLattice(o)
    table = smrtype.SafeCallTable.from_automaton(o)
    prog = smrtype.parse_program(_protected_reads(n))
    assert smrtype.typecheck(prog, o).ok
    pre = preprocess(prog)
    proc = pre.procedure("read")
    cs = smrtype.build_constraints(proc)
    init = initial_environment(
        lattice, pre.pointer_variables(proc), pre.shared, proc.angels
    )
    solution = smrtype.solve(cs, init, lattice, table)
    assert solution.pops <= cs.size * chain_bound(lattice, len(init.names)) + 1
    # The loop head already holds the weakest types, so one pass suffices.
    assert solution.pops <= 2 * cs.size
