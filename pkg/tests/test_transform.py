import jax
import pytest

import smrtype
from smrtype import corpus
from smrtype.lang import (
    BeginAtomic,
    Com,
    EndAtomic,
    Loop,
    Malloc,
    PtrAssign,
    Skip,
    control_flow,
    erase_annotations,
    is_annotation,
    iter_commands,
    locate,
    parse_program,
    preprocess,
    real_commands,
    seq,
    thread_index,
)


@pytest.mark.parametrize("name", corpus.names())
def test_preprocess_idempotent(name):
    prog = corpus.load(name)
    once = preprocess(prog)
    assert smrtype.tree_equal(preprocess(once), once)


@pytest.mark.parametrize("name", corpus.names())
def test_preprocess_keeps_real_commands(name):
    prog = corpus.load(name)
    pre = preprocess(prog)
    for proc, pre_proc in zip(prog.procedures, pre.procedures):
        before = [c.command for _, c in real_commands(proc.body)]
        after = [c.command for _, c in real_commands(pre_proc.body)]
        assert before == after


def test_preprocess_atomicity():
    prog = parse_program("shared X; proc op { local p; p = X; atomic { p = X; } }")
    body = preprocess(prog).procedure("op").body
    commands = [c.command for _, c in iter_commands(body)]
    # Every real command sits between `skip`s inside its own or the enclosing block.
    assert commands == [
        BeginAtomic(),
        Skip(),
        PtrAssign("p", "X"),
        Skip(),
        EndAtomic(),
        BeginAtomic(),
        Skip(),
        PtrAssign("p", "X"),
        Skip(),
        EndAtomic(),
    ]


def test_paths():
    body = seq(Com(Malloc("p")), Loop(Com(Skip())), Com(PtrAssign("q", "p")))
    paths = [path for path, _ in iter_commands(body)]
    assert paths == ["0", "1.0.0", "1.1"]
    assert locate(body, "1.1") == Com(PtrAssign("q", "p"))
    assert locate(body, "1.0") == Loop(Com(Skip()))
    assert locate(body, "") == body


def test_erasure_normalises_atomic_blocks():
    annotated = corpus.load("micro_ebr_read")
    bare = corpus.load("micro_ebr_read_bare")
    assert not smrtype.tree_equal(annotated, bare)
    assert smrtype.tree_equal(erase_annotations(annotated), erase_annotations(bare))

    annotated = corpus.load("micro_protected_read")
    bare = corpus.load("micro_swap_bare")
    assert smrtype.tree_equal(erase_annotations(annotated), erase_annotations(bare))


@pytest.mark.parametrize("name", corpus.names())
def test_erasure(name):
    erased = erase_annotations(corpus.load(name))
    for proc in erased.procedures:
        assert proc.angels == ()
        assert not any(is_annotation(c.command) for _, c in iter_commands(proc.body))
    assert smrtype.tree_equal(erase_annotations(erased), erased)


def test_thread_index():
    prog = corpus.load("micro_protected_read")
    renamed = thread_index(prog, 1)
    assert renamed.shared == prog.shared
    read = renamed.procedure("read")
    assert read.pointers == ("p_1",)
    assert read.data == ("v_1",)
    leaves = set(jax.tree_util.tree_leaves(read.body))
    assert leaves == {"X", "p_1", "v_1"}


def test_control_flow():
    flow = control_flow(seq(Com(Malloc("p")), Com(Skip())))
    assert (flow.entry, flow.exit, flow.size) == (0, 1, 3)
    assert [(e.source, e.target, e.command) for e in flow.edges] == [
        (0, 2, Malloc("p")),
        (2, 1, Skip()),
    ]

    loop = Loop(Com(Skip()))
    flow = control_flow(loop)
    assert flow.size == 2
    assert [(e.source, e.target, e.command) for e in flow.edges] == [
        (1, 1, Skip()),
        (0, 1, None),
    ]
    flow = control_flow(loop, exact_loops=True)
    assert flow.size == 3
    assert [(e.source, e.target, e.command) for e in flow.edges] == [
        (0, 2, None),
        (2, 2, Skip()),
        (2, 1, None),
    ]
