import pytest

import smrtype
from smrtype import corpus
from smrtype.instrument import RETIRE_FLAG, RETIRE_PTR, failed, included
from smrtype.lang import (
    Assert,
    Choice,
    Enter,
    Exit,
    Havoc,
    InvActivePtr,
    is_annotation,
    iter_commands,
    parse_program,
    pretty_print,
)
from smrtype.tree import tree_size


def _commands(prog):
    return [c.command for proc in prog.procedures for _, c in iter_commands(proc.body)]


@pytest.mark.parametrize("name", corpus.names())
def test_no_smr_commands_left(name):
    prog = smrtype.instrument(corpus.load(name))
    for command in _commands(prog):
        assert not isinstance(command, (Enter, Exit))
        assert not is_annotation(command)
    assert all(proc.angels == () for proc in prog.procedures)


def test_ghost_variables():
    prog = corpus.load("micro_ebr_read")
    out = smrtype.instrument(prog)
    assert out.shared == prog.shared + (RETIRE_PTR,)
    assert out.shared_data == prog.shared_data + (RETIRE_FLAG,)
    read = out.procedure("read")
    assert read.pointers == ("p", "r")
    assert read.data == ("v", included("r"), failed("r"))
    assert any(isinstance(c, Havoc) and c.pointer == "r" for c in _commands(out))


def test_annotations_become_assertions():
    prog = corpus.load("micro_protected_read")
    out = smrtype.instrument(prog)
    active = sum(isinstance(c, InvActivePtr) for c in _commands(prog))
    asserts = [c for c in _commands(out) if isinstance(c, Assert)]
    assert len(asserts) == active
    for a in asserts:
        assert a.formula.op == "or"


def test_retire_guesses():
    prog = parse_program(
        "shared X; proc op { local p; p = malloc; enter retire(p); exit retire; }"
    )
    body = smrtype.instrument(prog).procedure("op").body
    assert tree_size(body, lambda s: isinstance(s, Choice)) == 1


@pytest.mark.parametrize("name", ["micro_ebr_read", "micro_swap_bare", "treiber_hp"])
def test_size_ratio(name):
    prog = corpus.load(name)
    ratio = smrtype.size_ratio(prog)
    assert ratio > 1
    assert ratio == smrtype.size_ratio(prog, smrtype.instrument(prog))


@pytest.mark.parametrize(
    "text",
    [
        "shared X, retire_ptr; proc op { skip; }",
        "shared X; shared data retire_flag; proc op { skip; }",
        "shared X; proc op { data included_r; @inv angel r; }",
    ],
)
def test_ghost_name_clash(text):
    with pytest.raises(ValueError):
        smrtype.instrument(parse_program(text))


@pytest.mark.parametrize("name", corpus.names())
def test_instrumented_programs_parse(name):
    out = smrtype.instrument(corpus.load(name))
    again = parse_program(pretty_print(out))
    assert again.shared == out.shared
    assert again.shared_data == out.shared_data
    for proc, other in zip(out.procedures, again.procedures):
        assert (proc.name, proc.pointers, proc.data) == (
            other.name,
            other.pointers,
            other.data,
        )
