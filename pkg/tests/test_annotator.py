import pytest

import smrtype
from smrtype import corpus
from smrtype.annotator import (
    ActiveAfterRecheck,
    ActiveBeforeFailure,
    AngelTemplate,
    describe_insertions,
    tactics_for,
)
from smrtype.lang import DataLoad, erase_annotations, iter_commands
from smrtype.smr import load_automaton


def _results(result):
    return [entry["result"] for entry in result.log]


def test_tactics_for():
    assert tactics_for("Base*HP2") == (ActiveBeforeFailure(), ActiveAfterRecheck())
    assert tactics_for("Base*EBR") == (ActiveBeforeFailure(), AngelTemplate())
    assert tactics_for("Base") == (ActiveBeforeFailure(),)
    assert [t.name for t in tactics_for("HP2")] == [
        "active-before-failure",
        "active-after-recheck",
    ]


def test_repair_swap():
    prog = corpus.load("micro_swap_bare")
    result = smrtype.repair(prog, load_automaton("hp2"))
    assert result.ok
    assert _results(result) == ["accepted"]
    assert describe_insertions(prog, result.program) == ("swap: @inv active(o)",)
    assert smrtype.tree_equal(
        erase_annotations(result.program), erase_annotations(prog)
    )


def test_repair_ebr_read():
    prog = corpus.load("micro_ebr_read_bare")
    result = smrtype.repair(prog, load_automaton("ebr"))
    assert result.ok, result.report.format()
    # Claiming that p is active is refuted; an angel covers it.
    assert _results(result) == ["refuted", "accepted"]
    assert result.log[0]["trace"]
    read = result.program.procedure("read")
    assert read.angels == ("r",)
    inserted = describe_insertions(prog, result.program)
    assert "read: @inv angel r" in inserted
    assert "read: @inv active(r)" in inserted
    assert "read: @inv p in r" in inserted
    assert smrtype.tree_equal(
        erase_annotations(result.program), erase_annotations(prog)
    )


def test_repair_gives_up():
    prog = corpus.load("micro_unprotected_read")
    result = smrtype.repair(prog, load_automaton("hp2"))
    assert not result.ok
    assert _results(result) == ["refuted", "not applicable", "give up"]
    assert result.program is prog


def test_repair_keeps_typed_programs():
    prog = corpus.load("micro_protected_read")
    result = smrtype.repair(prog, load_automaton("hp2"))
    assert result.ok
    assert result.log == ()
    assert result.program is prog


def test_max_rounds():
    prog = corpus.load("micro_swap_bare")
    result = smrtype.repair(prog, load_automaton("hp2"), max_rounds=0)
    assert not result.ok
    assert result.log == ()


@pytest.mark.parametrize("tactic", [ActiveAfterRecheck(), AngelTemplate()])
def test_tactics_not_applicable(tactic):
    prog = corpus.load("micro_unprotected_read")
    report = smrtype.typecheck(prog, load_automaton("hp2"))
    assert tactic.propose(prog, report.failure) is None


def test_active_after_recheck():
    prog = smrtype.parse_program(
        """
        shared X;
        proc init { local n; n = malloc; X = n; }
        proc swap {
            local n, o;
            n = malloc;
            atomic { @inv active(X); o = X; X = n; enter retire(o); exit retire; }
        }
        proc read {
            local p;
            data v;
            p = X;
            enter protect0(p);
            exit protect0;
            atomic { @inv active(X); assume(p == X); }
            v = p->data;
        }
        """
    )
    body = prog.procedure("read").body
    path = next(p for p, c in iter_commands(body) if isinstance(c.command, DataLoad))
    failure = smrtype.Failure(f"read:{path}", "ASSIGN5", "p", "p not valid", "")
    candidate = ActiveAfterRecheck().propose(prog, failure)
    assert describe_insertions(prog, candidate) == ("read: @inv active(p)",)
    assert smrtype.tree_equal(
        erase_annotations(candidate), erase_annotations(prog)
    )
