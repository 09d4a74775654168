"""Compiles SMR commands and invariant annotations into assertions over ghost state,
so that a checker for garbage-collected semantics can discharge the annotations.

The instrumented program guesses the moment an address stops being active: a
retire may (or may not) record its argument in the shared ghost pointer
`retire_ptr` and raise the shared ghost flag `retire_flag`. Angels become ordinary
pointers, chosen by `havoc`; the thread-local flags `included_r` and `failed_r`
record whether a member of `r` was required and whether `r` was observed inactive.
"""

import logging
from fractions import Fraction

from .errors import ParseError
from .lang.ast import (
    Assert,
    AssumeEq,
    AssumeFormula,
    Choice,
    Com,
    DataConst,
    Enter,
    Exit,
    FlagTest,
    Formula,
    Havoc,
    InvActiveAngel,
    InvActivePtr,
    InvAngel,
    InvEq,
    InvMember,
    Loop,
    Procedure,
    Program,
    PtrAssign,
    PtrCompare,
    Seq,
    Skip,
    Stmt,
    choice,
    seq,
)
from .rules import RETIRE
from .tree import tree_size


logger = logging.getLogger(__name__)

RETIRE_PTR = "retire_ptr"
RETIRE_FLAG = "retire_flag"


def included(angel: str) -> str:
    return f"included_{angel}"


def failed(angel: str) -> str:
    return f"failed_{angel}"


def _skip() -> Stmt:
    return Com(Skip())


def _translate(command) -> Stmt:
    if isinstance(command, Enter):
        if command.func != RETIRE:
            return _skip()
        (q,) = command.pointers
        return choice(
            _skip(),
            seq(Com(PtrAssign(RETIRE_PTR, q)), Com(DataConst(RETIRE_FLAG, True))),
        )
    if isinstance(command, Exit):
        return _skip()
    if isinstance(command, InvEq):
        return Com(Assert(Formula("and", [PtrCompare(command.lhs, command.rhs)])))
    if isinstance(command, InvActivePtr):
        return Com(
            Assert(
                Formula(
                    "or",
                    [
                        FlagTest(RETIRE_FLAG, negated=True),
                        PtrCompare(RETIRE_PTR, command.pointer, equal=False),
                    ],
                )
            )
        )
    if isinstance(command, InvAngel):
        r = command.angel
        return seq(
            Com(Havoc(r)),
            Com(DataConst(included(r), False)),
            Com(DataConst(failed(r), False)),
        )
    if isinstance(command, InvMember):
        r = command.angel
        return choice(
            _skip(),
            seq(
                Com(AssumeEq(command.pointer, r)),
                Com(Assert(Formula("and", [FlagTest(failed(r), negated=True)]))),
                Com(DataConst(included(r), True)),
            ),
        )
    if isinstance(command, InvActiveAngel):
        r = command.angel
        return choice(
            _skip(),
            seq(
                Com(
                    AssumeFormula(
                        Formula(
                            "and", [FlagTest(RETIRE_FLAG), PtrCompare(RETIRE_PTR, r)]
                        )
                    )
                ),
                Com(Assert(Formula("and", [FlagTest(included(r), negated=True)]))),
                Com(DataConst(failed(r), True)),
            ),
        )
    return Com(command)


def _instrument(stmt: Stmt) -> Stmt:
    if isinstance(stmt, Com):
        return _translate(stmt.command)
    if isinstance(stmt, Seq):
        return Seq(_instrument(stmt.first), _instrument(stmt.second))
    if isinstance(stmt, Choice):
        return Choice(_instrument(stmt.left), _instrument(stmt.right))
    if isinstance(stmt, Loop):
        return Loop(_instrument(stmt.body))
    raise ValueError(f"Unknown statement {stmt}.")


def instrument(prog: Program) -> Program:
    """The instrumented program: `enter`/`exit` and `@inv` annotations are replaced
    row by row, everything else is kept in place.

    **Arguments:**

    - `prog`: a well-formed program.

    **Returns:**

    A program over the extended vocabulary (`assert`, `havoc`, ghost variables),
    without SMR commands, annotations or angels.

    **Raises:**

    `ParseError` if a ghost name clashes with a declared variable.
    """
    taken = set(prog.shared) | set(prog.shared_data)
    for proc in prog.procedures:
        taken |= set(proc.pointers) | set(proc.data) | set(proc.angels)
    for ghost in (RETIRE_PTR, RETIRE_FLAG):
        if ghost in taken:
            raise ParseError(f"Variable {ghost} is reserved for instrumentation.")
    procedures = []
    for proc in prog.procedures:
        flags = []
        for r in proc.angels:
            for ghost in (included(r), failed(r)):
                if ghost in taken:
                    raise ParseError(
                        f"Variable {ghost} is reserved for instrumenting angel {r}."
                    )
                flags.append(ghost)
        procedures.append(
            Procedure(
                proc.name,
                proc.pointers + proc.angels,
                proc.data + tuple(flags),
                (),
                _instrument(proc.body),
            )
        )
    out = Program(
        prog.struct,
        prog.shared + (RETIRE_PTR,),
        tuple(procedures),
        prog.shared_data + (RETIRE_FLAG,),
    )
    logger.debug("instrumented program, size ratio %s", size_ratio(prog, out))
    return out


def _statements(prog: Program) -> int:
    return tree_size(prog, lambda x: isinstance(x, Stmt))


def size_ratio(prog: Program, instrumented: Program = None) -> Fraction:
    """`|F(prog)| / |prog|`, counting statement nodes."""
    if instrumented is None:
        instrumented = instrument(prog)
    return Fraction(_statements(instrumented), _statements(prog))
