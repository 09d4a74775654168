"""Abstract syntax of the core concurrent language.

Every node is a [`smrtype.Module`][]. In commands, the dynamic (PyTree) leaves are
exactly the variable names the command mentions; function names, operator names and
boolean attributes are static fields. So `jax.tree_util.tree_leaves(command)` lists
the variables of a command and `jax.tree_util.tree_map` renames them.
"""

from typing import Optional, Tuple

import jax

from ..module import Module, static_field


class Command(Module):
    pass


class PtrAssign(Command):
    lhs: str
    rhs: str


class PtrLoad(Command):
    """`lhs = rhs->next`"""

    lhs: str
    rhs: str


class PtrStore(Command):
    """`lhs->next = rhs`"""

    lhs: str
    rhs: str


class DataLoad(Command):
    """`lhs = rhs->data`"""

    lhs: str
    rhs: str


class DataStore(Command):
    """`lhs->data = rhs`"""

    lhs: str
    rhs: str


class DataOp(Command):
    lhs: str
    op: str = static_field()
    args: Tuple[str, ...] = ()


class DataConst(Command):
    lhs: str
    value: bool = static_field()


class Malloc(Command):
    lhs: str


class AssumeEq(Command):
    lhs: str
    rhs: str


class AssumeNeq(Command):
    lhs: str
    rhs: str


class AssumePred(Command):
    """An uninterpreted data condition. `pred == "*"` is plain nondeterminism."""

    pred: str = static_field()
    args: Tuple[str, ...] = ()


class BeginAtomic(Command):
    pass


class EndAtomic(Command):
    pass


class Skip(Command):
    pass


class Enter(Command):
    func: str = static_field()
    pointers: Tuple[str, ...] = ()
    data: Tuple[str, ...] = ()


class Exit(Command):
    func: str = static_field()


class InvAngel(Command):
    angel: str


class InvEq(Command):
    lhs: str
    rhs: str


class InvMember(Command):
    pointer: str
    angel: str


class InvActivePtr(Command):
    pointer: str


class InvActiveAngel(Command):
    angel: str


# Vocabulary of instrumented programs.


class PtrCompare(Module):
    lhs: str
    rhs: str
    equal: bool = static_field(default=True)


class FlagTest(Module):
    var: str
    negated: bool = static_field(default=False)


class Formula(Module):
    """A conjunction (`op == "and"`) or disjunction (`op == "or"`) of atoms."""

    op: str = static_field()
    atoms: Tuple[Module, ...]

    def __init__(self, op, atoms):
        if op not in ("and", "or"):
            raise ValueError(f"Unknown connective {op}.")
        if len(atoms) == 0:
            raise ValueError("A formula needs at least one atom.")
        self.op = op
        self.atoms = tuple(atoms)


class Assert(Command):
    formula: Formula


class AssumeFormula(Command):
    formula: Formula


class Havoc(Command):
    pointer: str


ANNOTATIONS = (InvAngel, InvEq, InvMember, InvActivePtr, InvActiveAngel)
SMR_COMMANDS = (Enter, Exit)
# Commands the type rules never reject and that never touch a pointer.
SILENT = (Skip, BeginAtomic, EndAtomic)


def is_annotation(command: Command) -> bool:
    return isinstance(command, ANNOTATIONS)


def variables(command: Command) -> Tuple[str, ...]:
    """The variables mentioned by `command`, in field order."""
    return tuple(jax.tree_util.tree_leaves(command))


def dereferenced(command: Command) -> Optional[str]:
    """The pointer whose selector `command` reads or writes, if any."""
    if isinstance(command, (PtrLoad, DataLoad)):
        return command.rhs
    if isinstance(command, (PtrStore, DataStore)):
        return command.lhs
    return None


class Stmt(Module):
    pass


class Seq(Stmt):
    first: Stmt
    second: Stmt


class Choice(Stmt):
    left: Stmt
    right: Stmt


class Loop(Stmt):
    body: Stmt


class Com(Stmt):
    command: Command


def seq(*stmts: Stmt) -> Stmt:
    """Right-nested sequential composition of one or more statements."""
    if len(stmts) == 0:
        raise ValueError("Cannot sequence zero statements.")
    out = stmts[-1]
    for stmt in reversed(stmts[:-1]):
        out = Seq(stmt, out)
    return out


def choice(*stmts: Stmt) -> Stmt:
    """Right-nested nondeterministic choice between one or more statements."""
    if len(stmts) == 0:
        raise ValueError("Cannot choose between zero statements.")
    out = stmts[-1]
    for stmt in reversed(stmts[:-1]):
        out = Choice(stmt, out)
    return out


def atomic(body: Stmt) -> Stmt:
    return Seq(Com(BeginAtomic()), Seq(body, Com(EndAtomic())))


def atomic_body(stmt: Stmt) -> Optional[Stmt]:
    """The body `b` if `stmt` is exactly `atomic(b)`, else `None`."""
    if (
        isinstance(stmt, Seq)
        and isinstance(stmt.first, Com)
        and isinstance(stmt.first.command, BeginAtomic)
        and isinstance(stmt.second, Seq)
        and isinstance(stmt.second.second, Com)
        and isinstance(stmt.second.second.command, EndAtomic)
    ):
        return stmt.second.first
    return None


class Procedure(Module):
    name: str = static_field()
    pointers: Tuple[str, ...]
    data: Tuple[str, ...]
    angels: Tuple[str, ...]
    body: Stmt


class Program(Module):
    struct: str = static_field()
    shared: Tuple[str, ...]
    procedures: Tuple[Procedure, ...]
    shared_data: Tuple[str, ...] = ()

    def procedure(self, name: str) -> Procedure:
        for proc in self.procedures:
            if proc.name == name:
                return proc
        raise ValueError(f"No procedure named {name}.")

    @property
    def init(self) -> Optional[Procedure]:
        for proc in self.procedures:
            if proc.name == "init":
                return proc
        return None

    @property
    def operations(self) -> Tuple[Procedure, ...]:
        """Procedures that threads invoke; everything except `init`."""
        return tuple(proc for proc in self.procedures if proc.name != "init")

    def pointer_variables(self, proc: Procedure) -> Tuple[str, ...]:
        """Shared pointers, then the procedure's local pointers and angels."""
        return self.shared + proc.pointers + proc.angels
