from typing import FrozenSet, Iterator, Optional, Tuple

import jax

from .ast import (
    BeginAtomic,
    Choice,
    Com,
    Command,
    EndAtomic,
    Enter,
    Exit,
    InvActiveAngel,
    InvAngel,
    InvMember,
    Loop,
    Procedure,
    Program,
    Seq,
    Skip,
    Stmt,
    atomic,
    atomic_body,
    is_annotation,
    seq,
)


# Paths

_CHILDREN = {Seq: ("first", "second"), Choice: ("left", "right"), Loop: ("body",)}


def children(stmt: Stmt) -> Tuple[Stmt, ...]:
    return tuple(getattr(stmt, name) for name in _CHILDREN.get(type(stmt), ()))


def iter_commands(stmt: Stmt, path: str = "") -> Iterator[Tuple[str, Com]]:
    """Yields `(path, Com)` for every primitive command of `stmt` in program order
    (left to right). A path is the dot-separated list of child indices from `stmt`.
    """
    if isinstance(stmt, Com):
        yield path, stmt
        return
    for i, child in enumerate(children(stmt)):
        yield from iter_commands(child, f"{path}.{i}" if path else str(i))


def locate(stmt: Stmt, path: str) -> Stmt:
    """The sub-statement of `stmt` at `path`."""
    if path:
        for index in path.split("."):
            stmt = children(stmt)[int(index)]
    return stmt


def is_silent(command: Command) -> bool:
    return isinstance(command, (Skip, BeginAtomic, EndAtomic))


def real_commands(stmt: Stmt) -> Tuple[Tuple[str, Com], ...]:
    """Primitive commands other than `skip`/`beginAtomic`/`endAtomic`, in program
    order. Preprocessing only adds silent commands, so the n-th real command of a
    procedure is the n-th real command of its preprocessed version."""
    return tuple(
        (path, com) for path, com in iter_commands(stmt) if not is_silent(com.command)
    )


# Well-formedness


def _atomic_state(stmt: Stmt, inside: bool) -> bool:
    if isinstance(stmt, Com):
        if isinstance(stmt.command, BeginAtomic):
            if inside:
                raise ValueError("nested atomic block")
            return True
        if isinstance(stmt.command, EndAtomic):
            if not inside:
                raise ValueError("endAtomic outside of an atomic block")
            return False
        return inside
    if isinstance(stmt, Seq):
        return _atomic_state(stmt.second, _atomic_state(stmt.first, inside))
    if isinstance(stmt, Choice):
        left = _atomic_state(stmt.left, inside)
        if _atomic_state(stmt.right, inside) != left:
            raise ValueError("branches of a choice leave atomic blocks differently")
        return left
    if _atomic_state(stmt.body, inside) != inside:
        raise ValueError("a loop body must not open or close an atomic block")
    return inside


def check_atomic_balanced(proc: Procedure):
    if _atomic_state(proc.body, False):
        raise ValueError("atomic block is never closed")


def _allocated(stmt: Stmt, before: FrozenSet[str], check: bool) -> FrozenSet[str]:
    if isinstance(stmt, Com):
        command = stmt.command
        if isinstance(command, InvAngel):
            return before | {command.angel}
        if check and isinstance(command, (InvMember, InvActiveAngel)):
            if command.angel not in before:
                raise ValueError(
                    f"angel {command.angel} is used before `@inv angel {command.angel}`"
                )
        return before
    if isinstance(stmt, Seq):
        middle = _allocated(stmt.first, before, check)
        return _allocated(stmt.second, middle, check)
    if isinstance(stmt, Choice):
        return _allocated(stmt.left, before, check) & _allocated(
            stmt.right, before, check
        )
    # Must-allocated at the loop head: greatest fixpoint of X = before ∩ body(X).
    head = before
    while True:
        new_head = before & _allocated(stmt.body, head, False)
        if new_head == head:
            break
        head = new_head
    _allocated(stmt.body, head, check)
    return head


def check_angels_allocated(proc: Procedure):
    """Every angel use must be dominated by an allocation `@inv angel r`."""
    _allocated(proc.body, frozenset(), True)


# Transformations


def _is_skip(stmt: Stmt) -> bool:
    return isinstance(stmt, Com) and isinstance(stmt.command, Skip)


def _skip_wrapped(stmt: Stmt) -> bool:
    return (
        isinstance(stmt, Seq)
        and isinstance(stmt.first, Seq)
        and _is_skip(stmt.first.first)
        and isinstance(stmt.first.second, Com)
        and _is_skip(stmt.second)
    )


def _wrap(com: Com) -> Stmt:
    return Seq(Seq(Com(Skip()), com), Com(Skip()))


def _preprocess(stmt: Stmt, inside: bool) -> Tuple[Stmt, bool]:
    if _skip_wrapped(stmt):
        return (stmt if inside else atomic(stmt)), inside
    if isinstance(stmt, Com):
        command = stmt.command
        if isinstance(command, BeginAtomic):
            return stmt, True
        if isinstance(command, EndAtomic):
            return stmt, False
        if inside:
            return _wrap(stmt), True
        return atomic(_wrap(stmt)), False
    if isinstance(stmt, Seq):
        first, middle = _preprocess(stmt.first, inside)
        second, after = _preprocess(stmt.second, middle)
        return Seq(first, second), after
    if isinstance(stmt, Choice):
        left, after = _preprocess(stmt.left, inside)
        right, _ = _preprocess(stmt.right, inside)
        return Choice(left, right), after
    body, _ = _preprocess(stmt.body, inside)
    return Loop(body), inside


def preprocess(prog: Program) -> Program:
    """Makes every primitive command atomic and isolates it between two `skip`s.

    Commands outside of an atomic block become `atomic { (skip; com); skip }`;
    commands inside one become `(skip; com); skip`. The second form keeps the
    constraint variables of different branches apart. Idempotent.
    """
    procedures = []
    for proc in prog.procedures:
        body, _ = _preprocess(proc.body, False)
        procedures.append(
            Procedure(proc.name, proc.pointers, proc.data, proc.angels, body)
        )
    return Program(prog.struct, prog.shared, tuple(procedures), prog.shared_data)


def thread_index(prog: Program, t) -> Program:
    """Renames every non-shared variable `x` to `x_t`."""
    shared = set(prog.shared) | set(prog.shared_data)
    return jax.tree_util.tree_map(
        lambda name: name if name in shared else f"{name}_{t}", prog
    )


def _is_call(stmt: Stmt) -> bool:
    # `enter f(...); exit f`: a single SMR call, atomic or not
    return (
        isinstance(stmt, Seq)
        and isinstance(stmt.first, Com)
        and isinstance(stmt.first.command, Enter)
        and isinstance(stmt.second, Com)
        and isinstance(stmt.second.command, Exit)
        and stmt.first.command.func == stmt.second.command.func
    )


def _erase(stmt: Stmt) -> Optional[Stmt]:
    body = atomic_body(stmt)
    if body is not None:
        # atomic blocks around a single command (or nothing) are normalised away
        body = _erase(body)
        if body is None or isinstance(body, Com) or _is_call(body):
            return body
        return atomic(body)
    if isinstance(stmt, Com):
        return None if is_annotation(stmt.command) else stmt
    if isinstance(stmt, Seq):
        first, second = _erase(stmt.first), _erase(stmt.second)
        if first is None:
            return second
        if second is None:
            return first
        return Seq(first, second)
    if isinstance(stmt, Choice):
        left, right = _erase(stmt.left), _erase(stmt.right)
        return Choice(left or Com(Skip()), right or Com(Skip()))
    body = _erase(stmt.body)
    return Loop(body or Com(Skip()))


def _sequence(stmt: Stmt) -> Iterator[Stmt]:
    if isinstance(stmt, Seq):
        yield from _sequence(stmt.first)
        yield from _sequence(stmt.second)
    else:
        yield stmt


def _reassociate(stmt: Stmt) -> Stmt:
    if isinstance(stmt, Seq):
        return seq(*(_reassociate(s) for s in _sequence(stmt)))
    if isinstance(stmt, Choice):
        return Choice(_reassociate(stmt.left), _reassociate(stmt.right))
    if isinstance(stmt, Loop):
        return Loop(_reassociate(stmt.body))
    return stmt


def erase_annotations(prog: Program) -> Program:
    """Drops every `@inv` annotation and every angel declaration, unwraps atomic
    blocks that are left with a single command or a single SMR call, and nests
    sequences to the right. Two programs with the same erasure execute the same."""
    procedures = []
    for proc in prog.procedures:
        body = _reassociate(_erase(proc.body) or Com(Skip()))
        procedures.append(Procedure(proc.name, proc.pointers, proc.data, (), body))
    return Program(prog.struct, prog.shared, tuple(procedures), prog.shared_data)
