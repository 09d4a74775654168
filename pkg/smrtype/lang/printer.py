from typing import List

from .ast import (
    Assert,
    AssumeEq,
    AssumeFormula,
    AssumeNeq,
    AssumePred,
    BeginAtomic,
    Choice,
    Com,
    Command,
    DataConst,
    DataLoad,
    DataOp,
    DataStore,
    EndAtomic,
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
    Malloc,
    Program,
    PtrAssign,
    PtrCompare,
    PtrLoad,
    PtrStore,
    Seq,
    Skip,
    Stmt,
    atomic_body,
)


_INDENT = "    "


def format_formula(formula: Formula) -> str:
    atoms = []
    for atom in formula.atoms:
        if isinstance(atom, PtrCompare):
            atoms.append(f"{atom.lhs} {'==' if atom.equal else '!='} {atom.rhs}")
        elif isinstance(atom, FlagTest):
            atoms.append(f"!{atom.var}" if atom.negated else atom.var)
        else:
            raise ValueError(f"Unknown formula atom {atom}.")
    return (" && " if formula.op == "and" else " || ").join(atoms)


def format_command(command: Command) -> str:
    """The concrete syntax of a single command, without the trailing `;`."""
    if isinstance(command, PtrAssign):
        return f"{command.lhs} = {command.rhs}"
    if isinstance(command, PtrLoad):
        return f"{command.lhs} = {command.rhs}->next"
    if isinstance(command, PtrStore):
        return f"{command.lhs}->next = {command.rhs}"
    if isinstance(command, DataLoad):
        return f"{command.lhs} = {command.rhs}->data"
    if isinstance(command, DataStore):
        return f"{command.lhs}->data = {command.rhs}"
    if isinstance(command, DataOp):
        if command.op == "id" and len(command.args) == 1:
            return f"{command.lhs} = {command.args[0]}"
        return f"{command.lhs} = {command.op}({', '.join(command.args)})"
    if isinstance(command, DataConst):
        return f"{command.lhs} = {'true' if command.value else 'false'}"
    if isinstance(command, Malloc):
        return f"{command.lhs} = malloc"
    if isinstance(command, AssumeEq):
        return f"assume({command.lhs} == {command.rhs})"
    if isinstance(command, AssumeNeq):
        return f"assume({command.lhs} != {command.rhs})"
    if isinstance(command, AssumePred):
        if command.pred == "*":
            return "assume(*)"
        return f"assume({command.pred}({', '.join(command.args)}))"
    if isinstance(command, AssumeFormula):
        return f"assume({format_formula(command.formula)})"
    if isinstance(command, Assert):
        return f"assert({format_formula(command.formula)})"
    if isinstance(command, Havoc):
        return f"havoc({command.pointer})"
    if isinstance(command, BeginAtomic):
        return "beginAtomic"
    if isinstance(command, EndAtomic):
        return "endAtomic"
    if isinstance(command, Skip):
        return "skip"
    if isinstance(command, Enter):
        return f"enter {command.func}({', '.join(command.pointers + command.data)})"
    if isinstance(command, Exit):
        return f"exit {command.func}"
    if isinstance(command, InvAngel):
        return f"@inv angel {command.angel}"
    if isinstance(command, InvEq):
        return f"@inv {command.lhs} == {command.rhs}"
    if isinstance(command, InvMember):
        return f"@inv {command.pointer} in {command.angel}"
    if isinstance(command, InvActivePtr):
        return f"@inv active({command.pointer})"
    if isinstance(command, InvActiveAngel):
        return f"@inv active({command.angel})"
    raise ValueError(f"Cannot print command {command}.")


def _items(stmt: Stmt) -> List[Stmt]:
    # The right spine of a sequence. An atomic block ends the spine so that it is
    # printed as `atomic { }`.
    items = []
    while isinstance(stmt, Seq) and atomic_body(stmt) is None:
        items.append(stmt.first)
        stmt = stmt.second
    items.append(stmt)
    return items


def _print_block(stmt: Stmt, depth: int, out: List[str]):
    for item in _items(stmt):
        _print_item(item, depth, out)


def _print_item(stmt: Stmt, depth: int, out: List[str]):
    pad = _INDENT * depth
    body = atomic_body(stmt)
    if body is not None:
        out.append(f"{pad}atomic {{")
        _print_block(body, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(stmt, Seq):
        # A left-nested sequence.
        out.append(f"{pad}{{")
        _print_block(stmt, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(stmt, Choice):
        branches = []
        while isinstance(stmt, Choice):
            branches.append(stmt.left)
            stmt = stmt.right
        branches.append(stmt)
        out.append(f"{pad}choose {{")
        for i, branch in enumerate(branches):
            if i > 0:
                out.append(f"{pad}}} or {{")
            _print_block(branch, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(stmt, Loop):
        out.append(f"{pad}loop {{")
        _print_block(stmt.body, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(stmt, Com):
        out.append(f"{pad}{format_command(stmt.command)};")
    else:
        raise ValueError(f"Cannot print statement {stmt}.")


def format_stmt(stmt: Stmt, depth: int = 0) -> str:
    out = []
    _print_block(stmt, depth, out)
    return "\n".join(out)


def pretty_print(prog: Program) -> str:
    """Prints `prog` in the concrete syntax accepted by
    [`smrtype.lang.parse_program`][]; parsing the output gives back an equal
    program."""
    out = [f"struct {prog.struct} {{ data; next; }}"]
    if prog.shared:
        out.append(f"shared {', '.join(prog.shared)};")
    if prog.shared_data:
        out.append(f"shared data {', '.join(prog.shared_data)};")
    for proc in prog.procedures:
        out.append("")
        out.append(f"proc {proc.name} {{")
        for keyword, names in (
            ("local", proc.pointers),
            ("data", proc.data),
            ("angel", proc.angels),
        ):
            if names:
                out.append(f"{_INDENT}{keyword} {', '.join(names)};")
        _print_block(proc.body, 1, out)
        out.append("}")
    return "\n".join(out) + "\n"
