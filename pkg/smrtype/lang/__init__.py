from .ast import (
    ANNOTATIONS,
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
    Procedure,
    Program,
    PtrAssign,
    PtrCompare,
    PtrLoad,
    PtrStore,
    Seq,
    Skip,
    Stmt,
    atomic,
    atomic_body,
    choice,
    dereferenced,
    is_annotation,
    seq,
    variables,
)
from .flow import ControlFlow, Edge, control_flow
from .parser import parse_program
from .printer import format_command, format_stmt, pretty_print
from .transform import (
    erase_annotations,
    iter_commands,
    locate,
    preprocess,
    real_commands,
    thread_index,
)
