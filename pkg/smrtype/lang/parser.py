import logging
from typing import Dict, List, Tuple

from ..errors import ParseError
from .ast import (
    Assert,
    AssumeEq,
    AssumeFormula,
    AssumeNeq,
    AssumePred,
    BeginAtomic,
    Choice,
    Com,
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
    Skip,
    Stmt,
    atomic,
    choice,
    seq,
)
from .lexer import Token, TokenStream
from .transform import check_angels_allocated, check_atomic_balanced


logger = logging.getLogger(__name__)

_SELECTORS = ("data", "next")
_KEYWORDS = {
    "struct",
    "shared",
    "proc",
    "local",
    "data",
    "angel",
    "atomic",
    "loop",
    "choose",
    "or",
    "while",
    "if",
    "else",
    "assume",
    "assert",
    "havoc",
    "enter",
    "exit",
    "malloc",
    "skip",
    "true",
    "false",
    "beginAtomic",
    "endAtomic",
}

# Variable roles.
SHARED = "shared pointer"
SHARED_DATA = "shared data"
LOCAL = "local pointer"
DATA = "local data"
ANGEL = "angel"
_POINTERS = (SHARED, LOCAL)
# A shared pointer named `null` is never written nor retired; comparing with it is
# not an equality assumption between pointers.
NULL = "null"
_DATA = (SHARED_DATA, DATA)


class _ProgramParser:
    def __init__(self, text: str):
        self.stream = TokenStream(text)
        self.globals: Dict[str, str] = {}
        self.arities: Dict[str, Tuple[int, int]] = {}
        self.scope: Dict[str, str] = {}
        self.angels: List[str] = []

    # Declarations

    def program(self) -> Program:
        s = self.stream
        struct = "Node"
        if s.accept("struct"):
            struct = self._name("struct name").text
            s.expect("{")
            selectors = []
            while not s.at("}"):
                selectors.append(s.identifier("selector"))
                s.expect(";")
            s.expect("}")
            s.accept(";")
            names = sorted(tok.text for tok in selectors)
            if names != sorted(_SELECTORS):
                s.fail(
                    "a struct has exactly the selectors `data` and `next`",
                    selectors[0] if selectors else None,
                )
        shared, shared_data = [], []
        while s.at("shared"):
            s.next()
            if s.at("angel"):
                s.fail("angels are local; a shared angel is not allowed")
            role = SHARED
            if s.accept("data"):
                role = SHARED_DATA
            for token in s.identifiers("variable"):
                self._declare(self.globals, token, role)
                (shared if role == SHARED else shared_data).append(token.text)
            s.expect(";")
        procedures = []
        while s.at("proc"):
            procedures.append(self.procedure())
        if s.peek.kind != "eof":
            s.fail(f"expected `proc`, found {s.peek.text!r}")
        names = [proc.name for proc in procedures]
        for name in names:
            if names.count(name) > 1:
                raise ParseError(f"procedure {name} is defined twice")
        return Program(
            struct=struct,
            shared=tuple(shared),
            procedures=tuple(procedures),
            shared_data=tuple(shared_data),
        )

    def procedure(self) -> Procedure:
        s = self.stream
        s.expect("proc")
        name = self._name("procedure name").text
        s.expect("{")
        self.scope = dict(self.globals)
        self.angels = []
        pointers, data = [], []
        while s.at("local", "data", "angel"):
            keyword = s.next().text
            role = {"local": LOCAL, "data": DATA, "angel": ANGEL}[keyword]
            for token in s.identifiers("variable"):
                self._declare(self.scope, token, role)
                {LOCAL: pointers, DATA: data, ANGEL: self.angels}[role].append(
                    token.text
                )
            s.expect(";")
        if s.at("}"):
            body = Com(Skip())
        else:
            body = self.statements("}")
        s.expect("}")
        proc = Procedure(
            name=name,
            pointers=tuple(pointers),
            data=tuple(data),
            angels=tuple(self.angels),
            body=body,
        )
        try:
            check_angels_allocated(proc)
            check_atomic_balanced(proc)
        except ValueError as e:
            raise ParseError(f"in procedure {name}: {e}") from e
        return proc

    def _declare(self, scope, token: Token, role: str):
        if token.text in _KEYWORDS:
            self.stream.fail(f"{token.text!r} is a keyword", token)
        if token.text in scope:
            self.stream.fail(f"variable {token.text} is declared twice", token)
        scope[token.text] = role

    def _name(self, what):
        token = self.stream.identifier(what)
        if token.text in _KEYWORDS:
            self.stream.fail(f"{token.text!r} is a keyword", token)
        return token

    # Statements

    def statements(self, terminator: str) -> Stmt:
        stmts = []
        while not self.stream.at(terminator) and self.stream.peek.kind != "eof":
            stmts.append(self.statement())
        if len(stmts) == 0:
            self.stream.fail("expected a statement; blocks must not be empty")
        return seq(*stmts)

    def block(self) -> Stmt:
        self.stream.expect("{")
        body = self.statements("}")
        self.stream.expect("}")
        return body

    def statement(self) -> Stmt:
        s = self.stream
        if s.at("{"):
            return self.block()
        if s.accept("atomic"):
            return atomic(self.block())
        if s.accept("loop"):
            return Loop(self.block())
        if s.accept("choose"):
            branches = [self.block()]
            s.expect("or")
            branches.append(self.block())
            while s.accept("or"):
                branches.append(self.block())
            return choice(*branches)
        if s.accept("while"):
            s.expect("(")
            positive, negative = self.condition()
            s.expect(")")
            body = self.block()
            return seq(Loop(seq(Com(positive), body)), Com(negative))
        if s.accept("if"):
            s.expect("(")
            positive, negative = self.condition()
            s.expect(")")
            then = self.block()
            if s.accept("else"):
                otherwise = seq(Com(negative), self.block())
            else:
                otherwise = Com(negative)
            return Choice(seq(Com(positive), then), otherwise)
        token = s.peek
        if s.at("@"):
            command = self.annotation()
        else:
            command = self.command()
        if NULL in _written(command) and self.scope.get(NULL) == SHARED:
            s.fail(f"{NULL} is never written nor retired", token)
        s.expect(";")
        return Com(command)

    def condition(self):
        s = self.stream
        if s.accept("*"):
            return AssumePred("*"), AssumePred("*")
        lhs = self._use(_POINTERS + _DATA)
        if s.at("==", "!="):
            op = s.next().text
            if self.scope[lhs] not in _POINTERS:
                s.fail("only pointer (in)equalities are conditions; use `*`")
            rhs = self._use(_POINTERS)
            if NULL in (lhs, rhs):
                equal = op == "=="
                return _null_test(lhs, rhs, equal), _null_test(lhs, rhs, not equal)
            if op == "==":
                return AssumeEq(lhs, rhs), AssumeNeq(lhs, rhs)
            return AssumeNeq(lhs, rhs), AssumeEq(lhs, rhs)
        s.fail("expected `==` or `!=`")

    def annotation(self):
        s = self.stream
        s.expect("@")
        token = s.identifier()
        if token.text != "inv":
            s.fail("expected `@inv`", token)
        if s.accept("angel"):
            token = s.identifier("angel")
            if token.text not in self.scope:
                self._declare(self.scope, token, ANGEL)
                self.angels.append(token.text)
            elif self.scope[token.text] != ANGEL:
                s.fail(f"{token.text} is not an angel", token)
            return InvAngel(token.text)
        if s.accept("active"):
            s.expect("(")
            name = self._use(_POINTERS + (ANGEL,))
            s.expect(")")
            if self.scope[name] == ANGEL:
                return InvActiveAngel(name)
            return InvActivePtr(name)
        lhs = self._use(_POINTERS)
        if s.accept("=="):
            return InvEq(lhs, self._use(_POINTERS))
        if s.accept("in"):
            return InvMember(lhs, self._use((ANGEL,)))
        s.fail("expected `==` or `in`")

    def command(self):
        s = self.stream
        token = s.peek
        if s.accept("skip"):
            return Skip()
        if s.accept("beginAtomic"):
            return BeginAtomic()
        if s.accept("endAtomic"):
            return EndAtomic()
        if s.accept("assume"):
            s.expect("(")
            if s.accept("*"):
                s.expect(")")
                return AssumePred("*")
            if s.peek.kind == "id" and s.lookahead(1).text == "(":
                pred = s.next().text
                args = self.arguments(_DATA)
                s.expect(")")
                return AssumePred(pred, tuple(args))
            formula = self.formula()
            s.expect(")")
            if len(formula.atoms) == 1 and isinstance(formula.atoms[0], PtrCompare):
                atom = formula.atoms[0]
                if NULL in (atom.lhs, atom.rhs):
                    return AssumeFormula(formula)
                if atom.equal:
                    return AssumeEq(atom.lhs, atom.rhs)
                return AssumeNeq(atom.lhs, atom.rhs)
            return AssumeFormula(formula)
        if s.accept("assert"):
            s.expect("(")
            formula = self.formula()
            s.expect(")")
            return Assert(formula)
        if s.accept("havoc"):
            s.expect("(")
            name = self._use(_POINTERS)
            s.expect(")")
            return Havoc(name)
        if s.accept("enter"):
            func = self._name("function name")
            args = self.arguments(_POINTERS + _DATA)
            pointers = [a for a in args if self.scope[a] in _POINTERS]
            data = [a for a in args if self.scope[a] in _DATA]
            if args != pointers + data:
                s.fail("pointer arguments must precede data arguments", func)
            arity = (len(pointers), len(data))
            if self.arities.setdefault(func.text, arity) != arity:
                s.fail(f"function {func.text} is called with two arities", func)
            return Enter(func.text, tuple(pointers), tuple(data))
        if s.accept("exit"):
            return Exit(self._name("function name").text)
        if token.kind != "id":
            s.fail(f"expected a statement, found {token.text!r}")
        lhs = self._use(_POINTERS + _DATA)
        if s.accept("->"):
            selector = self._selector()
            s.expect("=")
            if self.scope[lhs] not in _POINTERS:
                s.fail(f"{lhs} is not a pointer", token)
            if selector == "next":
                return PtrStore(lhs, self._use(_POINTERS))
            return DataStore(lhs, self._use(_DATA))
        s.expect("=")
        lhs_is_ptr = self.scope[lhs] in _POINTERS
        if s.accept("malloc"):
            if not lhs_is_ptr:
                s.fail(f"{lhs} is not a pointer", token)
            return Malloc(lhs)
        if s.at("true", "false"):
            value = s.next().text == "true"
            if lhs_is_ptr:
                s.fail(f"{lhs} is not a data variable", token)
            return DataConst(lhs, value)
        if s.peek.kind == "id" and s.lookahead(1).text == "(":
            op = s.next().text
            if lhs_is_ptr:
                s.fail(f"{lhs} is not a data variable", token)
            return DataOp(lhs, op, tuple(self.arguments(_DATA)))
        rhs_token = s.peek
        rhs = self._use(_POINTERS + _DATA)
        if s.accept("->"):
            selector = self._selector()
            if self.scope[rhs] not in _POINTERS:
                s.fail(f"{rhs} is not a pointer", rhs_token)
            if selector == "next":
                if not lhs_is_ptr:
                    s.fail(f"{lhs} is not a pointer", token)
                return PtrLoad(lhs, rhs)
            if lhs_is_ptr:
                s.fail(f"{lhs} is not a data variable", token)
            return DataLoad(lhs, rhs)
        rhs_is_ptr = self.scope[rhs] in _POINTERS
        if lhs_is_ptr != rhs_is_ptr:
            s.fail("cannot assign between pointer and data variables", token)
        if lhs_is_ptr:
            return PtrAssign(lhs, rhs)
        return DataOp(lhs, "id", (rhs,))

    def arguments(self, roles) -> List[str]:
        s = self.stream
        s.expect("(")
        args = []
        if not s.at(")"):
            args.append(self._use(roles))
            while s.accept(","):
                args.append(self._use(roles))
        s.expect(")")
        return args

    def formula(self) -> Formula:
        s = self.stream
        atoms = [self.atom()]
        op = None
        while s.at("&&", "||"):
            this = "and" if s.next().text == "&&" else "or"
            if op is not None and op != this:
                s.fail("cannot mix `&&` and `||` without nesting")
            op = this
            atoms.append(self.atom())
        return Formula(op or "and", tuple(atoms))

    def atom(self):
        s = self.stream
        if s.accept("!"):
            return FlagTest(self._use(_DATA), negated=True)
        lhs = self._use(_POINTERS + _DATA + (ANGEL,))
        if self.scope[lhs] in _DATA:
            return FlagTest(lhs)
        if s.at("==", "!="):
            equal = s.next().text == "=="
            return PtrCompare(lhs, self._use(_POINTERS + (ANGEL,)), equal)
        s.fail("expected `==` or `!=`")

    def _selector(self) -> str:
        token = self.stream.next()
        if token.text not in _SELECTORS:
            self.stream.fail(
                f"unknown selector {token.text!r}; only `data` and `next` exist", token
            )
        return token.text

    def _use(self, roles) -> str:
        token = self.stream.identifier("variable")
        try:
            role = self.scope[token.text]
        except KeyError:
            self.stream.fail(f"undeclared variable {token.text}", token)
        if role not in roles:
            self.stream.fail(
                f"{token.text} is a {role}, which is not allowed here", token
            )
        return token.text


def _null_test(lhs: str, rhs: str, equal: bool) -> AssumeFormula:
    return AssumeFormula(Formula("and", (PtrCompare(lhs, rhs, equal),)))


def _written(command) -> Tuple[str, ...]:
    if isinstance(command, (PtrAssign, PtrLoad, Malloc)):
        return (command.lhs,)
    if isinstance(command, Havoc):
        return (command.pointer,)
    if isinstance(command, Enter) and command.func == "retire":
        return command.pointers
    return ()


def parse_program(text: str) -> Program:
    """Parses a program of the core language.

    **Arguments:**

    - `text`: the program source.

    **Returns:**

    A [`smrtype.lang.Program`][].

    **Raises:**

    [`smrtype.ParseError`][] on syntax errors (with line and column), undeclared
    variables, shared angels, unallocated angels, unbalanced atomic blocks, and
    writes to (or retires of) a shared pointer named `null`.
    """
    prog = _ProgramParser(text).program()
    logger.debug(
        "parsed program with %d procedures and %d shared pointers",
        len(prog.procedures),
        len(prog.shared),
    )
    return prog
