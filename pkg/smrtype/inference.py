"""Type inference: the constraint system of a procedure and its least solution."""

import collections
import logging
from typing import Dict, List, Optional, Tuple

import jax
import jax.random as jrandom

from .custom_types import ProgramPoint
from .domain import (
    TypeLattice,
    describe,
    env_join,
    env_leq,
    initial_environment,
    is_top,
    name_custom_sets,
    rm_transient,
)
from .lang.ast import EndAtomic, Procedure, Program
from .lang.flow import control_flow
from .lang.printer import format_command
from .lang.transform import preprocess, real_commands
from .module import Module, static_field
from .rules import SafeCallTable, sp, sp_explain
from .smr.automaton import SmrAutomaton


logger = logging.getLogger(__name__)

IDENTITY = "identity"
POST = "post"
END = "end"


class Constraint(Module):
    """`transfer(X_source) ⊑ X_target`. `kind` is `identity`, `post` (the strongest
    post of `command`) or `end` (leaving an atomic block)."""

    source: int
    target: int
    kind: str = static_field()
    command: Optional[Module] = None
    path: str = static_field(default="")


class ConstraintSystem(Module):
    size: int
    entry: int
    exit: int
    constraints: Tuple[Constraint, ...]

    def dep(self, variable: int) -> Tuple[int, ...]:
        """Indices of the constraints that read `variable`."""
        return _tables(self)[0].get(variable, ())

    def req(self, variable: int) -> Tuple[int, ...]:
        """Indices of the constraints that bound `variable`."""
        return _tables(self)[1].get(variable, ())


def _tables(cs: ConstraintSystem):
    try:
        return cs.__dict__["_tables"]
    except KeyError:
        dep: Dict[int, List[int]] = collections.defaultdict(list)
        req: Dict[int, List[int]] = collections.defaultdict(list)
        for i, c in enumerate(cs.constraints):
            dep[c.source].append(i)
            req[c.target].append(i)
        tables = (
            {k: tuple(v) for k, v in dep.items()},
            {k: tuple(v) for k, v in req.items()},
        )
        object.__setattr__(cs, "_tables", tables)
        return tables


def build_constraints(proc: Procedure) -> ConstraintSystem:
    """The constraint system of a preprocessed procedure body. One variable per
    control-flow node; commands give `sp` constraints, `endAtomic` gives the
    removal of transient guarantees, everything else is the identity."""
    flow = control_flow(proc.body)
    constraints = []
    for edge in flow.edges:
        if edge.command is None:
            kind = IDENTITY
            command = None
        elif isinstance(edge.command, EndAtomic):
            kind = END
            command = edge.command
        else:
            kind = POST
            command = edge.command
        constraints.append(
            Constraint(edge.source, edge.target, kind, command, edge.path)
        )
    return ConstraintSystem(flow.size, flow.entry, flow.exit, tuple(constraints))


def _transfer(lattice, table, constraint, env):
    if env is None:
        return None
    if constraint.kind == IDENTITY:
        return env
    if constraint.kind == END:
        return rm_transient(lattice, env)
    return sp(lattice, env, constraint.command, table)


def chain_bound(lattice: TypeLattice, variables: int) -> int:
    """Length bound of strictly ascending chains of environments, `⊤` included."""
    return variables * (3 + len(lattice.automaton.locations)) + 2


class Solution(Module):
    """`failures` maps the index of every `post` constraint whose rule premise failed
    during the iteration to `(rule, variable, reason)`."""

    values: Tuple[object, ...]
    pops: int = static_field()
    failures: Tuple[Tuple[int, Tuple[str, str, str]], ...] = static_field(default=())

    def __getitem__(self, variable: int):
        return self.values[variable]


def solve(
    cs: ConstraintSystem,
    init,
    lattice: TypeLattice,
    table: SafeCallTable,
    *,
    key: Optional["jax.random.PRNGKey"] = None,
) -> Solution:
    """Computes the least solution of `cs` with `X_entry ⊒ init` by worklist
    iteration. Unreached variables are `None`.

    **Arguments:**

    - `cs`: the constraint system.
    - `init`: the environment at the entry (`Γ_init`).
    - `lattice`, `table`: the type lattice and safe-call table used by `sp`.
    - `key`: if given, a `jax.random.PRNGKey` used to pick the next worklist entry
        at random instead of first-in first-out. The solution does not depend on it.

    **Returns:**

    A `Solution`; `solution[i]` is the environment of variable `i`.
    """
    values: List = [None] * cs.size
    failures: Dict[int, Tuple[str, str, str]] = {}
    values[cs.entry] = init
    worklist = collections.deque([cs.entry])
    queued = {cs.entry}
    pops = 0
    while worklist:
        if key is None:
            variable = worklist.popleft()
        else:
            key, subkey = jrandom.split(key)
            index = int(jrandom.randint(subkey, (), 0, len(worklist)))
            worklist.rotate(-index)
            variable = worklist.popleft()
            worklist.rotate(index)
        queued.discard(variable)
        pops += 1
        for i in cs.dep(variable):
            c = cs.constraints[i]
            out = _transfer(lattice, table, c, values[variable])
            if c.kind == POST and is_top(out) and not is_top(values[variable]):
                if i not in failures:
                    _, failure = sp_explain(lattice, values[variable], c.command, table)
                    failures[i] = (failure.rule, failure.variable, failure.reason)
            new = env_join(lattice, values[c.target], out)
            if new != values[c.target]:
                values[c.target] = new
                if c.target not in queued:
                    queued.add(c.target)
                    worklist.append(c.target)
    variables = len(init.names) if not is_top(init) else 0
    bound = cs.size * chain_bound(lattice, variables) + 1
    assert pops <= bound, f"{pops} worklist pops exceed the bound {bound}"
    logger.debug("solved %d variables with %d pops (bound %d)", cs.size, pops, bound)
    return Solution(tuple(values), pops, tuple(sorted(failures.items())))


def check_solution(
    cs: ConstraintSystem, solution: Solution, lattice: TypeLattice, table
) -> bool:
    """Whether `solution` satisfies every constraint of `cs`."""
    for c in cs.constraints:
        out = _transfer(lattice, table, c, solution[c.source])
        if not env_leq(lattice, out, solution[c.target]):
            return False
    return True


# Reports


class Failure(Module):
    point: ProgramPoint = static_field()
    rule: str = static_field()
    variable: str = static_field()
    reason: str = static_field()
    command: str = static_field()

    def __str__(self):
        return f"{self.point}: {self.rule}: {self.reason} (at `{self.command}`)"


class PointTyping(Module):
    point: ProgramPoint = static_field()
    command: str = static_field()
    env: object


class TypeReport(Module):
    """The outcome of [`smrtype.typecheck`][].

    On success, `points` holds the principal type environment before every command
    of the input program (and at the end of every procedure); on failure,
    `failure` names the first command whose rule premise does not hold.
    """

    verdict: str = static_field()
    lattice: TypeLattice
    points: Tuple[PointTyping, ...] = ()
    failure: Optional[Failure] = None

    @property
    def ok(self) -> bool:
        return self.verdict == "ok"

    def env(self, point: ProgramPoint):
        for p in self.points:
            if p.point == point:
                return p.env
        raise KeyError(f"No program point {point}.")

    def custom_names(self) -> Dict[int, str]:
        return name_custom_sets(self.lattice, [p.env for p in self.points])

    def to_json(self) -> Dict:
        names = self.custom_names()
        out: Dict = {"verdict": self.verdict}
        if self.failure is not None:
            out["failure"] = {
                "point": self.failure.point,
                "rule": self.failure.rule,
                "variable": self.failure.variable,
                "reason": self.failure.reason,
                "command": self.failure.command,
            }
        points = []
        for p in self.points:
            if p.env is None:
                env = None
            elif is_top(p.env):
                env = "top"
            else:
                env = {name: self.lattice.to_json(t) for name, t in p.env.items()}
            points.append({"point": p.point, "command": p.command, "env": env})
        out["points"] = points
        out["guarantees"] = {
            name: sorted(self.lattice.location_names(mask))
            for mask, name in names.items()
        }
        return out

    def format(self) -> str:
        if not self.ok:
            return f"type inference failed\n  {self.failure}"
        names = self.custom_names()
        lines = ["typechecks"]
        for p in self.points:
            if p.env is None:
                lines.append(f"  {p.point}: unreachable")
                continue
            types = ", ".join(
                f"{name}: {describe(t, names, self.lattice)}"
                for name, t in p.env.items()
                if t != self.lattice.empty
            )
            lines.append(f"  {p.point} [{p.command}] {{{types}}}")
        for mask, name in names.items():
            locations = ", ".join(sorted(self.lattice.location_names(mask)))
            lines.append(f"  {name} = {{{locations}}}")
        return "\n".join(lines)


def _typecheck_procedure(
    prog: Program,
    original: Procedure,
    proc: Procedure,
    lattice: TypeLattice,
    table: SafeCallTable,
):
    cs = build_constraints(proc)
    init = initial_environment(
        lattice, prog.pointer_variables(proc), prog.shared, proc.angels
    )
    solution = solve(cs, init, lattice, table)
    assert check_solution(cs, solution, lattice, table)

    # Preprocessing only adds silent commands, so real commands correspond by
    # their position in program order.
    ordinal = {path: i for i, (path, _) in enumerate(real_commands(proc.body))}
    sources = real_commands(original.body)

    points = []
    first_failure = None
    recorded = dict(solution.failures)
    for i, c in enumerate(cs.constraints):
        if c.kind != POST or c.path not in ordinal:
            continue
        k = ordinal[c.path]
        path, com = sources[k]
        point = f"{proc.name}:{path}"
        before = solution[c.source]
        points.append((k, PointTyping(point, format_command(com.command), before)))
        if i in recorded:
            # inside a loop the failure may have made its own input ⊤
            premise = recorded[i]
        elif before is None or is_top(before):
            continue
        else:
            _, failure = sp_explain(lattice, before, c.command, table)
            if failure is None:
                continue
            premise = (failure.rule, failure.variable, failure.reason)
        if first_failure is None or k < first_failure[0]:
            rule, variable, reason = premise
            failure = Failure(
                point, rule, variable, reason, format_command(com.command)
            )
            first_failure = (k, failure)
    points.sort(key=lambda kp: kp[0])
    points = [p for _, p in points]
    points.append(PointTyping(f"{proc.name}:exit", "", solution[cs.exit]))
    assert first_failure is not None or not is_top(
        solution[cs.exit]
    ), f"{proc.name} fails without a failing rule"
    return points, (first_failure[1] if first_failure else None), solution.pops


def typecheck(
    prog: Program, o: SmrAutomaton, table: Optional[SafeCallTable] = None
) -> TypeReport:
    """Infers the principal typing of every procedure of `prog`.

    **Arguments:**

    - `prog`: a parsed program (it is preprocessed here).
    - `o`: the SMR automaton, usually a product with the base automaton.
    - `table`: the safe-call table; defaults to the one declared by `o`.

    **Returns:**

    A `TypeReport` with verdict `"ok"` or `"fail"`.

    **Raises:**

    `AutomatonError` if `o` has no active locations, or if the program calls an SMR
    function outside the automaton's alphabet.
    """
    lattice = TypeLattice(o)
    if table is None:
        table = SafeCallTable.from_automaton(o)
    pre = preprocess(prog)
    all_points = []
    failure = None
    pops = 0
    for original, proc in zip(prog.procedures, pre.procedures):
        points, proc_failure, proc_pops = _typecheck_procedure(
            pre, original, proc, lattice, table
        )
        all_points.extend(points)
        pops += proc_pops
        if proc_failure is not None and failure is None:
            failure = proc_failure
    logger.info(
        "typecheck with %s: %s after %d worklist pops",
        o.name,
        "ok" if failure is None else f"failed at {failure.point}",
        pops,
    )
    verdict = "ok" if failure is None else "fail"
    return TypeReport(verdict, lattice, tuple(all_points), failure)

