from typing import List, Optional, Tuple

from ..module import Module, static_field
from .ast import Choice, Com, Command, Loop, Seq, Stmt


class Edge(Module):
    """A control-flow edge. `command is None` is a silent (identity) edge; `path` is
    the location of the command inside the procedure body."""

    source: int
    target: int
    command: Optional[Command]
    path: str = static_field(default="")


class ControlFlow(Module):
    entry: int
    exit: int
    size: int
    edges: Tuple[Edge, ...]


def control_flow(stmt: Stmt, exact_loops: bool = False) -> ControlFlow:
    """Control-flow graph of `stmt`, built as the constraint system
    `E(X, stmt, Y)`: sequencing introduces a fresh middle node, choice shares the
    exit node, and a loop `s*` from `X` to `Y` becomes `E(Y, s, Y)` plus a silent
    edge `X -> Y`.

    With `exact_loops=True` a loop gets its own head node instead
    (`X -> H`, `E(H, s, H)`, `H -> Y`), so that a loop that is one branch of a choice
    cannot be re-entered after the other branch. The oracle needs exact control;
    type inference is content with the coarser (and smaller) system.
    """
    edges: List[Edge] = []
    counter = [2]

    def fresh():
        counter[0] += 1
        return counter[0] - 1

    def build(x, s, y, path):
        if isinstance(s, Com):
            edges.append(Edge(x, y, s.command, path))
        elif isinstance(s, Seq):
            z = fresh()
            build(x, s.first, z, _child(path, 0))
            build(z, s.second, y, _child(path, 1))
        elif isinstance(s, Choice):
            build(x, s.left, y, _child(path, 0))
            build(x, s.right, y, _child(path, 1))
        elif isinstance(s, Loop):
            if exact_loops:
                h = fresh()
                edges.append(Edge(x, h, None, path))
                build(h, s.body, h, _child(path, 0))
                edges.append(Edge(h, y, None, path))
            else:
                build(y, s.body, y, _child(path, 0))
                edges.append(Edge(x, y, None, path))
        else:
            raise ValueError(f"Unknown statement {s}.")

    build(0, stmt, 1, "")
    return ControlFlow(entry=0, exit=1, size=counter[0], edges=tuple(edges))


def _child(path: str, index: int) -> str:
    return f"{path}.{index}" if path else str(index)
