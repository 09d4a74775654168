"""Shipped example programs.

The data structures come in a hazard pointer (`_hp`, for the `hp2` automaton) and an
epoch-based reclamation (`_ebr`, for `ebr`) variant. Programs prefixed `micro_` are
small programs used to exercise the analyses, racy ones included.
"""

import functools as ft
import pathlib
from typing import Tuple

from ..lang import Program, parse_program


_here = pathlib.Path(__file__).resolve().parent

STRUCTURES = ("treiber", "msqueue", "dglm", "vy_dcas", "vy_cas", "orvyy")


def names() -> Tuple[str, ...]:
    return tuple(sorted(p.stem for p in _here.glob("*.prog")))


def path(name: str) -> pathlib.Path:
    p = _here / f"{name}.prog"
    if not p.exists():
        raise ValueError(f"Unknown corpus program {name}.")
    return p


def source(name: str) -> str:
    return path(name).read_text()


@ft.lru_cache(maxsize=None)
def load(name: str) -> Program:
    """Parses the corpus program `name` (file name without `.prog`)."""
    return parse_program(source(name))


def structures(smr: str) -> Tuple[str, ...]:
    """The data structure programs for `smr`, either `"hp"` or `"ebr"`."""
    return tuple(f"{s}_{smr}" for s in STRUCTURES)
