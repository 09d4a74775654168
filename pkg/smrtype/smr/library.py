import functools as ft
import logging
import pathlib
from typing import Tuple

from .automaton import SmrAutomaton, product
from .parser import parse_automaton


logger = logging.getLogger(__name__)

_here = pathlib.Path(__file__).resolve().parent


def builtin_names() -> Tuple[str, ...]:
    return tuple(sorted(p.stem for p in _here.glob("*.smr")))


@ft.lru_cache(maxsize=None)
def builtin(name: str) -> SmrAutomaton:
    """One of the shipped automata: `base`, `ebr` or `hp2`."""
    path = _here / f"{name}.smr"
    if not path.exists():
        raise ValueError(
            f"Unknown automaton {name}; built-ins are {', '.join(builtin_names())}."
        )
    return parse_automaton(path.read_text())


@ft.lru_cache(maxsize=None)
def load_automaton(name_or_path: str, with_base: bool = True) -> SmrAutomaton:
    """Loads a built-in automaton by name, or an automaton file by path, and (unless
    `with_base=False`) multiplies it with the base automaton, which forbids frees of
    addresses that were not retired.
    """
    if name_or_path in builtin_names():
        o = builtin(name_or_path)
    else:
        o = parse_automaton(pathlib.Path(name_or_path).read_text())
    if with_base and o.name != builtin("base").name:
        o = product(builtin("base"), o)
    logger.debug("loaded automaton %s with %d locations", o.name, len(o.locations))
    return o
