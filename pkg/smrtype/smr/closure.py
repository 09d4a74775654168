"""Interference closures and safe locations.

Location sets are handled as bitmasks over `o.locations`. The reflexive-transitive
closure of the interference relation is computed once per automaton as a boolean
matrix with `jax.numpy` and then kept as one bitmask row per location.
"""

import functools as ft
import logging
from typing import FrozenSet, Iterable, Tuple

import jax.numpy as jnp
import numpy as np

from ..custom_types import LocationSet
from ..module import Module
from .automaton import ADDRESS, FREE, THREAD, SmrAutomaton, Transition
from .guards import Guard, Literal


logger = logging.getLogger(__name__)


def interferes(o: SmrAutomaton, t: Transition) -> bool:
    """Whether `t` can be taken by a thread other than the tracked one. Frees are
    performed by the environment and always interfere."""
    if t.kind == FREE:
        return True
    zt = o.variable(THREAD)
    if zt is None:
        return True
    thread_param = o.event(t.kind, t.func).params[0]
    return t.guard.conjoin(Guard([Literal(thread_param, zt, False)])).satisfiable()


def _reachability(adjacency: np.ndarray) -> np.ndarray:
    n = adjacency.shape[0]
    reach = jnp.asarray(adjacency | np.eye(n, dtype=bool)).astype(jnp.int32)
    while True:
        squared = (reach @ reach > 0).astype(jnp.int32)
        if bool(jnp.array_equal(squared, reach)):
            return np.asarray(reach, dtype=bool)
        reach = squared


class ClosureTables(Module):
    """Precomputed location-set tables of one automaton."""

    rows: Tuple[int, ...]
    all_mask: int
    active_mask: int
    accepting_mask: int
    safe_mask: int

    def closure(self, mask: LocationSet) -> LocationSet:
        out = 0
        i = 0
        while mask:
            if mask & 1:
                out |= self.rows[i]
            mask >>= 1
            i += 1
        return out

    def largest_closed_subset(self, mask: LocationSet) -> LocationSet:
        out = 0
        for i, row in enumerate(self.rows):
            if (mask >> i) & 1 and row & ~mask == 0:
                out |= 1 << i
        return out

    def is_closed(self, mask: LocationSet) -> bool:
        return self.closure(mask) == mask


@ft.lru_cache(maxsize=None)
def closure_tables(o: SmrAutomaton) -> ClosureTables:
    n = len(o.locations)
    adjacency = np.zeros((n, n), dtype=bool)
    for t in o.transitions:
        if t.source != t.target and interferes(o, t):
            adjacency[o.index(t.source), o.index(t.target)] = True
    reach = _reachability(adjacency)
    rows = tuple(
        sum(1 << int(j) for j in np.flatnonzero(reach[i])) for i in range(n)
    )
    all_mask = (1 << n) - 1
    accepting_mask = to_mask(o, o.accepting)
    active_mask = to_mask(o, o.active) | accepting_mask
    tables = ClosureTables(rows, all_mask, active_mask, accepting_mask, 0)

    bad = 0
    za = o.variable(ADDRESS)
    if o.has_event(FREE):
        param = o.event(FREE).params[0]
        tracked = Guard([Literal(param, za, True)] if za is not None else [])
        for t in o.transitions:
            if (
                t.kind == FREE
                and t.target not in o.accepting
                and t.guard.conjoin(tracked).satisfiable()
            ):
                bad |= 1 << o.index(t.source)
    safe_mask = tables.largest_closed_subset(all_mask & ~bad)
    logger.debug(
        "closure tables for %s: %d locations, %d safe",
        o.name,
        n,
        bin(safe_mask).count("1"),
    )
    return ClosureTables(rows, all_mask, active_mask, accepting_mask, safe_mask)


def to_mask(o: SmrAutomaton, locations: Iterable[str]) -> LocationSet:
    mask = 0
    for loc in locations:
        mask |= 1 << o.index(loc)
    return mask


def from_mask(o: SmrAutomaton, mask: LocationSet) -> FrozenSet[str]:
    return frozenset(loc for i, loc in enumerate(o.locations) if (mask >> i) & 1)


def interference_closure(o: SmrAutomaton, locations: Iterable[str]) -> FrozenSet[str]:
    """The smallest superset of `locations` that no transition of another thread
    (or a free) leaves."""
    tables = closure_tables(o)
    return from_mask(o, tables.closure(to_mask(o, locations)))


def largest_closed_subset(o: SmrAutomaton, locations: Iterable[str]) -> FrozenSet[str]:
    """The largest interference-closed subset of `locations`."""
    tables = closure_tables(o)
    return from_mask(o, tables.largest_closed_subset(to_mask(o, locations)))


def safe_locations(o: SmrAutomaton) -> FrozenSet[str]:
    """The largest interference-closed set of locations from which the tracked
    address cannot be freed without reaching an accepting location. A location is
    excluded as soon as a free to a non-accepting location is *possible* for the
    tracked address."""
    return from_mask(o, closure_tables(o).safe_mask)
