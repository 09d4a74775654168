"""The guarantee type lattice.

A type is stored canonically as a set of base flags (`A`ctive, `L`ocal, `S`afe)
together with an interference-closed set of automaton locations. The location set
is the conjunction of every custom guarantee `E_L` the type carries; the set of all
locations means "no custom guarantee". Location sets are bitmasks.
"""

import functools as ft
import logging
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .custom_types import LocationSet
from .errors import AutomatonError
from .lang.ast import Command
from .module import Module, static_field
from .smr.automaton import SmrAutomaton, _post_transitions, event_binding
from .smr.closure import ClosureTables, closure_tables, from_mask


logger = logging.getLogger(__name__)

A = "A"
L = "L"
S = "S"
FLAGS = (A, L, S)


class CanonicalType(Module):
    flags: FrozenSet[str]
    custom: LocationSet

    def __str__(self):
        flags = "".join(f for f in FLAGS if f in self.flags)
        return f"{{{flags}}}/{self.custom:#x}"


class TypeLattice(Module):
    """The lattice of canonical types over one (product) automaton.

    **Arguments:**

    - `automaton`: the SMR automaton. It must mark at least one location `active`.

    **Raises:**

    `AutomatonError` if no location is marked active, since then the `A` and `L`
    guarantees have no meaning.
    """

    automaton: SmrAutomaton
    tables: ClosureTables

    def __init__(self, automaton: SmrAutomaton):
        if not automaton.active:
            raise AutomatonError(
                f"Automaton {automaton.name} declares no active locations; multiply "
                "it with the base automaton."
            )
        self.automaton = automaton
        self.tables = closure_tables(automaton)

    # Construction

    def _fl(self, flags: Iterable[str]) -> LocationSet:
        mask = self.tables.all_mask
        for flag in flags:
            if flag == S:
                mask &= self.tables.safe_mask
            else:
                mask &= self.tables.active_mask
        return mask

    def make(self, flags: Iterable[str] = (), custom: Optional[LocationSet] = None):
        """The canonical form of the type with the given flags and custom locations."""
        flags = frozenset(flags)
        if custom is None:
            custom = self.tables.all_mask
        locs = custom & self._fl(flags)
        if flags & {A, L} and locs & ~self.tables.safe_mask == 0:
            flags = flags | {S}
            locs &= self.tables.safe_mask
        return CanonicalType(flags, self.tables.closure(locs))

    @property
    def empty(self) -> CanonicalType:
        """The type without any guarantee."""
        return self.make()

    def canonicalize(self, t: CanonicalType) -> CanonicalType:
        return self.make(t.flags, t.custom)

    # Queries

    def locs(self, t: CanonicalType) -> LocationSet:
        return t.custom & self._fl(t.flags)

    def location_names(self, mask: LocationSet) -> FrozenSet[str]:
        return from_mask(self.automaton, mask)

    @staticmethod
    def is_valid(t: CanonicalType) -> bool:
        return bool(t.flags)

    def post(
        self, t: CanonicalType, variable: str, role: str, command: Optional[Command]
    ) -> LocationSet:
        mask = self.locs(t)
        if command is None:
            return mask
        out = 0
        for source, target in _post_bits(self.automaton, variable, role, command):
            if (mask >> source) & 1:
                out |= 1 << target
        return out

    def transformer(
        self, t: CanonicalType, variable: str, role: str, command: Optional[Command]
    ) -> CanonicalType:
        """The most precise type `t'` with `t, variable, command ⇝ t'`.

        The locations reachable by `command` (`None` for the silent step) must be
        covered; `A` and `L` survive only if the reached locations still satisfy
        them, and `S` holds only for a valid `t` that stays within the safe locations.
        """
        post = self.post(t, variable, role, command)
        flags = set()
        for flag in (A, L):
            if flag in t.flags and post & ~self.tables.active_mask == 0:
                flags.add(flag)
        if self.is_valid(t) and post & ~self.tables.safe_mask == 0:
            flags.add(S)
        return self.make(flags, self.tables.closure(post))

    def transformer_holds(
        self,
        t: CanonicalType,
        variable: str,
        role: str,
        command: Optional[Command],
        t_: CanonicalType,
    ) -> bool:
        post = self.post(t, variable, role, command)
        if post & ~self.locs(t_):
            return False
        if self.is_valid(t_) and not self.is_valid(t):
            return False
        return t_.flags & {A, L} <= t.flags

    def leq(self, t1: CanonicalType, t2: CanonicalType) -> bool:
        """`t1 ⊑ t2`: `t2` is obtained from `t1` by the silent step."""
        return self.transformer_holds(t1, "", "pointer", None, t2)

    # Lattice operations

    def join(self, t1: CanonicalType, t2: CanonicalType) -> CanonicalType:
        return self.make(t1.flags & t2.flags, t1.custom | t2.custom)

    def meet(self, t1: CanonicalType, t2: CanonicalType) -> CanonicalType:
        return self.make(
            t1.flags | t2.flags,
            self.tables.largest_closed_subset(t1.custom & t2.custom),
        )

    def add_flags(self, t: CanonicalType, *flags: str) -> CanonicalType:
        return self.make(t.flags | set(flags), t.custom)

    def remove_flags(self, t: CanonicalType, *flags: str) -> CanonicalType:
        return self.make(t.flags - set(flags), t.custom)

    def all_types(self) -> Tuple[CanonicalType, ...]:
        """Every canonical type; exponential in the number of locations."""
        out = {}
        flag_sets = [
            frozenset(f for i, f in enumerate(FLAGS) if (bits >> i) & 1)
            for bits in range(8)
        ]
        for custom in range(self.tables.all_mask + 1):
            if not self.tables.is_closed(custom):
                continue
            for flags in flag_sets:
                t = self.make(flags, custom)
                out[t] = None
        return tuple(out)

    def to_json(self, t: CanonicalType) -> Dict:
        return {
            "flags": [f for f in FLAGS if f in t.flags],
            "custom": sorted(self.location_names(t.custom)),
        }


@ft.lru_cache(maxsize=None)
def _post_bits(o: SmrAutomaton, variable: str, role: str, command: Command):
    key, binding = event_binding(o, variable, role, command)
    return tuple(
        (o.index(source), o.index(target))
        for source, target in _post_transitions(o, key, binding)
    )


# Environments


class _Top(Module):
    def __str__(self):
        return "⊤"


TOP = _Top()


def is_top(env) -> bool:
    return isinstance(env, _Top)


class TypeEnvironment(Module):
    """A total map from pointer and angel variables to canonical types."""

    names: Tuple[str, ...] = static_field()
    shared: FrozenSet[str] = static_field()
    types: Tuple[CanonicalType, ...]
    angels: FrozenSet[str] = static_field(default=frozenset())

    def __getitem__(self, name: str) -> CanonicalType:
        try:
            return self.types[_positions(self.names)[name]]
        except KeyError:
            raise KeyError(f"Variable {name} is not in the type environment.")

    def update(self, changes: Mapping[str, CanonicalType]) -> "TypeEnvironment":
        types = list(self.types)
        positions = _positions(self.names)
        for name, t in changes.items():
            types[positions[name]] = t
        return self.with_types(types)

    def items(self):
        return zip(self.names, self.types)

    def with_types(self, types) -> "TypeEnvironment":
        return TypeEnvironment(self.names, self.shared, tuple(types), self.angels)

    def role(self, name: str) -> str:
        return "angel" if name in self.angels else "pointer"


@ft.lru_cache(maxsize=None)
def _positions(names: Tuple[str, ...]) -> Dict[str, int]:
    return {name: i for i, name in enumerate(names)}


def initial_environment(
    lattice: TypeLattice,
    names: Iterable[str],
    shared: Iterable[str],
    angels: Iterable[str] = (),
) -> TypeEnvironment:
    """`Γ_init`: every pointer and angel has the type without guarantees."""
    names = tuple(names)
    return TypeEnvironment(
        names, frozenset(shared), (lattice.empty,) * len(names), frozenset(angels)
    )


def rm_transient(lattice: TypeLattice, env):
    """Forgets what other threads may invalidate when an atomic block ends: local
    variables lose `A`, shared variables lose everything. `S` and `L` on locals
    survive."""
    if is_top(env):
        return env
    types = []
    for name, t in env.items():
        if name in env.shared:
            types.append(lattice.empty)
        elif A in t.flags:
            types.append(lattice.remove_flags(t, A))
        else:
            types.append(t)
    return env.with_types(types)


def env_join(lattice: TypeLattice, env1, env2):
    if env1 is None:
        return env2
    if env2 is None:
        return env1
    if is_top(env1) or is_top(env2):
        return TOP
    _check_domains(env1, env2)
    return env1.with_types(
        lattice.join(t1, t2) for t1, t2 in zip(env1.types, env2.types)
    )


def env_leq(lattice: TypeLattice, env1, env2) -> bool:
    """`Γ1 ⊑ Γ2`; `⊤` is the greatest element, `None` (unreached) the least."""
    if env1 is None or is_top(env2):
        return True
    if env2 is None or is_top(env1):
        return False
    _check_domains(env1, env2)
    return all(lattice.leq(t1, t2) for t1, t2 in zip(env1.types, env2.types))


def _check_domains(env1: TypeEnvironment, env2: TypeEnvironment):
    if env1.names != env2.names:
        raise ValueError(
            f"Type environments over different variables: {env1.names} and "
            f"{env2.names}."
        )


def name_custom_sets(
    lattice: TypeLattice, envs: Iterable
) -> Dict[LocationSet, str]:
    """Stable names `E_1, E_2, …` for the custom location sets occurring in `envs`,
    in order of first occurrence. The full location set is not named."""
    names: Dict[LocationSet, str] = {}
    for env in envs:
        if env is None or is_top(env):
            continue
        for t in env.types:
            if t.custom != lattice.tables.all_mask and t.custom not in names:
                names[t.custom] = f"E_{len(names) + 1}"
    return names


def describe(t: CanonicalType, names: Mapping[LocationSet, str], lattice) -> str:
    parts: List[str] = [f for f in FLAGS if f in t.flags]
    if t.custom != lattice.tables.all_mask:
        parts.append(names.get(t.custom, f"{t.custom:#x}"))
    return " ∧ ".join(parts) if parts else "∅"
