import itertools as it

import jax.random as jrandom
import pytest

import smrtype
from smrtype import A, L, S, TOP, TypeLattice
from smrtype.domain import env_join, env_leq, initial_environment, rm_transient
from smrtype.lang import Enter, Exit
from smrtype.smr import builtin, load_automaton
from smrtype.smr.closure import to_mask


@pytest.fixture(scope="module")
def lattice():
    return TypeLattice(load_automaton("ebr"))


def _sample(key, types, n):
    idx = jrandom.randint(key, (n,), 0, len(types))
    return [types[int(i)] for i in idx]


def test_requires_active_locations():
    with pytest.raises(smrtype.AutomatonError):
        TypeLattice(builtin("ebr"))


def test_make(lattice):
    o = lattice.automaton
    local = lattice.make({L})
    assert local.flags == {L}
    assert lattice.is_valid(local)
    assert not lattice.is_valid(lattice.empty)
    assert lattice.locs(lattice.empty) == lattice.tables.all_mask

    # Active inside a safe location set implies safe.
    t = lattice.make({A}, to_mask(o, ["(I,protected)"]))
    assert t.flags == {A, S}
    assert lattice.location_names(t.custom) == {
        "(I,protected)",
        "(R,retired)",
        "(LF)",
    }

    assert lattice.make({S}).flags == {S}
    assert lattice.canonicalize(t) == t
    assert lattice.add_flags(lattice.empty, A) == lattice.make({A})
    assert not lattice.is_valid(lattice.remove_flags(local, L))


def test_all_types_canonical(lattice):
    types = lattice.all_types()
    assert lattice.empty in types
    for t in types:
        assert lattice.canonicalize(t) == t
        assert lattice.tables.is_closed(t.custom)


def test_lattice_laws_exhaustive_pairs(lattice):
    types = lattice.all_types()
    for a, b in it.product(types, repeat=2):
        assert lattice.join(a, b) == lattice.join(b, a)
        assert lattice.meet(a, b) == lattice.meet(b, a)
        assert lattice.join(a, lattice.meet(a, b)) == a
        assert lattice.meet(a, lattice.join(a, b)) == a
        assert lattice.leq(a, lattice.join(a, b))
        assert lattice.leq(lattice.meet(a, b), a)
    for a in types:
        assert lattice.join(a, a) == a
        assert lattice.meet(a, a) == a
        assert lattice.leq(a, lattice.empty)


def test_lattice_associativity(lattice, getkey):
    types = lattice.all_types()
    triples = zip(
        _sample(getkey(), types, 200),
        _sample(getkey(), types, 200),
        _sample(getkey(), types, 200),
    )
    for a, b, c in triples:
        assert lattice.join(a, lattice.join(b, c)) == lattice.join(
            lattice.join(a, b), c
        )
        assert lattice.meet(a, lattice.meet(b, c)) == lattice.meet(
            lattice.meet(a, b), c
        )


def test_rm_transient(lattice):
    env = initial_environment(lattice, ["X", "p", "q"], ["X"])
    protected = lattice.make({A}, to_mask(lattice.automaton, ["(I,protected)"]))
    env = env.update({"X": lattice.make({A}), "p": protected, "q": lattice.make({L})})
    out = rm_transient(lattice, env)
    assert out["X"] == lattice.empty
    assert out["p"].flags == {S}
    assert out["q"] == lattice.make({L})
    assert rm_transient(lattice, TOP) is TOP


def test_environments(lattice):
    env = initial_environment(lattice, ["X", "p"], ["X"], angels=())
    strong = env.update({"p": lattice.make({L})})
    assert env["p"] == lattice.empty
    assert env.role("p") == "pointer"
    with pytest.raises(KeyError):
        env["q"]

    assert env_leq(lattice, strong, env)
    assert not env_leq(lattice, env, strong)
    assert env_leq(lattice, None, env)
    assert env_leq(lattice, env, TOP)
    assert not env_leq(lattice, TOP, env)
    assert env_join(lattice, strong, env) == env
    assert env_join(lattice, None, strong) == strong
    assert env_join(lattice, strong, TOP) is TOP

    other = initial_environment(lattice, ["Y", "p"], ["Y"])
    with pytest.raises(ValueError):
        env_join(lattice, env, other)


def test_angel_role(lattice):
    env = initial_environment(lattice, ["p", "r"], [], angels=["r"])
    assert env.role("r") == "angel"


def _tables(lattice):
    types = lattice.all_types()
    pairs = list(it.product(types, repeat=2))
    leq = {(a, b): lattice.leq(a, b) for a, b in pairs}
    join = {(a, b): lattice.join(a, b) for a, b in pairs}
    meet = {(a, b): lattice.meet(a, b) for a, b in pairs}
    return types, leq, join, meet


def test_lattice_bounds_are_least(lattice):
    types, leq, join, meet = _tables(lattice)
    for a, b in it.product(types, repeat=2):
        upper, lower = join[a, b], meet[a, b]
        assert leq[b, upper]
        assert leq[lower, b]
        for c in types:
            if leq[a, c] and leq[b, c]:
                assert leq[upper, c]
            if leq[c, a] and leq[c, b]:
                assert leq[c, lower]


def test_lattice_associativity_exhaustive(lattice):
    types, _, join, meet = _tables(lattice)
    for a, b, c in it.product(types, repeat=3):
        assert join[a, join[b, c]] == join[join[a, b], c]
        assert meet[a, meet[b, c]] == meet[meet[a, b], c]


_EBR_COMMANDS = [
    None,
    Enter("leaveQ"),
    Exit("leaveQ"),
    Enter("enterQ"),
    Exit("enterQ"),
    Enter("retire", ("p",)),
    Enter("retire", ("q",)),
    Exit("retire"),
]


@pytest.mark.parametrize("role", ["pointer", "angel"])
def test_transformer_is_least(lattice, role):
    types = lattice.all_types()
    for command in _EBR_COMMANDS:
        for t in types:
            post = lattice.transformer(t, "p", role, command)
            assert lattice.transformer_holds(t, "p", role, command, post)
            for other in types:
                if lattice.transformer_holds(t, "p", role, command, other):
                    assert lattice.leq(post, other)


def test_largest_closed_subset_by_enumeration(lattice):
    tables = lattice.tables
    closed = [m for m in range(tables.all_mask + 1) if tables.is_closed(m)]
    assert 0 in closed
    assert tables.all_mask in closed
    for mask in range(tables.all_mask + 1):
        expected = 0
        for m in closed:
            if m & ~mask == 0:
                expected |= m
        assert tables.largest_closed_subset(mask) == expected
        assert tables.is_closed(expected)
