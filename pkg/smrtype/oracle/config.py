from typing import Tuple

from ..errors import ConfigurationError
from ..module import Module, static_field


class ExplorationBudget(Module):
    """Bounds of an exhaustive exploration.

    **Arguments:**

    - `threads`: number of threads.
    - `addresses`: size of the address pool `Adr`; addresses are `0, …, addresses-1`.
    - `data`: size of the data domain `Dom`; data values are `0, …, data-1` and
        `0` is `false`.
    - `steps`: bound on the length of explored computations.
    - `rounds`: how many operations each thread invokes, one after the other.
    - `free`: the addresses `X` that the environment may free.
    - `reuse`: the addresses `Y ⊆ X` that may be reallocated after a free.

    **Raises:**

    `ConfigurationError` on non-positive bounds or unless `reuse ⊆ free ⊆ Adr`.
    """

    threads: int = static_field(default=2)
    addresses: int = static_field(default=3)
    data: int = static_field(default=2)
    steps: int = static_field(default=20)
    rounds: int = static_field(default=1)
    free: Tuple[int, ...] = static_field(default=())
    reuse: Tuple[int, ...] = static_field(default=())

    def __init__(
        self,
        threads: int = 2,
        addresses: int = 3,
        data: int = 2,
        steps: int = 20,
        rounds: int = 1,
        free=(),
        reuse=(),
    ):
        for name, value in (
            ("threads", threads),
            ("addresses", addresses),
            ("data", data),
            ("rounds", rounds),
        ):
            if value < 1:
                raise ConfigurationError(f"`{name}` must be positive, got {value}.")
        if steps < 0:
            raise ConfigurationError(f"`steps` must be non-negative, got {steps}.")
        free = tuple(sorted(set(free)))
        reuse = tuple(sorted(set(reuse)))
        if not set(free) <= set(range(addresses)):
            raise ConfigurationError(
                f"Freeable addresses {free} are not all in the pool."
            )
        if not set(reuse) <= set(free):
            raise ConfigurationError(
                f"Reusable addresses {reuse} must be a subset of the freeable ones."
            )
        self.threads = threads
        self.addresses = addresses
        self.data = data
        self.steps = steps
        self.rounds = rounds
        self.free = free
        self.reuse = reuse

    @classmethod
    def gc(cls, **kwargs) -> "ExplorationBudget":
        """Garbage-collected semantics: nothing is freed, nothing is reused."""
        return cls(free=(), reuse=(), **kwargs)

    @classmethod
    def liberal(cls, **kwargs) -> "ExplorationBudget":
        """Every address may be freed and reallocated."""
        addresses = kwargs.get("addresses", 3)
        pool = tuple(range(addresses))
        return cls(free=pool, reuse=pool, **kwargs)

    @property
    def is_gc(self) -> bool:
        return not self.free

    def to_json(self):
        return {
            "threads": self.threads,
            "addresses": self.addresses,
            "data": self.data,
            "steps": self.steps,
            "rounds": self.rounds,
            "free": list(self.free),
            "reuse": list(self.reuse),
        }
