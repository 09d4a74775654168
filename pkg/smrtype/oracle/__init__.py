from .config import ExplorationBudget
from .explore import ExplorationReport, TraceStep, explore, fingerprint
from .semantics import (
    ASSERTS,
    INVARIANTS,
    MODES,
    PRF,
    UNDEF,
    UNSAFE_ACCESS,
    UNSAFE_ASSUMPTION,
    UNSAFE_CALL,
    UNSAFE_RETIRE,
    Configuration,
    Semantics,
)
