from . import lang, oracle, smr
from .annotator import (
    ActiveAfterRecheck,
    ActiveBeforeFailure,
    AngelTemplate,
    RepairResult,
    Tactic,
    repair,
    tactics_for,
)
from .domain import (
    A,
    L,
    S,
    TOP,
    CanonicalType,
    TypeEnvironment,
    TypeLattice,
    env_join,
    env_leq,
    initial_environment,
    is_top,
    rm_transient,
)
from .errors import AutomatonError, ConfigurationError, ParseError
from .inference import (
    ConstraintSystem,
    Failure,
    TypeReport,
    build_constraints,
    solve,
    typecheck,
)
from .instrument import instrument, size_ratio
from .lang import erase_annotations, parse_program, preprocess, pretty_print
from .module import Module, static_field
from .oracle import ExplorationBudget, ExplorationReport, explore
from .rules import SafeCallTable, safe_call, sp, verify_safe_call_table
from .smr import load_automaton, parse_automaton, product
from .tree import tree_at, tree_equal


__version__ = "0.1.0"
