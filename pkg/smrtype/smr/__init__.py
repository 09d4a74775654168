from .automaton import (
    Event,
    EventSig,
    SmrAutomaton,
    Transition,
    accepts,
    build_automaton,
    free_event,
    post_image,
    product,
    run_history,
)
from .closure import (
    closure_tables,
    interference_closure,
    largest_closed_subset,
    safe_locations,
)
from .guards import Guard, Literal
from .library import builtin, builtin_names, load_automaton
from .nfa import (
    AbstractEvent,
    AbstractNfa,
    abstract_to_nfa,
    call_discipline,
    nfa_language_inclusion,
    reachable_states,
)
from .parser import parse_automaton
