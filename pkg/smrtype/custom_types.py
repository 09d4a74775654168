import typing
from typing import Any


if getattr(typing, "GENERATING_DOCUMENTATION", False):
    PyTree = "PyTree"
    LocationSet = "LocationSet"
else:
    PyTree = Any
    # Sets of automaton locations are bitmasks over the automaton's location indices.
    LocationSet = int

# "proc:path", e.g. "dequeue:1.0.1"
ProgramPoint = str
