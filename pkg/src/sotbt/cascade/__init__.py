"""Hierarchical QP cascade: types, bound transcription, and the solver."""

from ._backend import available_backends, backend_name
from .solver import (
    DEFAULT_REGULARIZATION,
    FEASIBILITY_TOL,
    dump_problem,
    solve_cascade,
    solve_level,
    transcribe_bounds,
)
from .types import CascadeProblem, CascadeSolution, LevelConstraint

__all__ = [
    "available_backends",
    "backend_name",
    "CascadeProblem",
    "CascadeSolution",
    "LevelConstraint",
    "DEFAULT_REGULARIZATION",
    "FEASIBILITY_TOL",
    "dump_problem",
    "solve_cascade",
    "solve_level",
    "transcribe_bounds",
]
