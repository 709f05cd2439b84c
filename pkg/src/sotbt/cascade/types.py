"""Data carriers for the hierarchical cascade."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch


def _as_matrix(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {A.shape}")
    return A


def _as_vector(b):
    b = np.asarray(b, dtype=float)
    if b.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {b.shape}")
    return b


@dataclass(frozen=True)
class LevelConstraint:
    """One priority level: stacked upper-bound rows A qdot <= b."""

    level: int
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A))
        object.__setattr__(self, "b", _as_vector(self.b))
        if self.level < 1:
            raise ValueError(f"priority index must be positive, got {self.level}")
        if self.A.shape[0] != self.b.shape[0]:
            raise DimensionMismatch(
                f"A has {self.A.shape[0]} rows but b has {self.b.shape[0]} entries"
            )
        if self.A.shape[0] < 1:
            raise DimensionMismatch("a level must carry at least one row")
        if not (np.isfinite(self.A).all() and np.isfinite(self.b).all()):
            raise ValueError("non-finite entries in level constraint")


@dataclass(frozen=True)
class CascadeProblem:
    """Ordered stack of levels over `n` joint velocities."""

    n: int
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.n < 1:
            raise ValueError(f"dof count must be positive, got {self.n}")
        prev = 0
        for lc in self.levels:
            if lc.level <= prev:
                raise ValueError("level indices must be strictly increasing")
            prev = lc.level
            if lc.A.shape[1] != self.n:
                raise DimensionMismatch(
                    f"level {lc.level}: A has {lc.A.shape[1]} columns, expected {self.n}"
                )


@dataclass(frozen=True)
class CascadeSolution:
    """Joint velocity plus the per-level slack vectors that were frozen."""

    qdot: np.ndarray
    slacks: tuple
    objective_per_level: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "qdot", _as_vector(self.qdot))
        object.__setattr__(self, "slacks", tuple(np.asarray(w, dtype=float) for w in self.slacks))
        if self.objective_per_level is None:
            object.__setattr__(
                self,
                "objective_per_level",
                tuple(float(np.linalg.norm(w)) for w in self.slacks),
            )
        else:
            object.__setattr__(self, "objective_per_level", tuple(self.objective_per_level))
