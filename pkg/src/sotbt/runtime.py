"""Live task stack and the high-frequency control step.

The behavior tree mutates the stack (as one atomic batch per tick); the
control loop reads consistent snapshots, assembles a cascade problem per
priority level, solves it and integrates the joint state.
"""

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from .cascade import (
    CascadeProblem,
    DEFAULT_REGULARIZATION,
    LevelConstraint,
    solve_cascade,
    transcribe_bounds,
)
from .kinematics import JointState, compute_chain
from .tasks import TaskKind, evaluate, to_constraint_rows

logger = logging.getLogger(__name__)

_SINGULARITY_SV_TOL = 1e-6


@dataclass(frozen=True)
class ActiveTask:
    spec: object
    t_set: float
    order: int

    def execution_time(self, now):
        return now - self.t_set


@dataclass(frozen=True)
class StackSnapshot:
    tasks: tuple  # ActiveTask, ordered by (priority, insertion order)
    revision: int

    @property
    def task_ids(self):
        return tuple(t.spec.id for t in self.tasks)


class TaskStack:
    """Id-keyed set of active tasks.  One mutating client and one reading
    client may run concurrently; mutations inside ``batch()`` are applied
    atomically with respect to ``snapshot()``."""

    def __init__(self):
        self._entries = {}
        self._revision = 0
        self._order = 0
        self._lock = threading.RLock()

    @property
    def revision(self):
        return self._revision

    def __len__(self):
        return len(self._entries)

    def __contains__(self, task_id):
        return task_id in self._entries

    def batch(self):
        return self._lock

    def set_task(self, spec, now):
        """Upsert by id; an existing task keeps its t_set and insertion order
        so re-ticking does not reset the timeout clock."""
        with self._lock:
            prev = self._entries.get(spec.id)
            if prev is None:
                self._entries[spec.id] = ActiveTask(spec=spec, t_set=now, order=self._order)
                self._order += 1
            else:
                self._entries[spec.id] = ActiveTask(spec=spec, t_set=prev.t_set,
                                                    order=prev.order)
            self._revision += 1

    def remove_tasks(self, ids):
        with self._lock:
            changed = False
            for task_id in ids:
                if self._entries.pop(task_id, None) is not None:
                    changed = True
            if changed:
                self._revision += 1

    def get(self, task_id):
        with self._lock:
            return self._entries.get(task_id)

    def snapshot(self):
        with self._lock:
            ordered = sorted(self._entries.values(),
                             key=lambda at: (at.spec.priority, at.order))
            return StackSnapshot(tasks=tuple(ordered), revision=self._revision)


@dataclass
class StepInfo:
    """Per-step internals recorded in the run trace."""

    qdot: np.ndarray
    task_errors: dict = field(default_factory=dict)  # id -> ||e||
    level_slacks: tuple = ()                         # ||w_p|| per level
    active_ids: tuple = ()
    revision: int = 0


def build_problem(model, state, snap, chain=None):
    """Stack every active task into per-priority LevelConstraints.

    Returns (problem, task error norms, rank_deficient flag); the flag is set
    when an equality task Jacobian lost rank, i.e. the regularized solve is
    load-bearing.
    """
    if chain is None and snap.tasks:
        chain = compute_chain(model, state.q)
    by_priority = {}
    task_errors = {}
    rank_deficient = False
    for at in snap.tasks:
        ev = evaluate(at.spec, model, state, chain=chain)
        task_errors[at.spec.id] = ev.error_norm
        # LineFollow is rank-2 by construction, so only full-rank reach
        # Jacobians are meaningful singularity probes.
        if at.spec.kind in (TaskKind.POINT_REACH, TaskKind.POSE_REACH):
            sv = np.linalg.svd(ev.J, compute_uv=False)
            if sv[min(ev.J.shape) - 1] < _SINGULARITY_SV_TOL:
                rank_deficient = True
        for block in to_constraint_rows(ev, at.spec.gain, model.velocity_limits):
            A, b = transcribe_bounds(block.kind, block.J, block.target,
                                     block.lower_target)
            by_priority.setdefault(at.spec.priority, []).append((A, b))
    levels = []
    for rank, prio in enumerate(sorted(by_priority), start=1):
        blocks = by_priority[prio]
        A = np.vstack([blk[0] for blk in blocks])
        b = np.concatenate([blk[1] for blk in blocks])
        levels.append(LevelConstraint(level=rank, A=A, b=b))
    return CascadeProblem(n=model.n, levels=tuple(levels)), task_errors, rank_deficient


def control_step_ex(model, state, snap, dt, regularization=DEFAULT_REGULARIZATION,
                    backend=None):
    """One control step: solve the snapshot's cascade, integrate with explicit
    Euler, clamp to position limits.  Returns (new state, StepInfo)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not snap.tasks:
        new_state = JointState(q=state.q.copy(), qdot=np.zeros(model.n),
                               t=state.t + dt)
        return new_state, StepInfo(qdot=np.zeros(model.n), active_ids=(),
                                   revision=snap.revision)

    problem, task_errors, rank_deficient = build_problem(model, state, snap)
    if rank_deficient:
        logger.warning("rank-deficient reach Jacobian at t=%.4f; "
                       "regularized solve in effect", state.t)
    sol = solve_cascade(problem, regularization=regularization, backend=backend)
    lo, hi = model.position_limits
    q_new = np.clip(state.q + sol.qdot * dt, lo, hi)
    new_state = JointState(q=q_new, qdot=sol.qdot, t=state.t + dt)
    info = StepInfo(qdot=sol.qdot, task_errors=task_errors,
                    level_slacks=sol.objective_per_level,
                    active_ids=snap.task_ids, revision=snap.revision)
    return new_state, info


def control_step(model, state, snap, dt, regularization=DEFAULT_REGULARIZATION,
                 backend=None):
    new_state, _ = control_step_ex(model, state, snap, dt, regularization, backend)
    return new_state


