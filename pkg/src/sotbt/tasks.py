"""Task vocabulary: error functions, their Jacobians, and constraint rows.

A task evaluates to an error vector e(q) and Jacobian J(q); the P control
law turns them into task-space velocity targets, which the bound
transcription rewrites as upper-bound rows for the cascade.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, UnknownKind
from .kinematics import (
    angular_jacobian,
    compute_chain,
    position_jacobian,
    quaternion_from_matrix,
)

_UNIT_TOL = 1e-9


class TaskKind(Enum):
    POINT_REACH = "point_reach"
    PLANE_AVOID = "plane_avoid"
    LINE_FOLLOW = "line_follow"
    JOINT_VELOCITY_BOX = "joint_velocity_box"
    POSE_REACH = "pose_reach"


@dataclass(frozen=True)
class BlockingParams:
    """Thresholds for a blocking task: done when ||e|| <= error_threshold,
    failed when the execution time exceeds time_threshold."""

    error_threshold: float
    time_threshold: float

    def __post_init__(self):
        if self.error_threshold <= 0 or self.time_threshold <= 0:
            raise ValueError("blocking thresholds must be positive")


@dataclass(frozen=True)
class TaskSpec:
    id: str
    kind: TaskKind
    params: dict
    priority: int
    gain: float = 1.0
    blocking: BlockingParams = None

    def __post_init__(self):
        if self.priority < 1:
            raise ValueError(f"task {self.id}: priority must be >= 1")
        gain = np.atleast_1d(np.asarray(self.gain, dtype=float))
        if (gain <= 0).any():
            raise ValueError(f"task {self.id}: gain entries must be positive")
        _validate_params(self.kind, self.params, self.id)

    def resolve(self, ctx):
        return self


def _unit(v, what):
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
        raise ValueError(f"{what} must be unit norm")
    return v


def _validate_params(kind, params, task_id):
    try:
        if kind == TaskKind.POINT_REACH:
            np.asarray(params["goal"], dtype=float)
        elif kind == TaskKind.PLANE_AVOID:
            _unit(params["normal"], f"task {task_id}: plane normal")
            float(params["offset"])
            float(params.get("margin", 0.02))
        elif kind == TaskKind.LINE_FOLLOW:
            np.asarray(params["p0"], dtype=float)
            _unit(params["direction"], f"task {task_id}: line direction")
        elif kind == TaskKind.JOINT_VELOCITY_BOX:
            params.get("bounds")
        elif kind == TaskKind.POSE_REACH:
            np.asarray(params["goal_position"], dtype=float)
            _unit(np.asarray(params["goal_orientation"], dtype=float),
                  f"task {task_id}: goal quaternion")
        else:
            raise UnknownKind(f"task {task_id}: unknown kind {kind!r}")
    except KeyError as exc:
        raise ValueError(f"task {task_id}: missing parameter {exc}") from exc


@dataclass(frozen=True)
class TaskEvaluation:
    task_id: str
    e: np.ndarray
    J: np.ndarray
    bound_kind: str  # 'equality' | 'upper' | 'double'
    velocity_bounds: tuple = None  # (lower, upper) arrays, joint_velocity_box only

    def __post_init__(self):
        object.__setattr__(self, "e", np.atleast_1d(np.asarray(self.e, dtype=float)))
        object.__setattr__(self, "J", np.atleast_2d(np.asarray(self.J, dtype=float)))
        if self.e.shape[0] != self.J.shape[0]:
            raise DimensionMismatch(
                f"task {self.task_id}: e has {self.e.shape[0]} entries, "
                f"J has {self.J.shape[0]} rows"
            )

    @property
    def error_norm(self):
        return float(np.linalg.norm(self.e))


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation_log(R):
    """Rotation vector of R (axis * angle)."""
    q = quaternion_from_matrix(R)
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v  # small-angle: log ~ 2 * vector part
    angle = 2.0 * np.arctan2(s, q[0])
    return v / s * angle


def _left_jacobian_inverse(phi):
    """Inverse left Jacobian of SO(3) at rotation vector phi: maps the
    world angular velocity to the rate of the log-error."""
    theta = np.linalg.norm(phi)
    S = _skew(phi)
    if theta < 1e-6:
        return np.eye(3) - 0.5 * S + (S @ S) / 12.0
    coeff = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * S + coeff * (S @ S)


def _quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def evaluate(task, model, state, chain=None):
    """Evaluate one task at the given joint state."""
    if chain is None:
        chain = compute_chain(model, state.q)
    x = chain.ee_position
    p = task.params

    if task.kind == TaskKind.POINT_REACH:
        goal = np.asarray(p["goal"], dtype=float)
        return TaskEvaluation(task.id, x - goal,
                              position_jacobian(model, state.q, chain), "equality")

    if task.kind == TaskKind.PLANE_AVOID:
        normal = np.asarray(p["normal"], dtype=float)
        margin = float(p.get("margin", 0.02))
        e = (float(p["offset"]) + margin) - normal @ x
        J = -(normal @ position_jacobian(model, state.q, chain))
        return TaskEvaluation(task.id, [e], J.reshape(1, -1), "upper")

    if task.kind == TaskKind.LINE_FOLLOW:
        p0 = np.asarray(p["p0"], dtype=float)
        u = np.asarray(p["direction"], dtype=float)
        proj = np.eye(3) - np.outer(u, u)
        return TaskEvaluation(task.id, proj @ (x - p0),
                              proj @ position_jacobian(model, state.q, chain), "equality")

    if task.kind == TaskKind.JOINT_VELOCITY_BOX:
        lo, hi = _box_bounds(task, model)
        return TaskEvaluation(task.id, np.zeros(0), np.zeros((0, model.n)),
                              "double", velocity_bounds=(lo, hi))

    if task.kind == TaskKind.POSE_REACH:
        goal_pos = np.asarray(p["goal_position"], dtype=float)
        R_goal = _quat_to_matrix(np.asarray(p["goal_orientation"], dtype=float))
        e_rot = rotation_log(chain.ee_rotation @ R_goal.T)
        J_pos = position_jacobian(model, state.q, chain)
        J_rot = _left_jacobian_inverse(e_rot) @ angular_jacobian(model, state.q, chain)
        return TaskEvaluation(task.id, np.concatenate([x - goal_pos, e_rot]),
                              np.vstack([J_pos, J_rot]), "equality")

    raise UnknownKind(f"task {task.id}: unknown kind {task.kind!r}")


def _box_bounds(task, model):
    bounds = task.params.get("bounds")
    if bounds is None:
        vlim = model.velocity_limits
        return -vlim, vlim.copy()
    lo = np.asarray([b[0] for b in bounds], dtype=float)
    hi = np.asarray([b[1] for b in bounds], dtype=float)
    if lo.shape[0] != model.n:
        raise DimensionMismatch(
            f"task {task.id}: box bounds cover {lo.shape[0]} joints, model has {model.n}"
        )
    return lo, hi


@dataclass(frozen=True)
class ConstraintBlock:
    """Raw rows for the bound transcription: kind applies to the whole block."""

    J: np.ndarray
    target: np.ndarray
    kind: str
    lower_target: np.ndarray = None


def to_constraint_rows(ev, gain, model_limits=None):
    """P control law: target velocity is -gain * e, emitted with the task's
    bound kind.  Velocity boxes emit identity rows bounded by the box."""
    if ev.velocity_bounds is not None:
        lo, hi = ev.velocity_bounds
        return [ConstraintBlock(J=np.eye(lo.shape[0]), target=hi, kind="double",
                                lower_target=lo)]
    gain = np.atleast_1d(np.asarray(gain, dtype=float))
    if gain.shape[0] not in (1, ev.e.shape[0]):
        raise DimensionMismatch("gain dimension does not match the error")
    return [ConstraintBlock(J=ev.J, target=-gain * ev.e, kind=ev.bound_kind)]
