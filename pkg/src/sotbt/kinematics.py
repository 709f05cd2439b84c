"""Serial revolute-chain models, forward kinematics and geometric Jacobians.

Models are immutable after load; every function here is pure.  A bundled
7-DOF model ships as ``models/seven_dof.yaml``; planar helper builders cover
the analytic test cases.
"""

import importlib.resources
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import DimensionMismatch, NonFiniteEvaluation, ParseError

_UNIT_TOL = 1e-9


def rotation_about(axis, angle):
    """Rodrigues rotation matrix about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    kx, ky, kz = axis
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rpy_matrix(roll, pitch, yaw):
    """Fixed-axis XYZ roll/pitch/yaw convention (R = Rz Ry Rx)."""
    return (rotation_about((0, 0, 1), yaw)
            @ rotation_about((0, 1, 0), pitch)
            @ rotation_about((1, 0, 0), roll))


def quaternion_from_matrix(R):
    """Unit quaternion (w, x, y, z) from a rotation matrix, w >= 0."""
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))
        if abs(np.linalg.norm(self.orientation) - 1.0) > _UNIT_TOL:
            raise ValueError("quaternion is not unit norm")


@dataclass(frozen=True)
class Joint:
    """Revolute joint: origin transform in the parent frame, rotation axis in
    the joint frame, position limits (rad) and a velocity limit (rad/s)."""

    axis: np.ndarray
    origin_rotation: np.ndarray
    origin_translation: np.ndarray
    position_limits: tuple
    velocity_limit: float

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        object.__setattr__(self, "origin_rotation", np.asarray(self.origin_rotation, dtype=float))
        object.__setattr__(self, "origin_translation", np.asarray(self.origin_translation, dtype=float))
        if abs(np.linalg.norm(self.axis) - 1.0) > _UNIT_TOL:
            raise ValueError("joint axis is not unit norm")
        lo, hi = self.position_limits
        if not lo < hi:
            raise ValueError(f"position limits out of order: {lo} >= {hi}")


@dataclass(frozen=True)
class ManipulatorModel:
    name: str
    joints: tuple
    ee_rotation: np.ndarray
    ee_translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "ee_rotation", np.asarray(self.ee_rotation, dtype=float))
        object.__setattr__(self, "ee_translation", np.asarray(self.ee_translation, dtype=float))
        if len(self.joints) < 1:
            raise ValueError("a model needs at least one joint")

    @property
    def n(self):
        return len(self.joints)

    @property
    def position_limits(self):
        lo = np.array([j.position_limits[0] for j in self.joints])
        hi = np.array([j.position_limits[1] for j in self.joints])
        return lo, hi

    @property
    def velocity_limits(self):
        return np.array([j.velocity_limit for j in self.joints])


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qdot: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=float))
        if not (np.isfinite(self.q).all() and np.isfinite(self.qdot).all()):
            raise ValueError("non-finite joint state")


@dataclass(frozen=True)
class KinematicChain:
    """World-frame quantities shared by FK and both Jacobians at one q."""

    ee_position: np.ndarray
    ee_rotation: np.ndarray
    joint_origins: np.ndarray   # (n, 3)
    joint_axes: np.ndarray      # (n, 3), world frame


def compute_chain(model, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise DimensionMismatch(f"q has shape {q.shape}, expected ({model.n},)")
    R = np.eye(3)
    p = np.zeros(3)
    origins = np.empty((model.n, 3))
    axes = np.empty((model.n, 3))
    for j, joint in enumerate(model.joints):
        p = p + R @ joint.origin_translation
        R = R @ joint.origin_rotation
        origins[j] = p
        axes[j] = R @ joint.axis
        R = R @ rotation_about(joint.axis, q[j])
    p = p + R @ model.ee_translation
    R = R @ model.ee_rotation
    return KinematicChain(ee_position=p, ee_rotation=R,
                          joint_origins=origins, joint_axes=axes)


def forward_kinematics(model, q):
    chain = compute_chain(model, q)
    return Pose(position=chain.ee_position,
                orientation=quaternion_from_matrix(chain.ee_rotation))


def position_jacobian(model, q, chain=None):
    """3 x n geometric position Jacobian: column j = axis_j x (x_ee - o_j)."""
    if chain is None:
        chain = compute_chain(model, q)
    return np.cross(chain.joint_axes, chain.ee_position - chain.joint_origins).T


def angular_jacobian(model, q, chain=None):
    """3 x n angular Jacobian: column j = world-frame joint axis."""
    if chain is None:
        chain = compute_chain(model, q)
    return chain.joint_axes.T.copy()


def finite_difference_jacobian(f, q, h=1e-6):
    """Central-difference Jacobian of a vector-valued function of q."""
    if h <= 0:
        raise ValueError("step must be positive")
    q = np.asarray(q, dtype=float)
    cols = []
    for j in range(q.shape[0]):
        dq = np.zeros_like(q)
        dq[j] = h
        hi = np.asarray(f(q + dq), dtype=float)
        lo = np.asarray(f(q - dq), dtype=float)
        if not (np.isfinite(hi).all() and np.isfinite(lo).all()):
            raise NonFiniteEvaluation(f"f returned non-finite values near column {j}")
        cols.append((hi - lo) / (2.0 * h))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# Model file handling

_JOINT_KEYS = {"axis", "origin", "position_limits", "velocity_limit"}
_ORIGIN_KEYS = {"xyz", "rpy", "matrix"}


def _origin(d, where):
    extra = set(d) - _ORIGIN_KEYS
    if extra:
        raise ParseError(f"{where}: unknown origin keys {sorted(extra)}")
    if "rpy" in d and "matrix" in d:
        raise ParseError(f"{where}: give either rpy or matrix, not both")
    xyz = np.asarray(d.get("xyz", [0.0, 0.0, 0.0]), dtype=float)
    if "matrix" in d:
        R = np.asarray(d["matrix"], dtype=float)
        if R.shape != (3, 3):
            raise ParseError(f"{where}: rotation matrix must be 3x3")
        return R, xyz
    rpy = d.get("rpy", [0.0, 0.0, 0.0])
    return rpy_matrix(*[float(v) for v in rpy]), xyz


def model_from_dict(doc, name="model"):
    extra = set(doc) - {"name", "joints", "ee_offset"}
    if extra:
        raise ParseError(f"model: unknown keys {sorted(extra)}")
    joints = []
    for i, jd in enumerate(doc.get("joints", [])):
        extra = set(jd) - _JOINT_KEYS
        if extra:
            raise ParseError(f"joint {i}: unknown keys {sorted(extra)}")
        rot, trans = _origin(jd.get("origin", {}), f"joint {i}")
        joints.append(Joint(
            axis=np.asarray(jd["axis"], dtype=float),
            origin_rotation=rot,
            origin_translation=trans,
            position_limits=tuple(float(v) for v in jd["position_limits"]),
            velocity_limit=float(jd["velocity_limit"]),
        ))
    if not joints:
        raise ParseError("model declares no joints")
    ee_rot, ee_trans = _origin(doc.get("ee_offset", {}), "ee_offset")
    return ManipulatorModel(name=doc.get("name", name), joints=tuple(joints),
                            ee_rotation=ee_rot, ee_translation=ee_trans)


def load_model(path):
    with open(path, "r") as fh:
        doc = yaml.safe_load(fh)
    return model_from_dict(doc, name=str(path))


def load_bundled_model(name):
    ref = importlib.resources.files("sotbt") / "models" / f"{name}.yaml"
    if not ref.is_file():
        raise ParseError(f"no bundled model named {name!r}")
    return model_from_dict(yaml.safe_load(ref.read_text()), name=name)


def save_model(model, path):
    # Rotations are written as full matrices: float repr round-trips exactly,
    # which keeps reloaded FK output bit-identical.
    doc = {
        "name": model.name,
        "joints": [
            {
                "axis": [float(v) for v in j.axis],
                "origin": {
                    "xyz": [float(v) for v in j.origin_translation],
                    "matrix": [[float(v) for v in row] for row in j.origin_rotation],
                },
                "position_limits": [float(j.position_limits[0]), float(j.position_limits[1])],
                "velocity_limit": float(j.velocity_limit),
            }
            for j in model.joints
        ],
        "ee_offset": {
            "xyz": [float(v) for v in model.ee_translation],
            "matrix": [[float(v) for v in row] for row in model.ee_rotation],
        },
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


# ---------------------------------------------------------------------------
# Planar builders for analytic tests

def planar_arm(*lengths, position_limits=(-np.pi, np.pi), velocity_limit=5.0):
    """N-link planar arm in the xy plane: all joints rotate about z, each link
    extends along +x."""
    joints = []
    offset = np.zeros(3)
    for L in lengths:
        joints.append(Joint(axis=np.array([0.0, 0.0, 1.0]),
                            origin_rotation=np.eye(3),
                            origin_translation=offset,
                            position_limits=position_limits,
                            velocity_limit=velocity_limit))
        offset = np.array([float(L), 0.0, 0.0])
    return ManipulatorModel(name=f"planar{len(lengths)}", joints=tuple(joints),
                            ee_rotation=np.eye(3), ee_translation=offset)
