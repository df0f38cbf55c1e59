"""Planar biped description: links, motor-to-joint coupling, limits, mirror maps.

The robot lives in the sagittal (x-z) plane: a floating torso with
(x, z, pitch) freedom and three pitch motors per leg (hip, knee, ankle).
Knee and ankle motors drive the joints through a linkage, so motor
coordinates and joint coordinates differ by a constant linear map.
All joint angles are measured relative to the nominal standing pose
(q = 0 is the crouched stand with both soles flat on the ground).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

GRAVITY = 9.81

# Motor ordering used everywhere: left leg then right leg, hip/knee/ankle.
MOTOR_NAMES = ("l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle")

# Observation vector layout (fixed concatenation, 30 dims for the 6-motor biped):
#   base linear velocity (robot frame), base angular velocity, gravity direction
#   (robot frame), motor positions, motor velocities, previous action, command.
OBS_LAYOUT = (
    ("lin_vel", 3),
    ("ang_vel", 3),
    ("gravity", 3),
    ("motor_pos", 6),
    ("motor_vel", 6),
    ("prev_action", 6),
    ("command", 3),
)
OBS_DIM = sum(n for _, n in OBS_LAYOUT)


def obs_slices() -> dict[str, slice]:
    out, start = {}, 0
    for name, width in OBS_LAYOUT:
        out[name] = slice(start, start + width)
        start += width
    return out


OBS_SLICES = obs_slices()


class DimensionError(ValueError):
    """Vector length does not match the model's motor/joint count."""


@dataclass(frozen=True)
class CouplingMap:
    """Constant linear map from motor coordinates to joint coordinates."""

    matrix: np.ndarray   # joint_count x motor_count
    inverse: np.ndarray  # motor_count x joint_count

    @classmethod
    def from_matrix(cls, matrix: Sequence) -> "CouplingMap":
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"coupling matrix must be square, got shape {m.shape}")
        det = np.linalg.det(m)
        if abs(det) <= 1e-9:
            raise ValueError(f"coupling matrix is singular (|det| = {abs(det):.2e})")
        inv = np.linalg.inv(m)
        return cls(matrix=m, inverse=inv)

    @classmethod
    def from_leg_block(cls, block: Sequence, legs: int = 2) -> "CouplingMap":
        """Block-diagonal coupling: per leg, hip is direct drive and the
        2x2 `block` couples the knee/ankle motor pair to the knee/ankle joints."""
        b = np.array(block, dtype=float)
        if b.shape != (2, 2):
            raise ValueError(f"knee-ankle block must be 2x2, got {b.shape}")
        per_leg = np.eye(3)
        per_leg[1:, 1:] = b
        full = np.kron(np.eye(legs), per_leg)
        return cls.from_matrix(full)

    @classmethod
    def identity(cls, n: int) -> "CouplingMap":
        return cls.from_matrix(np.eye(n))


# Default knee-ankle transmission: the ankle joint counter-rotates with the
# knee motor, so the ankle motor commands the shank-relative foot angle.
DEFAULT_LEG_BLOCK = ((1.0, 0.0), (-1.0, 1.0))


@dataclass(frozen=True)
class SymmetryMaps:
    """Signed permutations swapping left/right across the x-z plane.

    Stored as (permutation, signs) pairs; `mat` reconstructs the dense
    matrix when needed. Both maps are involutions.
    """

    obs_perm: np.ndarray
    obs_sign: np.ndarray
    act_perm: np.ndarray
    act_sign: np.ndarray

    def obs_mat(self) -> np.ndarray:
        n = self.obs_perm.size
        m = np.zeros((n, n))
        m[np.arange(n), self.obs_perm] = self.obs_sign
        return m

    def act_mat(self) -> np.ndarray:
        n = self.act_perm.size
        m = np.zeros((n, n))
        m[np.arange(n), self.act_perm] = self.act_sign
        return m

    def apply_obs(self, obs: np.ndarray) -> np.ndarray:
        return obs[..., self.obs_perm] * self.obs_sign

    def apply_act(self, act: np.ndarray) -> np.ndarray:
        return act[..., self.act_perm] * self.act_sign


def _leg_swap_perm(n_motors: int) -> np.ndarray:
    half = n_motors // 2
    return np.concatenate([np.arange(half, n_motors), np.arange(half)])


def default_symmetry(n_motors: int = 6) -> SymmetryMaps:
    """Mirror maps for the default observation layout.

    Left/right motor blocks swap; the lateral velocity, roll/yaw rates,
    lateral gravity component, lateral command and yaw-rate command flip sign.
    Sagittal quantities are unchanged.
    """
    swap = _leg_swap_perm(n_motors)
    perm = np.arange(OBS_DIM)
    sign = np.ones(OBS_DIM)
    s = OBS_SLICES
    sign[s["lin_vel"]] = (1, -1, 1)
    sign[s["ang_vel"]] = (-1, 1, -1)
    sign[s["gravity"]] = (1, -1, 1)
    for name in ("motor_pos", "motor_vel", "prev_action"):
        perm[s[name]] = s[name].start + swap
    sign[s["command"]] = (1, -1, -1)
    return SymmetryMaps(
        obs_perm=perm,
        obs_sign=sign,
        act_perm=swap.copy(),
        act_sign=np.ones(n_motors),
    )


@dataclass(frozen=True)
class ChainLink:
    """One revolute link of the planar tree.

    parent: index into the body list (0 = torso/base).
    anchor: joint pivot expressed in the parent frame.
    mount: fixed angle added at the joint so q = 0 is the standing pose.
    com: center of mass in the link frame; length: pivot-to-distal-pivot.
    """

    parent: int
    anchor: tuple[float, float]
    mount: float
    mass: float
    length: float
    com: tuple[float, float]
    inertia: float


@dataclass(frozen=True)
class ContactPoint:
    """Ground contact point fixed on a link (heel/toe of a foot)."""

    link: int                  # body index (0 = base)
    local: tuple[float, float]
    foot: int                  # 0 = left, 1 = right


@dataclass(frozen=True)
class RobotModel:
    """Immutable robot description shared across environment workers."""

    base_mass: float
    base_com: tuple[float, float]
    base_inertia: float
    links: tuple[ChainLink, ...]
    coupling: CouplingMap
    joint_pos_limits: np.ndarray   # (joint_count, 2) in joint space, min < max
    torque_limits: np.ndarray      # (motor_count,) N*m
    kp: np.ndarray                 # (motor_count,) N*m/rad
    kd: np.ndarray                 # (motor_count,) N*m*s/rad
    contact_points: tuple[ContactPoint, ...]
    symmetry: SymmetryMaps | None = None
    floating_base: bool = True

    def __post_init__(self):
        if self.base_mass <= 0 or self.base_inertia <= 0:
            raise ValueError("base mass and inertia must be strictly positive")
        for i, ln in enumerate(self.links):
            if ln.mass <= 0 or ln.length <= 0 or ln.inertia <= 0:
                raise ValueError(f"link {i}: mass, length, inertia must be positive")
        if self.coupling.matrix.shape != (self.joint_count, self.motor_count):
            raise ValueError("coupling matrix shape does not match link count")
        if self.motor_count != self.joint_count:
            raise ValueError("reduced coordinates require motor_count == joint_count")
        lim = self.joint_pos_limits
        if lim.shape != (self.joint_count, 2) or np.any(lim[:, 0] >= lim[:, 1]):
            raise ValueError("joint limits must be (min, max) pairs with min < max")
        if np.any(self.torque_limits <= 0):
            raise ValueError("torque limits must be strictly positive")
        err = np.abs(self.coupling.matrix @ self.coupling.inverse - np.eye(self.motor_count))
        if err.max() > 1e-12:
            raise ValueError("coupling inverse is not an inverse to 1e-12")

    @property
    def motor_count(self) -> int:
        return len(self.links)

    @property
    def joint_count(self) -> int:
        return len(self.links)

    @property
    def total_mass(self) -> float:
        return self.base_mass + sum(ln.mass for ln in self.links)

    @property
    def n_feet(self) -> int:
        feet = {cp.foot for cp in self.contact_points}
        return len(feet)

    def motor_pos_limits(self) -> np.ndarray:
        """Axis-aligned bounding box of the joint-limit box pulled back to
        motor space (exact per-axis extent of the linear image)."""
        inv = self.coupling.inverse
        lo = np.minimum(inv, 0) @ self.joint_pos_limits[:, 1] + np.maximum(inv, 0) @ self.joint_pos_limits[:, 0]
        hi = np.minimum(inv, 0) @ self.joint_pos_limits[:, 0] + np.maximum(inv, 0) @ self.joint_pos_limits[:, 1]
        return np.stack([lo, hi], axis=1)

    # --- coupling algebra ---------------------------------------------------

    def joints_from_motors(self, motor_pos: np.ndarray) -> np.ndarray:
        """Map motor positions (or velocities: the map is linear) to joint space."""
        v = np.asarray(motor_pos, dtype=float)
        if v.shape[-1] != self.motor_count:
            raise DimensionError(f"expected {self.motor_count} motors, got {v.shape[-1]}")
        return v @ self.coupling.matrix.T

    def motors_from_joints(self, joint_pos: np.ndarray) -> np.ndarray:
        v = np.asarray(joint_pos, dtype=float)
        if v.shape[-1] != self.joint_count:
            raise DimensionError(f"expected {self.joint_count} joints, got {v.shape[-1]}")
        return v @ self.coupling.inverse.T

    def motor_torques_from_joint_torques(self, joint_tau: np.ndarray) -> np.ndarray:
        """Virtual-work dual of the coupling map: tau_m = C^T tau_j, which
        preserves mechanical power for any velocity vector."""
        v = np.asarray(joint_tau, dtype=float)
        if v.shape[-1] != self.joint_count:
            raise DimensionError(f"expected {self.joint_count} joint torques, got {v.shape[-1]}")
        return v @ self.coupling.matrix

    def with_coupling(self, coupling: CouplingMap) -> "RobotModel":
        return dataclasses.replace(self, coupling=coupling)

    def joint_limit_overshoot(self, motor_pos: np.ndarray) -> np.ndarray:
        """Per-sample sum of upper-limit violations, computed in joint space."""
        q = self.joints_from_motors(motor_pos)
        return np.maximum(q - self.joint_pos_limits[:, 1], 0.0).sum(axis=-1)


def mirror_observation(obs: np.ndarray, maps: SymmetryMaps) -> np.ndarray:
    return maps.apply_obs(np.asarray(obs, dtype=float))


def mirror_action(act: np.ndarray, maps: SymmetryMaps) -> np.ndarray:
    return maps.apply_act(np.asarray(act, dtype=float))


# --- default desk robot ------------------------------------------------------

#: Geometry/mass defaults for the desk biped (totals 20 kg).
DESK_DEFAULTS = dict(
    torso_mass=11.0,
    torso_inertia=0.15,
    torso_com_height=0.20,
    thigh_mass=2.4,
    thigh_length=0.22,
    shank_mass=1.5,
    shank_length=0.22,
    foot_mass=0.6,
    foot_inertia=0.0015,
    ankle_height=0.05,
    heel_x=-0.05,
    toe_x=0.11,
    # standing crouch: absolute hip/knee/ankle angles of the zero pose
    hip_mount=0.2,
    knee_mount=-0.4,
    ankle_mount=0.2,
)

DESK_JOINT_LIMITS = dict(
    hip=(-1.0, 1.0),
    knee=(-1.4, 0.5),
    ankle=(-1.0, 0.8),
)

DESK_TORQUE_LIMITS = (30.0, 30.0, 20.0)  # hip, knee, ankle N*m
DESK_KP = 40.0
DESK_KD = 1.0


def default_biped(
    coupling_block: Sequence = DEFAULT_LEG_BLOCK,
    coupling_matrix: Sequence | None = None,
    joint_limits: dict | None = None,
    torque_limits: Sequence = DESK_TORQUE_LIMITS,
    kp: float | Sequence = DESK_KP,
    kd: float | Sequence = DESK_KD,
    geometry: dict | None = None,
) -> RobotModel:
    """Build the desk biped: floating torso plus hip/knee/ankle per leg."""
    g = dict(DESK_DEFAULTS)
    if geometry:
        unknown = set(geometry) - set(g)
        if unknown:
            raise ValueError(f"unknown geometry keys: {sorted(unknown)}")
        g.update(geometry)
    jl = dict(DESK_JOINT_LIMITS)
    if joint_limits:
        unknown = set(joint_limits) - set(jl)
        if unknown:
            raise ValueError(f"unknown joint-limit keys: {sorted(unknown)}")
        jl.update(joint_limits)

    def leg(parent_of_hip: int):
        thigh = ChainLink(
            parent=parent_of_hip, anchor=(0.0, 0.0), mount=g["hip_mount"],
            mass=g["thigh_mass"], length=g["thigh_length"],
            com=(0.0, -g["thigh_length"] / 2),
            inertia=g["thigh_mass"] * g["thigh_length"] ** 2 / 12,
        )
        shank = ChainLink(
            parent=0, anchor=(0.0, -g["thigh_length"]), mount=g["knee_mount"],
            mass=g["shank_mass"], length=g["shank_length"],
            com=(0.0, -g["shank_length"] / 2),
            inertia=g["shank_mass"] * g["shank_length"] ** 2 / 12,
        )
        foot = ChainLink(
            parent=0, anchor=(0.0, -g["shank_length"]), mount=g["ankle_mount"],
            mass=g["foot_mass"], length=g["toe_x"] - g["heel_x"],
            com=(0.5 * (g["heel_x"] + g["toe_x"]), -g["ankle_height"] * 0.7),
            inertia=g["foot_inertia"],
        )
        return thigh, shank, foot

    # body indices: 0 torso, 1-3 left thigh/shank/foot, 4-6 right
    l_thigh, l_shank, l_foot = leg(0)
    r_thigh, r_shank, r_foot = leg(0)
    links = (
        l_thigh,
        dataclasses.replace(l_shank, parent=1),
        dataclasses.replace(l_foot, parent=2),
        r_thigh,
        dataclasses.replace(r_shank, parent=4),
        dataclasses.replace(r_foot, parent=5),
    )

    if coupling_matrix is not None:
        coupling = CouplingMap.from_matrix(coupling_matrix)
    else:
        coupling = CouplingMap.from_leg_block(coupling_block)

    per_leg_limits = [jl["hip"], jl["knee"], jl["ankle"]]
    limits = np.array(per_leg_limits * 2, dtype=float)
    tq = np.array(list(torque_limits) * 2, dtype=float)
    kp_v = np.full(6, kp, dtype=float) if np.isscalar(kp) else np.asarray(kp, dtype=float)
    kd_v = np.full(6, kd, dtype=float) if np.isscalar(kd) else np.asarray(kd, dtype=float)

    contacts = (
        ContactPoint(link=3, local=(g["heel_x"], -g["ankle_height"]), foot=0),
        ContactPoint(link=3, local=(g["toe_x"], -g["ankle_height"]), foot=0),
        ContactPoint(link=6, local=(g["heel_x"], -g["ankle_height"]), foot=1),
        ContactPoint(link=6, local=(g["toe_x"], -g["ankle_height"]), foot=1),
    )

    return RobotModel(
        base_mass=g["torso_mass"],
        base_com=(0.0, g["torso_com_height"]),
        base_inertia=g["torso_inertia"],
        links=links,
        coupling=coupling,
        joint_pos_limits=limits,
        torque_limits=tq,
        kp=kp_v,
        kd=kd_v,
        contact_points=contacts,
        symmetry=default_symmetry(6),
    )


def single_pendulum(
    mass: float = 1.0,
    length: float = 0.5,
    com: float = 0.25,
    inertia: float | None = None,
    mount: float = 0.0,
) -> RobotModel:
    """One revolute link on a fixed base: the analytic test subcase."""
    rod = ChainLink(
        parent=0, anchor=(0.0, 0.0), mount=mount, mass=mass, length=length,
        com=(0.0, -com), inertia=inertia if inertia is not None else mass * length ** 2 / 12,
    )
    return RobotModel(
        base_mass=1.0, base_com=(0.0, 0.0), base_inertia=1.0,
        links=(rod,),
        coupling=CouplingMap.identity(1),
        joint_pos_limits=np.array([[-10.0, 10.0]]),
        torque_limits=np.array([100.0]),
        kp=np.array([0.0]),
        kd=np.array([0.0]),
        contact_points=(),
        symmetry=None,
        floating_base=False,
    )
