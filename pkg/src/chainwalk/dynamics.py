"""Batched rigid-body dynamics for the planar biped.

Reduced coordinates u = (base x, base z, pitch, motor angles). Joint angles
are Gamma @ u with Gamma = blockdiag(I3, coupling matrix), so the equations of
motion are assembled in joint space (mass matrix, gravity, Coriolis, contact)
and pulled back through Gamma. PD control, actuator friction, rotor inertia,
and torque saturation act directly on the motor coordinates.

Integration is semi-implicit Euler (velocity first) at a fixed physics dt.
Contact is a penalty normal spring-damper with regularized Coulomb tangential
friction. All state arrays carry a leading environment-batch dimension; a
batch of one is a single robot.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .model import GRAVITY, RobotModel

PHYSICS_DT = 1.0 / 400.0
DECIMATION = 8

# Velocity threshold for the dry-friction static-hold branch, rad/s.
STICTION_EPS = 0.01


def _perp(v: np.ndarray) -> np.ndarray:
    """90-degree rotation in the x-z plane: (x, z) -> (-z, x)."""
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def _rot(phi: np.ndarray, v_local: np.ndarray) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    x, z = v_local[..., 0], v_local[..., 1]
    return np.stack([c * x - s * z, s * x + c * z], axis=-1)


@dataclass(frozen=True)
class ActuatorParams:
    """Per-motor drivetrain parameters (all coefficients >= 0)."""

    viscous: np.ndarray        # N*m*s/rad
    dry: np.ndarray            # N*m
    rotor_inertia: np.ndarray  # kg*m^2 reflected at the motor
    torque_scale: np.ndarray   # dimensionless calibration factor

    def __post_init__(self):
        for name in ("viscous", "dry", "rotor_inertia", "torque_scale"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"actuator {name} must be >= 0")

    @classmethod
    def default(cls, n_motors: int, viscous=0.05, dry=0.2, rotor=0.01, scale=1.0):
        full = lambda v: np.full(n_motors, float(v))
        return cls(viscous=full(viscous), dry=full(dry),
                   rotor_inertia=full(rotor), torque_scale=full(scale))


@dataclass(frozen=True)
class ContactParams:
    """Penalty ground model."""

    k_normal: float = 3.0e4    # N/m
    d_normal: float = 300.0    # N*s/m
    mu: float = 0.8            # Coulomb coefficient at nominal friction
    slip_eps: float = 0.05     # m/s tangential regularization
    contact_tol: float = 1e-3  # m height below which a foot counts as contact


@dataclass(frozen=True)
class PushSpec:
    """External disturbance description.

    kind "force": constant force (N) applied for the step at the target body.
    kind "impulse": instantaneous base velocity change (m/s).
    vector is (2,) or (n_envs, 2); duration is bookkeeping for schedulers.
    """

    vector: np.ndarray
    kind: str = "force"
    target: str = "base"       # base | left_foot | right_foot
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in ("force", "impulse"):
            raise ValueError(f"unknown push kind {self.kind!r}")
        if self.target not in ("base", "left_foot", "right_foot"):
            raise ValueError(f"unknown push target {self.target!r}")
        if self.duration < 0:
            raise ValueError("push duration must be >= 0")


@dataclass
class SimState:
    """Batched simulator state. Leading axis = environment index."""

    base_pos: np.ndarray    # (n, 3) x, z, pitch
    base_vel: np.ndarray    # (n, 3)
    motor_pos: np.ndarray   # (n, m)
    motor_vel: np.ndarray   # (n, m)
    foot_contact: np.ndarray        # (n, feet) bool
    foot_air_time: np.ndarray       # (n, feet) current airborne streak, s
    foot_touchdown: np.ndarray      # (n, feet) bool, touched down this control step
    foot_landing_air_time: np.ndarray  # (n, feet) air time consumed at last touchdown
    air_total: np.ndarray           # (n, feet) cumulative airborne seconds
    contact_total: np.ndarray       # (n, feet) cumulative contact seconds
    foot_height: np.ndarray         # (n, feet) lowest contact-point height
    foot_vel: np.ndarray            # (n, feet, 2) sole-center world velocity
    time: np.ndarray                # (n,)
    last_applied_torque: np.ndarray  # (n, m)
    blown: np.ndarray               # (n,) bool, non-finite state detected

    @property
    def n(self) -> int:
        return self.base_pos.shape[0]

    def copy(self) -> "SimState":
        return SimState(**{f.name: getattr(self, f.name).copy()
                           for f in dataclasses.fields(self)})

    def set_row(self, i: int, other: "SimState", j: int = 0):
        for f in dataclasses.fields(self):
            getattr(self, f.name)[i] = getattr(other, f.name)[j]

    def finite_rows(self) -> np.ndarray:
        ok = np.isfinite(self.base_pos).all(axis=1)
        ok &= np.isfinite(self.base_vel).all(axis=1)
        ok &= np.isfinite(self.motor_pos).all(axis=1)
        ok &= np.isfinite(self.motor_vel).all(axis=1)
        return ok


class ModelArrays:
    """Geometry and per-env physical parameters flattened for batched math."""

    def __init__(self, model: RobotModel, params: ActuatorParams,
                 n_envs: int, contact: ContactParams | None = None):
        self.model = model
        self.params = params
        self.contact = contact or ContactParams()
        self.n = n_envs
        K = len(model.links)
        self.n_bodies = K + 1
        self.n_motors = model.motor_count
        self.floating = model.floating_base
        self.base_dofs = 3 if self.floating else 0
        self.n_dofs = self.base_dofs + K

        self.parents = np.array([0] + [ln.parent for ln in model.links])
        self.anchors = np.array([(0.0, 0.0)] + [ln.anchor for ln in model.links])
        self.mounts = np.array([0.0] + [ln.mount for ln in model.links])
        self.coms_local = np.array([model.base_com] + [ln.com for ln in model.links])
        self.inertias = np.array([model.base_inertia] + [ln.inertia for ln in model.links])
        nominal_masses = np.array([model.base_mass] + [ln.mass for ln in model.links])
        self.masses = np.tile(nominal_masses, (n_envs, 1))
        self.mu_ground = np.full(n_envs, self.contact.mu)

        # angle dependencies: per body, (dof column, pivot body) pairs
        self.angle_deps: list[list[tuple[int, int]]] = []
        for b in range(self.n_bodies):
            deps = []
            cur = b
            while cur != 0:
                deps.append((self.base_dofs + cur - 1, cur))
                cur = self.parents[cur]
            if self.floating:
                deps.append((2, 0))
            self.angle_deps.append(deps[::-1])

        # constant rotational part of the joint-space mass matrix
        W = np.zeros((self.n_bodies, self.n_dofs))
        for b, deps in enumerate(self.angle_deps):
            for col, _ in deps:
                W[b, col] = 1.0
        self.m_rot = (W * self.inertias[:, None]).T @ W

        # reduced-coordinate transform: joint dofs = gamma @ motor dofs
        gamma = np.eye(self.n_dofs)
        gamma[self.base_dofs:, self.base_dofs:] = model.coupling.matrix
        self.gamma = gamma

        self.kp = model.kp
        self.kd = model.kd
        self.torque_limits = model.torque_limits

        self.cp_body = np.array([cp.link for cp in model.contact_points], dtype=int)
        self.cp_local = np.array([cp.local for cp in model.contact_points]).reshape(-1, 2)
        self.cp_foot = np.array([cp.foot for cp in model.contact_points], dtype=int)
        self.n_feet = model.n_feet
        self.foot_bodies = []
        for foot in range(self.n_feet):
            bodies = {int(b) for b, f in zip(self.cp_body, self.cp_foot) if f == foot}
            self.foot_bodies.append(sorted(bodies)[0])

    def set_env(self, i: int, model: RobotModel, ground_friction: float):
        self.masses[i] = [model.base_mass] + [ln.mass for ln in model.links]
        self.mu_ground[i] = ground_friction

    def joint_angles(self, motor_pos: np.ndarray) -> np.ndarray:
        return motor_pos @ self.model.coupling.matrix.T


@dataclass
class _Kinematics:
    phi: np.ndarray       # (n, bodies)
    omega: np.ndarray
    origin: np.ndarray    # (n, bodies, 2)
    v_origin: np.ndarray
    com: np.ndarray
    v_com: np.ndarray


def _forward_kinematics(ar: ModelArrays, base_pos, base_vel, motor_pos, motor_vel) -> _Kinematics:
    n = base_pos.shape[0]
    B = ar.n_bodies
    q_j = ar.joint_angles(motor_pos)
    qd_j = ar.joint_angles(motor_vel)
    phi = np.empty((n, B))
    omega = np.empty((n, B))
    origin = np.empty((n, B, 2))
    v_origin = np.empty((n, B, 2))
    if ar.floating:
        phi[:, 0] = base_pos[:, 2]
        omega[:, 0] = base_vel[:, 2]
        origin[:, 0] = base_pos[:, :2]
        v_origin[:, 0] = base_vel[:, :2]
    else:
        phi[:, 0] = 0.0
        omega[:, 0] = 0.0
        origin[:, 0] = 0.0
        v_origin[:, 0] = 0.0
    for b in range(1, B):
        p = ar.parents[b]
        phi[:, b] = phi[:, p] + ar.mounts[b] + q_j[:, b - 1]
        omega[:, b] = omega[:, p] + qd_j[:, b - 1]
        r = _rot(phi[:, p], ar.anchors[b])
        origin[:, b] = origin[:, p] + r
        v_origin[:, b] = v_origin[:, p] + omega[:, p, None] * _perp(r)
    arm = _rot(phi, ar.coms_local)
    com = origin + arm
    v_com = v_origin + omega[..., None] * _perp(arm)
    return _Kinematics(phi, omega, origin, v_origin, com, v_com)


def _point_jacobian_cols(ar: ModelArrays, kin: _Kinematics, body: int,
                         point: np.ndarray, jac: np.ndarray):
    """Fill the angle columns of a translational point Jacobian in place."""
    for col, pivot in ar.angle_deps[body]:
        jac[:, :, col] = _perp(point - kin.origin[:, pivot])


def _foot_points(ar: ModelArrays, kin: _Kinematics):
    """World positions/velocities of all contact points: (n, P, 2) each."""
    bodies = ar.cp_body
    arm = _rot(kin.phi[:, bodies], ar.cp_local[None, :, :])
    pos = kin.origin[:, bodies] + arm
    vel = kin.v_origin[:, bodies] + kin.omega[:, bodies, None] * _perp(arm)
    return pos, vel


def _contact_forces(ar: ModelArrays, pos, vel):
    """Penalty normal + regularized Coulomb tangential forces per point."""
    c = ar.contact
    pen = np.maximum(-pos[..., 1], 0.0)
    active = pen > 0.0
    fn = np.where(active, c.k_normal * pen - c.d_normal * vel[..., 1], 0.0)
    fn = np.maximum(fn, 0.0)
    mu = ar.mu_ground[:, None]
    ft = -mu * fn * np.tanh(vel[..., 0] / c.slip_eps)
    return np.stack([ft, fn], axis=-1)


def _motor_torques(ar: ModelArrays, motor_pos, motor_vel, targets, f_ext_motor):
    """PD torque plus friction with a static-hold branch, saturated.

    f_ext_motor: motor-coordinate generalized force from everything except
    the actuator itself (gravity, contact, pushes, Coriolis), used by the
    hold branch to cancel loads below the dry-friction level.
    """
    p = ar.params
    tau_pd = ar.kp * (targets - motor_pos) - ar.kd * motor_vel
    moving = np.abs(motor_vel) >= STICTION_EPS
    tau_fric_move = -p.dry * np.tanh(motor_vel / STICTION_EPS)
    hold_load = tau_pd + f_ext_motor
    tau_fric_hold = -np.clip(hold_load, -p.dry, p.dry)
    tau_fric = np.where(moving, tau_fric_move, tau_fric_hold) - p.viscous * motor_vel
    tau = np.clip(p.torque_scale * tau_pd + tau_fric,
                  -ar.torque_limits, ar.torque_limits)
    return tau


def _substep(ar: ModelArrays, state: SimState, targets: np.ndarray, dt: float,
             base_force: np.ndarray | None, foot_force: np.ndarray | None,
             gravity_tilt: np.ndarray | None):
    n = state.n
    D = ar.n_dofs
    kin = _forward_kinematics(ar, state.base_pos, state.base_vel,
                              state.motor_pos, state.motor_vel)

    # translational Jacobians of every body COM, (n, bodies, 2, D)
    jac = np.zeros((n, ar.n_bodies, 2, D))
    if ar.floating:
        jac[:, :, 0, 0] = 1.0
        jac[:, :, 1, 1] = 1.0
    a_bias = np.zeros((n, ar.n_bodies, 2))
    qd_rel = np.empty((n, ar.n_bodies - 1))
    if ar.n_bodies > 1:
        qd_rel = ar.joint_angles(state.motor_vel)
    for b in range(1 if not ar.floating else 0, ar.n_bodies):
        for col, pivot in ar.angle_deps[b]:
            jac[:, b, :, col] = _perp(kin.com[:, b] - kin.origin[:, pivot])
            rate = state.base_vel[:, 2] if col == 2 and ar.floating and pivot == 0 \
                else qd_rel[:, col - ar.base_dofs]
            a_bias[:, b] += rate[:, None] * _perp(kin.v_com[:, b] - kin.v_origin[:, pivot])

    mw = ar.masses[:, :, None, None] * jac
    m_joint = np.einsum("nbad,nbae->nde", mw, jac) + ar.m_rot

    if gravity_tilt is None:
        g_vec = np.zeros((n, 2))
        g_vec[:, 1] = -GRAVITY
    else:
        g_vec = GRAVITY * np.stack([np.sin(gravity_tilt), -np.cos(gravity_tilt)], axis=-1)
    rhs_j = np.einsum("nbad,na->nd", mw, g_vec)
    rhs_j -= np.einsum("nbad,nba->nd", mw, a_bias)

    # ground contact
    cp_pos, cp_vel = _foot_points(ar, kin)
    forces = _contact_forces(ar, cp_pos, cp_vel)
    pj = np.zeros((n, 2, D))
    for p_idx in range(cp_pos.shape[1]):
        if not np.any(forces[:, p_idx]):
            continue
        pj[...] = 0.0
        if ar.floating:
            pj[:, 0, 0] = 1.0
            pj[:, 1, 1] = 1.0
        _point_jacobian_cols(ar, kin, int(ar.cp_body[p_idx]), cp_pos[:, p_idx], pj)
        rhs_j += np.einsum("nad,na->nd", pj, forces[:, p_idx])

    # external pushes
    if base_force is not None and np.any(base_force):
        pj[...] = 0.0
        if ar.floating:
            pj[:, 0, 0] = 1.0
            pj[:, 1, 1] = 1.0
        _point_jacobian_cols(ar, kin, 0, kin.com[:, 0], pj)
        rhs_j += np.einsum("nad,na->nd", pj, base_force)
    if foot_force is not None and np.any(foot_force):
        for foot in range(ar.n_feet):
            body = ar.foot_bodies[foot]
            mask = ar.cp_foot == foot
            center = cp_pos[:, mask].mean(axis=1)
            pj[...] = 0.0
            if ar.floating:
                pj[:, 0, 0] = 1.0
                pj[:, 1, 1] = 1.0
            _point_jacobian_cols(ar, kin, body, center, pj)
            rhs_j += np.einsum("nad,na->nd", pj, foot_force[:, foot])

    # pull back to reduced coordinates and actuate
    g = ar.gamma
    rhs_u = rhs_j @ g
    m_u = g.T @ m_joint @ g
    idx = np.arange(ar.base_dofs, D)
    m_u[:, idx, idx] += ar.params.rotor_inertia

    tau = _motor_torques(ar, state.motor_pos, state.motor_vel, targets,
                         rhs_u[:, ar.base_dofs:])
    rhs_u[:, ar.base_dofs:] += tau

    acc = np.linalg.solve(m_u, rhs_u[..., None])[..., 0]

    prev = state if not np.any(state.blown) else state.copy()
    if ar.floating:
        state.base_vel += dt * acc[:, :3]
    state.motor_vel += dt * acc[:, ar.base_dofs:]
    if ar.floating:
        state.base_pos += dt * state.base_vel
    state.motor_pos += dt * state.motor_vel
    state.last_applied_torque = tau
    state.time += dt

    # bookkeeping on the updated configuration
    kin2 = _forward_kinematics(ar, state.base_pos, state.base_vel,
                               state.motor_pos, state.motor_vel)
    cp_pos2, cp_vel2 = _foot_points(ar, kin2)
    was_contact = state.foot_contact.copy()
    for foot in range(ar.n_feet):
        mask = ar.cp_foot == foot
        state.foot_height[:, foot] = cp_pos2[:, mask, 1].min(axis=1)
        state.foot_vel[:, foot] = cp_vel2[:, mask].mean(axis=1)
    if ar.n_feet:
        in_contact = state.foot_height <= ar.contact.contact_tol
        state.air_total += dt * (~was_contact)
        state.contact_total += dt * was_contact
        state.foot_air_time += dt * (~was_contact)
        touchdown = in_contact & ~was_contact
        state.foot_landing_air_time = np.where(
            touchdown, state.foot_air_time, state.foot_landing_air_time)
        state.foot_air_time[in_contact] = 0.0
        state.foot_touchdown |= touchdown
        state.foot_contact = in_contact

    fresh_blow = ~state.finite_rows() & ~state.blown
    if np.any(fresh_blow):
        for i in np.flatnonzero(fresh_blow):
            state.set_row(i, prev, i)
        state.blown |= fresh_blow
    return state


def _resolve_pushes(pushes, n, n_feet, total_mass):
    """Split a PushSpec list into per-step force arrays and velocity impulses."""
    base_force = np.zeros((n, 2))
    foot_force = np.zeros((n, n_feet, 2))
    impulse = np.zeros((n, 2))
    for p in pushes:
        vec = np.broadcast_to(np.asarray(p.vector, dtype=float), (n, 2))
        if p.kind == "impulse":
            if p.target != "base":
                raise ValueError("velocity impulses apply to the base")
            impulse = impulse + vec
        elif p.target == "base":
            base_force = base_force + vec
        else:
            foot = 0 if p.target == "left_foot" else 1
            foot_force[:, foot] += vec
    return base_force, foot_force, impulse


def step_physics(state: SimState, motor_pos_target: np.ndarray, pushes=(),
                 dt: float = PHYSICS_DT, *, model: RobotModel | None = None,
                 params: ActuatorParams | None = None,
                 arrays: ModelArrays | None = None,
                 gravity_tilt: np.ndarray | None = None,
                 validate: bool = True) -> SimState:
    """Advance one physics substep. Mutates and returns `state`."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if arrays is None:
        if model is None:
            raise ValueError("pass either arrays or model")
        params = params or ActuatorParams.default(model.motor_count)
        arrays = ModelArrays(model, params, state.n)
    targets = np.asarray(motor_pos_target, dtype=float)
    if targets.ndim == 1:
        targets = np.broadcast_to(targets, state.motor_pos.shape)
    if targets.shape[-1] != arrays.n_motors:
        raise ValueError(f"target length {targets.shape[-1]} != {arrays.n_motors} motors")
    if validate:
        if not np.all(state.finite_rows() | state.blown):
            raise ValueError("non-finite simulation state passed to step_physics")
        if not np.all(np.isfinite(targets)):
            raise ValueError("non-finite motor targets")
    base_force, foot_force, impulse = _resolve_pushes(
        pushes, state.n, max(arrays.n_feet, 1), arrays.model.total_mass)
    if np.any(impulse):
        state.base_vel[:, :2] += impulse
    with np.errstate(invalid="ignore", over="ignore"):
        return _substep(arrays, state, targets, dt,
                        base_force if np.any(base_force) else None,
                        foot_force if np.any(foot_force) else None,
                        gravity_tilt)


def control_step(state: SimState, action: np.ndarray, pushes=(),
                 *, arrays: ModelArrays, decimation: int = DECIMATION,
                 dt: float = PHYSICS_DT,
                 gravity_tilt: np.ndarray | None = None) -> SimState:
    """Run `decimation` physics substeps holding `action` as the PD target."""
    if decimation < 1:
        raise ValueError("decimation must be >= 1")
    targets = np.asarray(action, dtype=float)
    if targets.ndim == 1:
        targets = np.broadcast_to(targets, state.motor_pos.shape)
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite motor targets")
    if not np.all(state.finite_rows() | state.blown):
        raise ValueError("non-finite simulation state passed to control_step")
    base_force, foot_force, impulse = _resolve_pushes(
        pushes, state.n, max(arrays.n_feet, 1), arrays.model.total_mass)
    if np.any(impulse):
        state.base_vel[:, :2] += impulse
    state.foot_touchdown[...] = False
    bf = base_force if np.any(base_force) else None
    ff = foot_force if np.any(foot_force) else None
    with np.errstate(invalid="ignore", over="ignore"):
        for _ in range(decimation):
            _substep(arrays, state, targets, dt, bf, ff, gravity_tilt)
    return state


# --- state construction and helpers ------------------------------------------

def standing_height(model: RobotModel) -> float:
    """Base height at which the zero-pose soles rest exactly on the ground."""
    ar = ModelArrays(model, ActuatorParams.default(model.motor_count), 1)
    zero = np.zeros((1, model.motor_count))
    kin = _forward_kinematics(ar, np.zeros((1, 3)), np.zeros((1, 3)), zero, zero)
    pos, _ = _foot_points(ar, kin)
    return float(-pos[0, :, 1].min())


def init_state(model: RobotModel, n: int, base_height: float | None = None) -> SimState:
    m = model.motor_count
    feet = max(model.n_feet, 1)
    h = standing_height(model) if base_height is None else base_height
    state = SimState(
        base_pos=np.zeros((n, 3)),
        base_vel=np.zeros((n, 3)),
        motor_pos=np.zeros((n, m)),
        motor_vel=np.zeros((n, m)),
        foot_contact=np.zeros((n, feet), dtype=bool),
        foot_air_time=np.zeros((n, feet)),
        foot_touchdown=np.zeros((n, feet), dtype=bool),
        foot_landing_air_time=np.zeros((n, feet)),
        air_total=np.zeros((n, feet)),
        contact_total=np.zeros((n, feet)),
        foot_height=np.zeros((n, feet)),
        foot_vel=np.zeros((n, feet, 2)),
        time=np.zeros(n),
        last_applied_torque=np.zeros((n, m)),
        blown=np.zeros(n, dtype=bool),
    )
    if model.floating_base:
        state.base_pos[:, 1] = h
    refresh_foot_state(model, state)
    return state


def refresh_foot_state(model: RobotModel, state: SimState,
                       arrays: ModelArrays | None = None):
    """Recompute foot caches/contact flags from the configuration."""
    if not model.contact_points:
        return
    ar = arrays or ModelArrays(model, ActuatorParams.default(model.motor_count), state.n)
    kin = _forward_kinematics(ar, state.base_pos, state.base_vel,
                              state.motor_pos, state.motor_vel)
    pos, vel = _foot_points(ar, kin)
    for foot in range(ar.n_feet):
        mask = ar.cp_foot == foot
        state.foot_height[:, foot] = pos[:, mask, 1].min(axis=1)
        state.foot_vel[:, foot] = vel[:, mask].mean(axis=1)
    state.foot_contact = state.foot_height <= ar.contact.contact_tol


def total_energy(arrays: ModelArrays, state: SimState,
                 pd_targets: np.ndarray | None = None,
                 include_contact: bool = True) -> np.ndarray:
    """Kinetic + gravitational (+ PD spring + contact spring) energy per env.

    This is the Lyapunov-style bookkeeping used by the dissipativity tests:
    with a held PD target the controller is a spring, so its stored energy
    counts toward the total that friction and dampers may only drain.
    """
    kin = _forward_kinematics(arrays, state.base_pos, state.base_vel,
                              state.motor_pos, state.motor_vel)
    ke = 0.5 * np.einsum("nb,nb->n", arrays.masses,
                         (kin.v_com ** 2).sum(axis=-1))
    ke += 0.5 * (arrays.inertias * kin.omega ** 2).sum(axis=-1)
    ke += 0.5 * (arrays.params.rotor_inertia * state.motor_vel ** 2).sum(axis=-1)
    pe = GRAVITY * np.einsum("nb,nb->n", arrays.masses, kin.com[..., 1])
    total = ke + pe
    if pd_targets is not None:
        total += 0.5 * (arrays.kp * (pd_targets - state.motor_pos) ** 2).sum(axis=-1)
    if include_contact and arrays.n_feet:
        pos, _ = _foot_points(arrays, kin)
        pen = np.maximum(-pos[..., 1], 0.0)
        total += 0.5 * arrays.contact.k_normal * (pen ** 2).sum(axis=-1)
    return total


# --- domain randomization -----------------------------------------------------

@dataclass(frozen=True)
class DrRanges:
    """Per-episode randomization ranges (scale factors / additive bounds)."""

    friction: tuple[float, float] = (0.75, 1.25)
    link_mass: tuple[float, float] = (0.9, 1.1)
    push_speed: tuple[float, float] = (0.0, 2.5)


def apply_domain_randomization(model: RobotModel, params: ActuatorParams,
                               rng: np.random.Generator,
                               ranges: DrRanges = DrRanges(),
                               base_friction: float = ContactParams.mu):
    """Draw a randomized (model, params, ground friction) triple.

    The inputs are never touched; masses scale per link, ground friction
    scales around its nominal value.
    """
    lo, hi = ranges.link_mass
    scales = rng.uniform(lo, hi, size=len(model.links) + 1)
    base_mass = model.base_mass * scales[0]
    links = tuple(dataclasses.replace(ln, mass=ln.mass * s)
                  for ln, s in zip(model.links, scales[1:]))
    new_model = dataclasses.replace(model, base_mass=base_mass, links=links)
    flo, fhi = ranges.friction
    friction = base_friction * rng.uniform(flo, fhi)
    new_params = dataclasses.replace(params)
    return new_model, new_params, friction


def apply_push_velocity(state: SimState, rng: np.random.Generator,
                        speed_range: tuple[float, float] = (0.0, 2.5),
                        rows: np.ndarray | None = None) -> SimState:
    """Add a planar velocity of random magnitude/direction to the base."""
    idx = np.arange(state.n) if rows is None else np.atleast_1d(rows)
    lo, hi = speed_range
    mag = rng.uniform(lo, hi, size=idx.size)
    ang = rng.uniform(0.0, 2.0 * np.pi, size=idx.size)
    state.base_vel[idx, 0] += mag * np.cos(ang)
    state.base_vel[idx, 1] += mag * np.sin(ang)
    return state
