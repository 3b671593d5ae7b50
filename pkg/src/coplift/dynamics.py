"""Nonlinear multibody model of a rigid payload carried by N UAVs on rigid links.

Conventions (NED, z down):
    - r0 is the payload position in the inertial frame, v0 the payload
      velocity expressed in the payload body frame (r0_dot = R0 @ v0).
    - Theta0 / Theta_i are ZYX Euler angles [roll, pitch, yaw]; the rotation
      R(Theta) maps body-frame vectors into the inertial frame.
    - q_i is the unit vector along link i, expressed in the payload frame,
      pointing from the UAV toward the payload; Omega_i is the link angular
      velocity in the payload frame with q_i . Omega_i = 0.
    - Thrust of magnitude F_i acts along the negative body z-axis of UAV i
      (upward at level attitude), so the inertial thrust force is
      -F_i * R_i @ e3.  Gravity is +g along inertial z.

The coupled translational/rotational/link accelerations are obtained from a
dense linear system P @ xb_dot = Q over [v0_dot, omega0_dot, Omega_i_dot];
the UAV attitude dynamics J_i w_dot = tau_i - w x J_i w are decoupled by the
spherical joints at both ends of each link.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

E3 = np.array([0.0, 0.0, 1.0])

# Pitch guard for the ZYX Euler-rate map (rad off the +-pi/2 singularity).
GIMBAL_MARGIN = 0.01


class GimbalLockProximity(Exception):
    """Pitch too close to +-pi/2 for the Euler-rate kinematics."""


class SingularMassMatrix(Exception):
    """The generalized mass matrix could not be factorized."""


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix S with S @ w = v x w."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def euler_to_rotation(theta: np.ndarray) -> np.ndarray:
    """Rotation matrix (body -> inertial) for ZYX Euler angles [roll, pitch, yaw]."""
    cr, sr = np.cos(theta[0]), np.sin(theta[0])
    cp, sp = np.cos(theta[1]), np.sin(theta[1])
    cy, sy = np.cos(theta[2]), np.sin(theta[2])
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def euler_rates_from_body(theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Map body angular velocity to ZYX Euler angle rates.

    Raises GimbalLockProximity when |pitch| is within GIMBAL_MARGIN of pi/2;
    states that far from level are outside the regime this model is used in.
    """
    if abs(theta[1]) >= np.pi / 2 - GIMBAL_MARGIN:
        raise GimbalLockProximity(f"pitch {theta[1]:.4f} rad too close to +-pi/2")
    cr, sr = np.cos(theta[0]), np.sin(theta[0])
    cp, tp = np.cos(theta[1]), np.tan(theta[1])
    return np.array(
        [
            omega[0] + sr * tp * omega[1] + cr * tp * omega[2],
            cr * omega[1] - sr * omega[2],
            (sr / cp) * omega[1] + (cr / cp) * omega[2],
        ]
    )


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the payload-UAV system.

    p_i are link attachment points in the payload frame; l_i are link
    lengths.  Inertias are full 3x3 matrices (diagonal in the reference
    configuration).
    """

    m0: float
    J0: np.ndarray
    m_uav: np.ndarray  # (N,)
    J_uav: np.ndarray  # (N, 3, 3)
    p: np.ndarray  # (N, 3)
    l: np.ndarray  # (N,)
    g: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "J0", np.asarray(self.J0, dtype=float))
        object.__setattr__(self, "m_uav", np.asarray(self.m_uav, dtype=float))
        object.__setattr__(self, "J_uav", np.asarray(self.J_uav, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "l", np.asarray(self.l, dtype=float))
        if self.n_uavs < 3:
            raise ValueError("need at least 3 UAVs for payload rigid-body controllability")
        if self.m0 <= 0 or np.any(self.m_uav <= 0) or np.any(self.l <= 0):
            raise ValueError("masses and link lengths must be strictly positive")
        for J in [self.J0, *self.J_uav]:
            if not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
                raise ValueError("inertia matrices must be symmetric positive definite")

    @property
    def n_uavs(self) -> int:
        return len(self.m_uav)

    @property
    def m_total(self) -> float:
        return self.m0 + float(np.sum(self.m_uav))

    def with_payload_mass(self, m0: float) -> "SystemParams":
        return replace(self, m0=m0)


def table_params(n_uavs: int = 4, g: float = 9.81) -> SystemParams:
    """Reference configuration: 0.7 kg UAVs on 3.2 m links around a 3.1 kg payload.

    For n_uavs != 4 the attachment points are spread uniformly on the same
    0.5*sqrt(2) m radius circle at the same -0.25 m offset.
    """
    if n_uavs == 4:
        p = np.array(
            [
                [0.5, 0.5, -0.25],
                [0.5, -0.5, -0.25],
                [-0.5, -0.5, -0.25],
                [-0.5, 0.5, -0.25],
            ]
        )
    else:
        ang = 2 * np.pi * np.arange(n_uavs) / n_uavs + np.pi / 4
        r = 0.5 * np.sqrt(2.0)
        p = np.stack([r * np.cos(ang), r * np.sin(ang), -0.25 * np.ones(n_uavs)], axis=1)
    return SystemParams(
        m0=3.1,
        J0=np.diag([0.29, 0.29, 0.55]),
        m_uav=np.full(n_uavs, 0.7),
        J_uav=np.array([np.diag([0.01, 0.01, 0.01])] * n_uavs),
        p=p,
        l=np.full(n_uavs, 3.2),
        g=g,
    )


@dataclass
class SystemState:
    """Full state: payload pose/twist plus per-UAV link and attitude states."""

    r0: np.ndarray
    v0: np.ndarray
    theta0: np.ndarray
    omega0: np.ndarray
    q: np.ndarray  # (N, 3) unit link directions, payload frame
    Omega: np.ndarray  # (N, 3) link angular velocities, payload frame
    theta: np.ndarray  # (N, 3) UAV ZYX Euler angles
    omega: np.ndarray  # (N, 3) UAV body angular velocities

    @property
    def n_uavs(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return 12 + 12 * self.n_uavs

    def as_vector(self) -> np.ndarray:
        n = self.n_uavs
        out = np.empty(12 + 12 * n)
        out[0:3] = self.r0
        out[3:6] = self.v0
        out[6:9] = self.theta0
        out[9:12] = self.omega0
        per = np.concatenate([self.q, self.Omega, self.theta, self.omega], axis=1)
        out[12:] = per.reshape(-1)
        return out

    @classmethod
    def from_vector(cls, x: np.ndarray, n_uavs: int) -> "SystemState":
        per = x[12:].reshape(n_uavs, 12)
        return cls(
            r0=x[0:3].copy(),
            v0=x[3:6].copy(),
            theta0=x[6:9].copy(),
            omega0=x[9:12].copy(),
            q=per[:, 0:3].copy(),
            Omega=per[:, 3:6].copy(),
            theta=per[:, 6:9].copy(),
            omega=per[:, 9:12].copy(),
        )

    def copy(self) -> "SystemState":
        return SystemState.from_vector(self.as_vector(), self.n_uavs)

    def validate(self, tol: float = 1e-9) -> None:
        norms = np.linalg.norm(self.q, axis=1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ValueError(f"link directions not unit norm: {norms}")
        dots = np.einsum("ij,ij->i", self.q, self.Omega)
        if np.any(np.abs(dots) > tol):
            raise ValueError(f"link rates not orthogonal to links: {dots}")


# StateDerivative shares the layout of SystemState with d/dt semantics.
StateDerivative = SystemState


@dataclass
class ControlInput:
    """Per-UAV thrust magnitude and body torque."""

    thrust: np.ndarray  # (N,)
    torque: np.ndarray  # (N, 3)

    @property
    def dim(self) -> int:
        return 4 * len(self.thrust)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.thrust[:, None], self.torque], axis=1).reshape(-1)

    @classmethod
    def from_vector(cls, u: np.ndarray, n_uavs: int) -> "ControlInput":
        per = u.reshape(n_uavs, 4)
        return cls(thrust=per[:, 0].copy(), torque=per[:, 1:4].copy())

    @classmethod
    def zero(cls, n_uavs: int) -> "ControlInput":
        return cls(thrust=np.zeros(n_uavs), torque=np.zeros((n_uavs, 3)))


def uav_positions(params: SystemParams, state: SystemState) -> np.ndarray:
    """Inertial positions r_i = r0 + R0 (p_i - l_i q_i), shape (N, 3)."""
    R0 = euler_to_rotation(state.theta0)
    offs = params.p - params.l[:, None] * state.q
    return state.r0[None, :] + offs @ R0.T


def thrust_forces(params: SystemParams, state: SystemState, u: ControlInput) -> np.ndarray:
    """Inertial thrust force of each UAV: -thrust_i * R_i @ e3, shape (N, 3)."""
    F = np.empty((params.n_uavs, 3))
    for i in range(params.n_uavs):
        Ri = euler_to_rotation(state.theta[i])
        F[i] = -u.thrust[i] * Ri[:, 2]
    return F


def energies(params: SystemParams, state: SystemState) -> tuple[float, float]:
    """Kinetic and potential energy of the full system."""
    T = 0.5 * params.m0 * state.v0 @ state.v0
    T += 0.5 * state.omega0 @ params.J0 @ state.omega0
    # UAV velocity in the payload frame: v0 + omega0 x p_i - l_i Omega_i x q_i
    for i in range(params.n_uavs):
        w = (
            state.v0
            + np.cross(state.omega0, params.p[i])
            - params.l[i] * np.cross(state.Omega[i], state.q[i])
        )
        T += 0.5 * params.m_uav[i] * w @ w
        T += 0.5 * state.omega[i] @ params.J_uav[i] @ state.omega[i]

    r = uav_positions(params, state)
    U = -params.m0 * params.g * state.r0[2]
    U -= float(np.sum(params.m_uav * params.g * r[:, 2]))
    return float(T), float(U)


def assemble_mass_matrix(params: SystemParams, state: SystemState) -> np.ndarray:
    """Generalized mass matrix P over [v0_dot, omega0_dot, Omega_i_dot].

    Blocks: total mass and payload/link couplings on the top rows, the
    augmented payload inertia J0 - sum m_i (p_i x)^2, and m_i l_i^2 I on the
    link diagonal (the q q^T rank completion keeps P invertible while acting
    identically on link rates orthogonal to q).
    """
    N = params.n_uavs
    n = 6 + 3 * N
    P = np.zeros((n, n))
    I3 = np.eye(3)

    P[0:3, 0:3] = params.m_total * I3
    sum_mp = np.zeros((3, 3))
    Jbar = params.J0.copy()
    for i in range(N):
        m, li = params.m_uav[i], params.l[i]
        ph = hat(params.p[i])
        qh = hat(state.q[i])
        sum_mp += m * ph
        Jbar -= m * ph @ ph
        k = 6 + 3 * i
        P[0:3, k : k + 3] = m * li * qh
        P[k : k + 3, 0:3] = -m * li * qh
        P[3:6, k : k + 3] = m * li * ph @ qh
        P[k : k + 3, 3:6] = m * li * qh @ ph
        P[k : k + 3, k : k + 3] = m * li**2 * I3
    P[0:3, 3:6] = -sum_mp
    P[3:6, 0:3] = sum_mp
    P[3:6, 3:6] = Jbar
    return P


def assemble_forcing(
    params: SystemParams, state: SystemState, u: ControlInput
) -> np.ndarray:
    """Generalized forcing Q (gyroscopic, centripetal, gravity and thrust terms)."""
    N = params.n_uavs
    R0 = euler_to_rotation(state.theta0)
    F_body = thrust_forces(params, state, u) @ R0  # R0^T F_i rows
    gk_body = params.g * R0.T @ E3
    w0, v0 = state.omega0, state.v0
    w0h = hat(w0)

    Q = np.zeros(6 + 3 * N)
    Jbar = params.J0.copy()
    for i in range(N):
        Jbar -= params.m_uav[i] * hat(params.p[i]) @ hat(params.p[i])

    Qv = -params.m_total * np.cross(w0, v0) + params.m_total * gk_body + F_body.sum(axis=0)
    Qw = -np.cross(w0, Jbar @ w0)
    for i in range(N):
        m, li, p, q, Om = params.m_uav[i], params.l[i], params.p[i], state.q[i], state.Omega[i]
        centripetal = np.cross(w0, np.cross(w0, p))
        Om_sq = Om @ Om
        qxw0xOm = np.cross(q, np.cross(w0, Om))
        Qv -= m * (centripetal + li * Om_sq * q + li * qxw0xOm)
        Qw -= m * (
            np.cross(p, np.cross(w0, v0)) + li * np.cross(p, qxw0xOm) + li * Om_sq * np.cross(p, q)
        )
        Qw += np.cross(p, F_body[i] + m * gk_body)
        k = 6 + 3 * i
        Q[k : k + 3] = m * li * (
            np.cross(q, centripetal) - li * np.cross(w0, Om) + np.cross(q, np.cross(w0, v0))
        ) - li * np.cross(q, F_body[i] + m * gk_body)
    Q[0:3] = Qv
    Q[3:6] = Qw
    return Q


def dynamics(params: SystemParams, state: SystemState, u: ControlInput) -> StateDerivative:
    """Time derivative of the full state.

    Kinematics give r0_dot, the Euler-angle rates and q_i_dot; the coupled
    accelerations come from P xb_dot = Q; each UAV attitude follows the free
    rigid-body equation driven by its own torque.
    """
    N = params.n_uavs
    R0 = euler_to_rotation(state.theta0)

    P = assemble_mass_matrix(params, state)
    Q = assemble_forcing(params, state, u)
    try:
        xb = np.linalg.solve(P, Q)
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix(str(exc)) from exc
    if not np.all(np.isfinite(xb)):
        raise SingularMassMatrix("non-finite acceleration solution")

    q_dot = np.cross(state.Omega - state.omega0[None, :], state.q)
    omega_dot = np.empty((N, 3))
    theta_dot = np.empty((N, 3))
    for i in range(N):
        omega_dot[i] = np.linalg.solve(
            params.J_uav[i],
            u.torque[i] - np.cross(state.omega[i], params.J_uav[i] @ state.omega[i]),
        )
        theta_dot[i] = euler_rates_from_body(state.theta[i], state.omega[i])

    return StateDerivative(
        r0=R0 @ state.v0,
        v0=xb[0:3],
        theta0=euler_rates_from_body(state.theta0, state.omega0),
        omega0=xb[3:6],
        q=q_dot,
        Omega=xb[6:].reshape(N, 3),
        theta=theta_dot,
        omega=omega_dot,
    )


def equilibrium(params: SystemParams, r0_des: np.ndarray) -> tuple[SystemState, ControlInput]:
    """Hover equilibrium: vertical links, zero attitudes and rates.

    Each UAV carries its own weight plus an equal share of the payload:
    thrust_i = (m_i + m0/N) g.
    """
    N = params.n_uavs
    state = SystemState(
        r0=np.asarray(r0_des, dtype=float).copy(),
        v0=np.zeros(3),
        theta0=np.zeros(3),
        omega0=np.zeros(3),
        q=np.tile(E3, (N, 1)),
        Omega=np.zeros((N, 3)),
        theta=np.zeros((N, 3)),
        omega=np.zeros((N, 3)),
    )
    u = ControlInput(
        thrust=(params.m_uav + params.m0 / N) * params.g,
        torque=np.zeros((N, 3)),
    )
    return state, u


def _project_links(state: SystemState) -> None:
    """Renormalize q_i and remove the Omega_i component along q_i in place."""
    norms = np.linalg.norm(state.q, axis=1, keepdims=True)
    state.q /= norms
    dots = np.einsum("ij,ij->i", state.q, state.Omega)
    state.Omega -= dots[:, None] * state.q


def step_rk4(
    params: SystemParams, state: SystemState, u: ControlInput, dt: float
) -> SystemState:
    """Classical RK4 step with link renormalization/reprojection afterwards."""
    if not 0.0 < dt <= 0.02:
        raise ValueError(f"dt must be in (0, 0.02], got {dt}")
    n = state.n_uavs
    x0 = state.as_vector()

    def f(xv: np.ndarray) -> np.ndarray:
        return dynamics(params, SystemState.from_vector(xv, n), u).as_vector()

    k1 = f(x0)
    k2 = f(x0 + 0.5 * dt * k1)
    k3 = f(x0 + 0.5 * dt * k2)
    k4 = f(x0 + dt * k3)
    out = SystemState.from_vector(x0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), n)
    _project_links(out)
    return out
