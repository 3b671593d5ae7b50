"""Discrete linear model of the payload-UAV system about the hover equilibrium.

Central finite-difference Jacobians of the nonlinear dynamics followed by an
exact zero-order-hold discretization.  The continuous matrices are kept on
the model because the safety filter needs the payload-acceleration rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .dynamics import ControlInput, SystemParams, SystemState, dynamics

FD_STEP_STATE = 1e-6
FD_STEP_INPUT = 1e-4


class NonEquilibriumPoint(Exception):
    """Linearization requested at a point that is not an equilibrium."""


class UnknownStateName(Exception):
    """Output selection referenced a state group that does not exist."""


def state_group_names(n_uavs: int) -> list[str]:
    """Ordered state groups; each names one 3-vector block of the state."""
    names = ["r0", "v0", "theta0", "omega0"]
    for i in range(1, n_uavs + 1):
        names += [f"q{i}", f"Omega{i}", f"theta{i}", f"omega{i}"]
    return names


def state_component_names(n_uavs: int) -> list[str]:
    return [f"{g}_{ax}" for g in state_group_names(n_uavs) for ax in "xyz"]


def input_component_names(n_uavs: int) -> list[str]:
    out = []
    for i in range(1, n_uavs + 1):
        out += [f"F{i}", f"tau{i}_x", f"tau{i}_y", f"tau{i}_z"]
    return out


@dataclass
class LinearModel:
    """Discrete (A, B, C) about (x_e, u_e) with the continuous pair attached."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x_e: np.ndarray
    u_e: np.ndarray
    dt: float
    A_c: np.ndarray
    B_c: np.ndarray
    n_uavs: int

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


def jacobians(
    params: SystemParams, x_e: SystemState, u_e: ControlInput
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobians (A_c, B_c) of the state derivative."""
    n_uavs = params.n_uavs
    xv = x_e.as_vector()
    uv = u_e.as_vector()
    n, m = len(xv), len(uv)

    def f(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return dynamics(
            params, SystemState.from_vector(x, n_uavs), ControlInput.from_vector(u, n_uavs)
        ).as_vector()

    resid = np.abs(f(xv, uv)).max()
    if resid > 1e-7:
        raise NonEquilibriumPoint(f"dynamics residual {resid:.2e} exceeds 1e-7")

    A_c = np.empty((n, n))
    for j in range(n):
        h = FD_STEP_STATE
        xp, xm = xv.copy(), xv.copy()
        xp[j] += h
        xm[j] -= h
        A_c[:, j] = (f(xp, uv) - f(xm, uv)) / (2 * h)

    B_c = np.empty((n, m))
    for j in range(m):
        h = FD_STEP_INPUT
        up, um = uv.copy(), uv.copy()
        up[j] += h
        um[j] -= h
        B_c[:, j] = (f(xv, up) - f(xv, um)) / (2 * h)
    return A_c, B_c


def discretize(A_c: np.ndarray, B_c: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order hold via the augmented matrix exponential."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n, m = B_c.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:] = B_c
    phi = expm(M * dt)
    return phi[:n, :n], phi[:n, n:]


def output_matrix(selection: list[str], n_uavs: int) -> np.ndarray:
    """Selector matrix with one row per component of each requested state group."""
    groups = state_group_names(n_uavs)
    n = 3 * len(groups)
    rows = []
    for name in selection:
        if name not in groups:
            raise UnknownStateName(name)
        base = 3 * groups.index(name)
        for k in range(3):
            row = np.zeros(n)
            row[base + k] = 1.0
            rows.append(row)
    return np.array(rows).reshape(len(rows), n)


def default_output(n_uavs: int) -> np.ndarray:
    """Tracked outputs: payload position, payload attitude, all link directions."""
    sel = ["r0", "theta0"] + [f"q{i}" for i in range(1, n_uavs + 1)]
    return output_matrix(sel, n_uavs)


def linearize_model(
    params: SystemParams,
    x_e: SystemState,
    u_e: ControlInput,
    dt: float,
    C: np.ndarray | None = None,
) -> LinearModel:
    A_c, B_c = jacobians(params, x_e, u_e)
    A, B = discretize(A_c, B_c, dt)
    if C is None:
        C = default_output(params.n_uavs)
    return LinearModel(
        A=A,
        B=B,
        C=C,
        x_e=x_e.as_vector(),
        u_e=u_e.as_vector(),
        dt=dt,
        A_c=A_c,
        B_c=B_c,
        n_uavs=params.n_uavs,
    )
