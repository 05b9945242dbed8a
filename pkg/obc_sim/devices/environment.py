"""
Minimal rigid-body environment the sensors observe and the magnetorquers act on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


def quat_multiply(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass
class ActuatorState:
    """
    Magnetorquer PWM duty per axis and the reaction wheel placeholder.

    Usage Example:
        >>> act = ActuatorState()
        >>> act.set_magnetorquer((2, 0, -0.5))
        >>> act.magnetorquer_duty.tolist()
        [1.0, 0.0, -0.5]
    """
    dipole_per_duty: float = 0.2
    magnetorquer_duty: np.ndarray = field(default_factory=lambda: np.zeros(3))
    wheel_speed: float = 0.0

    def set_magnetorquer(self, duty) -> None:
        self.magnetorquer_duty = np.clip(np.asarray(duty, dtype=float), -1.0, 1.0)

    def zero(self) -> None:
        self.magnetorquer_duty = np.zeros(3)

    @property
    def dipole(self) -> np.ndarray:
        return self.magnetorquer_duty * self.dipole_per_duty

    @property
    def total_duty(self) -> float:
        return float(np.abs(self.magnetorquer_duty).sum())


@dataclass
class EnvironmentState:
    """
    Parameters:
        omega: Body rates in rad/s.
        inertia: Diagonal inertia tensor in kg·m².
        b_inertial: Constant inertial magnetic field in tesla.
        attitude: Quaternion ``(w, x, y, z)`` rotating inertial vectors into the body frame.
        temperature: Board temperature in °C.
    """
    omega: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.3]))
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.05, 0.05, 0.02]))
    b_inertial: np.ndarray = field(default_factory=lambda: np.array([45e-6, 0.0, 0.0]))
    attitude: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    temperature: float = 20.0

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.inertia.shape == (3,):
            self.inertia = np.diag(self.inertia)
        self.b_inertial = np.asarray(self.b_inertial, dtype=float)
        self.attitude = np.asarray(self.attitude, dtype=float)
        self.attitude = self.attitude / np.linalg.norm(self.attitude)

    @property
    def b_body(self) -> np.ndarray:
        return quat_to_matrix(self.attitude) @ self.b_inertial

    @property
    def omega_mag(self) -> float:
        return float(np.linalg.norm(self.omega))

    @property
    def kinetic_energy(self) -> float:
        return 0.5 * float(self.omega @ self.inertia @ self.omega)

    @property
    def angular_momentum(self) -> np.ndarray:
        return self.inertia @ self.omega


def magnetic_torque(dipole: np.ndarray, b_body: np.ndarray) -> np.ndarray:
    return np.cross(dipole, b_body)


def _derivatives(
        omega: np.ndarray,
        q: np.ndarray,
        dipole: np.ndarray,
        state: EnvironmentState,
        inertia_inv: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    b_body = quat_to_matrix(q) @ state.b_inertial
    torque = magnetic_torque(dipole, b_body)
    omega_dot = inertia_inv @ (torque - np.cross(omega, state.inertia @ omega))
    q_dot = -0.5 * quat_multiply(np.array([0.0, *omega]), q)
    return omega_dot, q_dot


def env_step(state: EnvironmentState, actuators: ActuatorState, dt: int) -> Tuple[EnvironmentState, float]:
    """
    Advance the body by ``dt`` ms with one fixed RK4 step.

    The magnetorquer dipole is held over the step while the body-frame field
    follows the attitude.

    Returns:
        tuple: The state (updated in place) and the magnetic work ``τ·ω·dt``
        evaluated at the start of the step.
    """
    if dt <= 0:
        raise ValueError('environment step must be positive')

    h = dt / 1000.0
    dipole = actuators.dipole
    inertia_inv = np.linalg.inv(state.inertia)
    work = float(magnetic_torque(dipole, state.b_body) @ state.omega) * h

    w0, q0 = state.omega, state.attitude
    k1w, k1q = _derivatives(w0, q0, dipole, state, inertia_inv)
    k2w, k2q = _derivatives(w0 + h / 2 * k1w, q0 + h / 2 * k1q, dipole, state, inertia_inv)
    k3w, k3q = _derivatives(w0 + h / 2 * k2w, q0 + h / 2 * k2q, dipole, state, inertia_inv)
    k4w, k4q = _derivatives(w0 + h * k3w, q0 + h * k3q, dipole, state, inertia_inv)

    state.omega = w0 + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
    q = q0 + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
    state.attitude = q / np.linalg.norm(q)
    return state, work
