"""
Attitude control task bodies: B-dot detumbling and the pointing placeholder.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from obc_sim.errors import BusError
from obc_sim.flightplan import ExitStatus, TaskHandle
from obc_sim.helpers import get_logger
from obc_sim.tasks.registry import TaskContext, task_body

log = get_logger(__name__)


@dataclass
class BdotState:
    """
    Memory of the B-dot law between activations.

    Parameters:
        gain (float): Feedback gain ``k`` in A·m²·s/T, non-negative.
    """
    gain: float = 1e6
    prev_b: Optional[np.ndarray] = None
    prev_time: Optional[int] = None
    last_duty: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError('B-dot gain cannot be negative')

    def reset(self) -> None:
        self.prev_b = None
        self.prev_time = None
        self.last_duty = np.zeros(3)


def bdot_command(state: BdotState, b_field: np.ndarray, now: int, dipole_per_duty: float) -> np.ndarray:
    """
    Magnetorquer duty for one control step.

    The field derivative is the first difference against the previous
    sample; the commanded dipole ``m = -k·dB/dt`` is converted to duty and
    clamped per axis. The first call after a reset commands zero.

    Usage Example:
        >>> state = BdotState(gain=1.0)
        >>> bdot_command(state, np.array([1e-5, 0, 0]), 0, 0.2).tolist()
        [0.0, 0.0, 0.0]
        >>> bool(np.all(bdot_command(state, np.array([1e-5, 0, 0]), 100, 0.2) == 0))
        True
    """
    b_field = np.asarray(b_field, dtype=float)
    duty = np.zeros(3)
    if state.prev_b is not None and now > state.prev_time:
        b_dot = (b_field - state.prev_b) / ((now - state.prev_time) / 1000)
        dipole = -state.gain * b_dot
        duty = np.clip(dipole / dipole_per_duty, -1.0, 1.0)

    state.prev_b = b_field
    state.prev_time = now
    state.last_duty = duty
    return duty


@task_body('bdot-control')
def bdot_control(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    now = handle.now
    try:
        b_field = ctx.access.read_magnetometer()
    except BusError as e:
        # hold a safe zero command; the next good sample restarts the difference
        ctx.bdot.reset()
        ctx.access.set_magnetorquer(np.zeros(3))
        ctx.telemetry.emit('bdot', now, valid=False, duty=[0.0, 0.0, 0.0])
        log.warning(f'B-dot holding zero command at t={now}: {e}')
        return ExitStatus.OK

    duty = bdot_command(ctx.bdot, b_field, now, ctx.dipole_per_duty)
    ctx.access.set_magnetorquer(duty)
    ctx.telemetry.emit('bdot', now, valid=True, duty=duty, b_field=b_field)
    return ExitStatus.OK


@task_body('pointing-control')
def pointing_control(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    """Placeholder for the pointing modes: the actuators are held at zero."""
    ctx.access.set_magnetorquer(np.zeros(3))
    return ExitStatus.OK
