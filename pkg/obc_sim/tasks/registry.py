"""
Task body registry and the context every body runs with.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Dict, Optional

import numpy as np

from obc_sim.errors import ConfigurationError
from obc_sim.faulttol.memory import ScrubReport
from obc_sim.flightplan import ExitStatus, TaskHandle, TaskRunner, TaskSpec
from obc_sim.fsm import HealthMetrics, Mode
from obc_sim.helpers import get_logger

if TYPE_CHECKING:
    from obc_sim.devices.access import DeviceAccess
    from obc_sim.simkernel import SimKernel
    from obc_sim.tasks.control import BdotState
    from obc_sim.tasks.downlink import DownlinkQueue
    from obc_sim.tasks.housekeeping import SensorCache
    from obc_sim.tasks.imaging import ImagingSequence
    from obc_sim.telemetry import TelemetryLog

log = get_logger(__name__)

TaskBody = Callable[['TaskContext', TaskHandle], Optional[ExitStatus]]

TASK_BODIES: Dict[str, TaskBody] = {}


def task_body(body_id: str) -> Callable[[TaskBody], TaskBody]:
    """Register the decorated function under ``body_id``."""
    def register(func: TaskBody) -> TaskBody:
        if body_id in TASK_BODIES:
            raise ConfigurationError(f'task body {body_id!r} registered twice')
        TASK_BODIES[body_id] = func
        return func
    return register


@dataclass(eq=False)
class TaskContext:
    """
    Everything a task body may use. Hardware is reachable only through ``access``.

    The state objects survive across activations; :meth:`reset` clears
    what lives in OBC RAM on a power cycle.
    """
    kernel: 'SimKernel'
    access: 'DeviceAccess'
    telemetry: 'TelemetryLog'
    sensors: 'SensorCache'
    bdot: 'BdotState'
    imaging: 'ImagingSequence'
    downlink: 'DownlinkQueue'
    mode: Callable[[], Optional[Mode]]
    metrics: Callable[[], HealthMetrics]
    dipole_per_duty: float = 0.2
    scrub_enabled: bool = True
    self_check_passes: int = 0
    scrub_totals: Dict[str, ScrubReport] = field(
        default_factory=lambda: {'memory': ScrubReport(), 'config': ScrubReport()}
    )

    @property
    def now(self) -> int:
        return self.kernel.now

    def reset(self) -> None:
        self.sensors.reset()
        self.bdot.reset()
        self.imaging.abandon()
        self.self_check_passes = 0


def validate_bodies(specs) -> None:
    """Reject task specs whose body is not registered."""
    for spec in specs:
        if spec.body_id not in TASK_BODIES:
            raise ConfigurationError(
                f'task {spec.name!r} names unknown body {spec.body_id!r} '
                f'(known: {", ".join(sorted(TASK_BODIES))})'
            )


def make_runner(ctx: TaskContext) -> TaskRunner:
    """Bind the registry to ``ctx`` as the Flightplan's task runner."""
    def run(spec: TaskSpec, handle: TaskHandle) -> Optional[ExitStatus]:
        return TASK_BODIES[spec.body_id](ctx, handle)
    return run


def nan_vector(n: int = 3) -> np.ndarray:
    return np.full(n, np.nan)


