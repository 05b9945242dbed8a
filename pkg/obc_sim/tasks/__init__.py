"""
Task bodies run by the Flightplan. Importing this package registers every body.
"""
from obc_sim.tasks.registry import TASK_BODIES, TaskContext, make_runner, task_body, validate_bodies
from obc_sim.tasks import control, downlink, housekeeping, imaging, maintenance  # noqa: F401  (registration)
from obc_sim.tasks.control import BdotState, bdot_command
from obc_sim.tasks.downlink import DownlinkQueue, deframe, frame
from obc_sim.tasks.housekeeping import HousekeepingRecord, SensorCache
from obc_sim.tasks.imaging import ImagingPhase, ImagingSequence

__all__ = [
    'TASK_BODIES',
    'TaskContext',
    'make_runner',
    'task_body',
    'validate_bodies',
    'BdotState',
    'bdot_command',
    'DownlinkQueue',
    'deframe',
    'frame',
    'HousekeepingRecord',
    'SensorCache',
    'ImagingPhase',
    'ImagingSequence',
]
