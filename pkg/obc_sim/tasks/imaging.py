"""
The imaging sequence: camera flash → SPI burst read → FPGA compression →
SPI burst write into the image store, driven by completion callbacks so the
rest of the schedule keeps running while it is in progress.
"""
from __future__ import annotations

import struct
import zlib
from enum import Enum
from typing import Callable, List, Optional

from statemachine import StateMachine
from statemachine.states import States

from obc_sim.compression.cube import HyperspectralCube
from obc_sim.devices import CAMERA_FLASH, IMAGE_STORE
from obc_sim.devices.access import DeviceAccess
from obc_sim.devices.fpga import CompressionJob
from obc_sim.devices.spi import SpiTransfer
from obc_sim.errors import CompressionError
from obc_sim.flightplan import ExitStatus, TaskHandle
from obc_sim.helpers import get_logger
from obc_sim.tasks.registry import TaskContext, task_body
from obc_sim.telemetry import TelemetryLog

log = get_logger(__name__)

STORED_HEADER = struct.Struct('<II')
"""Prefix of the stored image: encoded stream length and its CRC-32."""


class ImagingPhase(Enum):
    IDLE = 'idle'
    READING = 'reading'
    ENCODING = 'encoding'
    WRITING = 'writing'
    DONE = 'done'
    ABORTED = 'aborted'


class ImagingSequence(StateMachine):
    """
    Lifecycle of one image through the pipeline.

    Parameters:
        access (DeviceAccess): The device access layer.
        telemetry (TelemetryLog): Where progress records go.
        width, height, bands, bit_depth (int): Geometry of the raw cube in the camera flash.
    """

    states = States.from_enum(ImagingPhase, initial=ImagingPhase.IDLE)

    begin = states.IDLE.to(states.READING) | states.DONE.to(states.READING) | states.ABORTED.to(states.READING)
    read_complete = states.READING.to(states.ENCODING)
    encode_complete = states.ENCODING.to(states.WRITING)
    write_complete = states.WRITING.to(states.DONE)
    fail = states.READING.to(states.ABORTED) | states.ENCODING.to(states.ABORTED)
    fail |= states.WRITING.to(states.ABORTED)
    halt = states.READING.to(states.IDLE) | states.ENCODING.to(states.IDLE) | states.WRITING.to(states.IDLE)
    halt |= states.DONE.to(states.IDLE) | states.ABORTED.to(states.IDLE)

    def __init__(
            self,
            access: DeviceAccess,
            telemetry: TelemetryLog,
            width: int = 32,
            height: int = 32,
            bands: int = 16,
            bit_depth: int = 12
    ):
        self.access = access
        self.telemetry = telemetry
        self.geometry = (width, height, bands, bit_depth)
        self.pending_images = 0
        self.completed = 0
        self.aborts = 0
        self.last_ratio: Optional[float] = None
        self.on_stored: List[Callable[[int], None]] = []
        self._run_id = 0
        self._handle: Optional[TaskHandle] = None
        super().__init__()

    @property
    def phase(self) -> ImagingPhase:
        return ImagingPhase(self.current_state_value)

    @property
    def active(self) -> bool:
        return self.phase in (ImagingPhase.READING, ImagingPhase.ENCODING, ImagingPhase.WRITING)

    @property
    def raw_size(self) -> int:
        width, height, bands, _ = self.geometry
        return width * height * bands * 2

    def queue_raw_image(self) -> None:
        """A raw cube has been placed in the camera flash."""
        self.pending_images += 1

    def run(self, handle: TaskHandle) -> Optional[ExitStatus]:
        """
        Start one pass of the pipeline for the activation behind ``handle``.

        Returns:
            ExitStatus | None: ``OK`` when there is nothing to image, else
            ``None``; the activation finishes when the pass ends.
        """
        if self.pending_images < 1 or self.active:
            return ExitStatus.OK

        self.begin()
        self._run_id += 1
        run_id = self._run_id
        self._handle = handle
        handle.add_cleanup(self.abandon)
        self._emit('reading')
        try:
            self.access.spi_read(CAMERA_FLASH, 0, self.raw_size, on_done=lambda xfer: self._read_done(run_id, xfer))
        except ValueError as e:
            self._handle = None
            self._abort(str(e))
            return ExitStatus.FAILED
        return None

    def abandon(self) -> None:
        """Drop the pass in progress; late completions of it are ignored."""
        self._run_id += 1
        self._handle = None
        if self.phase is not ImagingPhase.IDLE:
            self.halt()

    def _current(self, run_id: int, phase: ImagingPhase) -> bool:
        return run_id == self._run_id and self.phase is phase

    def _read_done(self, run_id: int, transfer: SpiTransfer) -> None:
        if not self._current(run_id, ImagingPhase.READING):
            return
        if transfer.status != 'done':
            self._abort(f'camera flash read aborted after {transfer.done_bytes} bytes')
            return

        width, height, bands, bit_depth = self.geometry
        cube = HyperspectralCube.from_raw(bytes(transfer.sink), width, height, bands, bit_depth)
        self.read_complete()
        self._emit('encoding', bytes=transfer.done_bytes, bursts=transfer.bursts)
        try:
            self.access.compress(cube, lambda job: self._encoded(run_id, job))
        except CompressionError as e:
            self._abort(str(e))

    def _encoded(self, run_id: int, job: CompressionJob) -> None:
        if not self._current(run_id, ImagingPhase.ENCODING):
            return
        if not job.ok:
            self._abort(f'compression failed: {job.error}')
            return

        blob = job.stream.to_bytes()
        vote = self.access.checksum(blob)
        record = STORED_HEADER.pack(len(blob), vote.value) + blob
        self.last_ratio = job.stream.ratio
        self.encode_complete()
        self._emit('writing', bytes=len(record), ratio=job.stream.ratio, checksum=vote.value,
                   checksum_ok=vote.value == zlib.crc32(blob), disagreement=vote.disagreement)
        try:
            self.access.spi_write(IMAGE_STORE, 0, record, on_done=lambda xfer: self._written(run_id, xfer))
        except ValueError as e:
            self._abort(str(e))

    def _written(self, run_id: int, transfer: SpiTransfer) -> None:
        if not self._current(run_id, ImagingPhase.WRITING):
            return
        if transfer.status != 'done':
            self._abort(f'image store write aborted after {transfer.done_bytes} bytes')
            return

        self.write_complete()
        self.pending_images -= 1
        self.completed += 1
        self._emit('done', bytes=transfer.total, ratio=self.last_ratio)
        for callback in self.on_stored:
            callback(transfer.total)
        self._finish(ExitStatus.OK)

    def _abort(self, reason: str) -> None:
        self.fail()
        self.aborts += 1
        self._emit('aborted', reason=reason)
        log.warning(f'Imaging sequence aborted: {reason}')
        self._finish(ExitStatus.FAILED)

    def _finish(self, exit_status: ExitStatus) -> None:
        handle, self._handle = self._handle, None
        if handle is not None:
            handle.finish(exit_status)

    def _emit(self, phase: str, **fields) -> None:
        self.telemetry.emit('imaging', self.access.hw.kernel.now, phase=phase, **fields)


@task_body('imaging-sequence')
def imaging_sequence(ctx: TaskContext, handle: TaskHandle) -> Optional[ExitStatus]:
    return ctx.imaging.run(handle)
