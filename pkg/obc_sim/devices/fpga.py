"""
The FPGA hosting the hyperspectral compression core.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Optional

from obc_sim.compression.coder import RiceParams
from obc_sim.compression.cube import HyperspectralCube
from obc_sim.compression.stream import EncodedStream, encode
from obc_sim.errors import CompressionError
from obc_sim.faulttol.config import ConfigMemory
from obc_sim.faulttol.tmr import Disagreement, Vote, tmr_compute
from obc_sim.helpers import get_logger
from obc_sim.simkernel import Event, EventKind, SimKernel

log = get_logger(__name__)

JobCallback = Callable[['CompressionJob'], None]


@dataclass(eq=False)
class CompressionJob:
    job_id: int
    cube: HyperspectralCube = field(repr=False)
    on_done: JobCallback = field(repr=False)
    stream: Optional[EncodedStream] = field(default=None, repr=False)
    error: Optional[str] = None
    event_id: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.stream is not None and self.error is None


class CompressionUnit:
    """
    Encodes cubes with a fixed latency and computes the stored-stream checksum.

    The unit's logic is loaded from ``config_memory``. A scrub that rewrites
    the configuration resets the unit, and the job in flight fails.

    Parameters:
        kernel (SimKernel): Event loop the completion is scheduled on.
        config_memory (ConfigMemory): The FPGA configuration bitstream.
        prediction_bands (int): Predictor ``P``.
        weight_resolution (int): Predictor ``Ω``.
        update_scaling (int): Weight update exponent.
        coder (RiceParams): Entropy coder parameters.
        latency (int): Ticks from submission to result.
        tmr (bool): Triplicate the checksum computation and vote.
    """

    def __init__(
            self,
            kernel: SimKernel,
            config_memory: ConfigMemory,
            prediction_bands: int = 3,
            weight_resolution: int = 13,
            update_scaling: int = 6,
            coder: Optional[RiceParams] = None,
            latency: int = 50,
            tmr: bool = False
    ):
        self.kernel = kernel
        self.prediction_bands = prediction_bands
        self.weight_resolution = weight_resolution
        self.update_scaling = update_scaling
        self.coder = coder or RiceParams()
        self.latency = latency
        self.tmr = tmr
        self.in_flight: Optional[CompressionJob] = None
        self.resets = 0
        self.votes = 0
        self.outvoted = 0
        self._pending_upsets = 0
        self._ids = count(1)
        config_memory.on_rewrite.append(self.reset)

    @property
    def busy(self) -> bool:
        return self.in_flight is not None

    def submit(self, cube: HyperspectralCube, on_done: JobCallback) -> CompressionJob:
        if self.in_flight is not None:
            raise CompressionError(f'job {self.in_flight.job_id} still in flight')

        job = CompressionJob(next(self._ids), cube, on_done)
        try:
            job.stream = encode(cube, self.prediction_bands, self.weight_resolution, self.update_scaling,
                                self.coder)
        except (CompressionError, ValueError) as e:
            job.error = str(e)
        self.in_flight = job
        job.event_id = self.kernel.post(self.latency, self._on_done, EventKind.BUS_COMPLETION, job)
        return job

    def _on_done(self, ev: Event) -> None:
        job = ev.payload
        if self.in_flight is not job:
            return
        self.in_flight = None
        job.on_done(job)

    def reset(self) -> None:
        self.resets += 1
        job, self.in_flight = self.in_flight, None
        if job is None:
            return

        self.kernel.cancel(job.event_id)
        job.stream = None
        job.error = 'compression unit reset by configuration scrub'
        log.warning(f'Compression job {job.job_id} lost to an FPGA reset at t={self.kernel.now}')
        job.on_done(job)

    def inject_upset(self, times: int = 1) -> None:
        """Corrupt the output of the next ``times`` checksum computations in one replica."""
        self._pending_upsets += times

    def _upset(self, replica: int, value: int) -> int:
        if replica == 0 and self._pending_upsets:
            self._pending_upsets -= 1
            return value ^ 0x1
        return value

    def checksum(self, payload: bytes) -> Vote:
        """CRC-32 of ``payload``; voted over three replicas when TMR is on."""
        def compute() -> int:
            return zlib.crc32(payload)

        if self.tmr:
            vote = tmr_compute(compute, self._upset)
            self.votes += 1
            if vote.disagreement is not Disagreement.NONE:
                self.outvoted += 1
                log.info(f'TMR outvoted replica {vote.dissenter} of the checksum at t={self.kernel.now}')
            return vote

        return Vote(self._upset(0, compute()), Disagreement.NONE)
