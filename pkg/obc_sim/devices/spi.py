"""
SPI flash chips and the burst-transfer SPI soft controller.

Every burst ends with a completion interrupt. Its handler is split in two:
the top half runs in interrupt context and only moves the burst's bytes and
records the completion, the bottom half is deferred to a same-tick event and
sends the next block address.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Dict, Optional

import numpy as np

from obc_sim.faulttol.memory import MemoryBank
from obc_sim.helpers import get_logger
from obc_sim.simkernel import Event, EventKind, InterruptLine, SimKernel

log = get_logger(__name__)

SPI_LINE = 10
TIMEOUT_TICKS = 20
ERASED = 0xFF


class SpiFlashModel:
    """
    A flash chip behind the SPI controller.

    Parameters:
        name (str): Chip name used in logs.
        capacity (int): Size in bytes.
        page_size (int): Program page size in bytes.
        burst_size (int): Bytes moved per burst transfer.
        read_latency (int): Ticks per read burst.
        write_latency (int): Ticks per program burst.
        storage (MemoryBank, optional): ECC-protected backing store; raw bytes when omitted.
        fault_flag (int): Bus fault flag bit raised on a timeout.
    """

    def __init__(
            self,
            name: str,
            capacity: int,
            page_size: int = 256,
            burst_size: int = 256,
            read_latency: int = 2,
            write_latency: int = 4,
            storage: Optional[MemoryBank] = None,
            fault_flag: int = 0
    ):
        if storage is not None and storage.size_bytes < capacity:
            raise ValueError(f'{name}: backing bank smaller than the flash capacity')

        self.name = name
        self.label = storage.label if storage is not None else name
        self.capacity = capacity
        self.page_size = page_size
        self.burst_size = burst_size
        self.read_latency = read_latency
        self.write_latency = write_latency
        self.storage = storage
        self.fault_flag = fault_flag
        self.raw = bytearray([ERASED]) * capacity if storage is None else None
        self.pending_timeouts: Dict[int, bool] = {}
        self.bursts_served = 0

    def _check(self, offset: int, length: int) -> None:
        if offset < 0 or length < 0 or offset + length > self.capacity:
            raise ValueError(f'{self.name}: {length} bytes at {offset} exceed capacity {self.capacity}')

    def read(self, offset: int, length: int) -> bytes:
        self._check(offset, length)
        if self.storage is not None:
            return self.storage.read(offset, length)
        return bytes(self.raw[offset:offset + length])

    def program(self, offset: int, data: bytes) -> None:
        self._check(offset, len(data))
        if self.storage is not None:
            self.storage.write(offset, data)
        else:
            self.raw[offset:offset + len(data)] = data

    def erase(self) -> None:
        if self.storage is not None:
            self.storage.write(0, bytes([ERASED]) * self.capacity)
        else:
            self.raw[:] = bytes([ERASED]) * self.capacity

    def inject_timeout(self, burst: int = 1) -> None:
        """Make the ``burst``-th burst from now (1-based) time out."""
        self.pending_timeouts[self.bursts_served + burst] = True

    def consume_burst(self) -> bool:
        """Account for one burst; ``False`` if it times out."""
        self.bursts_served += 1
        return not self.pending_timeouts.pop(self.bursts_served, False)

    @property
    def bit_count(self) -> int:
        return self.storage.bit_count if self.storage is not None else self.capacity * 8

    @property
    def megabits(self) -> float:
        return self.bit_count / 1e6

    def flip_absolute(self, position: int) -> None:
        if self.storage is not None:
            self.storage.flip_absolute(position)
        else:
            self.raw[position // 8] ^= 1 << (position % 8)

    def bitrot(self, flips: int, rng: np.random.Generator) -> None:
        for position in rng.integers(0, self.bit_count, size=flips):
            self.flip_absolute(int(position))


@dataclass(eq=False)
class SpiTransfer:
    transfer_id: int
    flash: SpiFlashModel
    direction: str
    start: int
    total: int
    sink: bytearray = field(default_factory=bytearray, repr=False)
    source: bytes = field(default=b'', repr=False)
    on_done: Optional[Callable[['SpiTransfer'], None]] = field(default=None, repr=False)
    done_bytes: int = 0
    bursts: int = 0
    interrupts: int = 0
    address_issues: int = 0
    status: str = 'running'
    pending_event: Optional[int] = field(default=None, repr=False)

    @property
    def expected_bursts(self) -> int:
        return -(-self.total // self.flash.burst_size)

    @property
    def finished(self) -> bool:
        return self.status != 'running'


class SpiController:
    """
    The SPI soft controller, owner of one interrupt line.

    Usage Example:
        >>> kernel = SimKernel()
        >>> spi = SpiController(kernel)
        >>> xfer = spi.burst_read(SpiFlashModel('flash', 1024), 0, 1000)
        >>> _ = kernel.advance_until(100)
        >>> xfer.bursts, len(xfer.sink)
        (4, 1000)
    """

    def __init__(self, kernel: SimKernel, line_id: int = SPI_LINE):
        self.kernel = kernel
        self.line_id = line_id
        self.line = kernel.register_interrupt(line_id, self._top_half, name='spi-burst-complete')
        self.active: Dict[int, SpiTransfer] = {}
        self.fault_flags = 0
        self.timeouts = 0
        self._ids = count(1)

    def burst_read(
            self,
            flash: SpiFlashModel,
            start: int,
            total: int,
            sink: Optional[bytearray] = None,
            on_done: Optional[Callable[[SpiTransfer], None]] = None
    ) -> SpiTransfer:
        flash._check(start, total)
        transfer = SpiTransfer(next(self._ids), flash, 'read', start, total,
                               sink if sink is not None else bytearray(), on_done=on_done)
        return self._begin(transfer)

    def burst_write(
            self,
            flash: SpiFlashModel,
            start: int,
            data: bytes,
            on_done: Optional[Callable[[SpiTransfer], None]] = None
    ) -> SpiTransfer:
        flash._check(start, len(data))
        transfer = SpiTransfer(next(self._ids), flash, 'write', start, len(data), source=bytes(data),
                               on_done=on_done)
        return self._begin(transfer)

    def abort_all(self, reason: str) -> None:
        for transfer in list(self.active.values()):
            self.kernel.cancel(transfer.pending_event)
            self._finish(transfer, 'aborted', reason, notify=False)

    def _begin(self, transfer: SpiTransfer) -> SpiTransfer:
        self.active[transfer.transfer_id] = transfer
        if transfer.total == 0:
            self.kernel.post(0, self._bottom_half, EventKind.SIGNAL, transfer)
        else:
            self._issue(transfer)
        return transfer

    def _issue(self, transfer: SpiTransfer) -> None:
        transfer.address_issues += 1
        flash = transfer.flash
        if not flash.consume_burst():
            transfer.pending_event = self.kernel.post(TIMEOUT_TICKS, self._on_timeout, EventKind.TIMER, transfer)
            return

        latency = flash.read_latency if transfer.direction == 'read' else flash.write_latency
        transfer.pending_event = self.kernel.post(latency, self._on_burst, EventKind.BUS_COMPLETION, transfer)

    def _on_burst(self, ev: Event) -> None:
        transfer = ev.payload
        transfer.pending_event = None
        if not transfer.finished:
            self.kernel.raise_interrupt(self.line_id, transfer)

    def _top_half(self, _line: InterruptLine, transfer: SpiTransfer) -> None:
        if transfer is None or transfer.finished:
            return

        flash = transfer.flash
        offset = transfer.start + transfer.done_bytes
        size = min(flash.burst_size, transfer.total - transfer.done_bytes)
        if transfer.direction == 'read':
            transfer.sink.extend(flash.read(offset, size))
        else:
            flash.program(offset, transfer.source[transfer.done_bytes:transfer.done_bytes + size])

        transfer.done_bytes += size
        transfer.bursts += 1
        transfer.interrupts += 1
        transfer.pending_event = self.kernel.post(0, self._bottom_half, EventKind.SIGNAL, transfer)

    def _bottom_half(self, ev: Event) -> None:
        transfer = ev.payload
        transfer.pending_event = None
        if transfer.finished:
            return
        if transfer.done_bytes < transfer.total:
            self._issue(transfer)
        else:
            self.fault_flags &= ~transfer.flash.fault_flag
            self._finish(transfer, 'done')

    def _on_timeout(self, ev: Event) -> None:
        transfer = ev.payload
        transfer.pending_event = None
        self.timeouts += 1
        self.fault_flags |= transfer.flash.fault_flag
        self._finish(transfer, 'aborted', f'timeout after {transfer.done_bytes} bytes')

    def _finish(self, transfer: SpiTransfer, status: str, reason: str = '', notify: bool = True) -> None:
        transfer.status = status
        self.active.pop(transfer.transfer_id, None)
        if status == 'aborted':
            log.warning(f'SPI {transfer.direction} on {transfer.flash.name} aborted: {reason}')
        if notify and transfer.on_done is not None:
            transfer.on_done(transfer)
