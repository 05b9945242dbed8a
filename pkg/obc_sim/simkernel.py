"""
Deterministic virtual clock, event queue and interrupt lines.

Every other part of the simulator runs on top of a single :class:`SimKernel`.
Simulated time is an integer tick count where one tick is one millisecond.
"""
from __future__ import annotations

import heapq
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from itertools import count
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

from obc_sim.errors import ConfigurationError, SchedulingError
from obc_sim.helpers import get_logger

log = get_logger(__name__)

SimTime = int
"""Simulated milliseconds since the start of the run."""


class EventKind(Enum):
    TIMER = 'timer'
    BUS_COMPLETION = 'bus-completion'
    FAULT_INJECTION = 'fault-injection'
    INTERRUPT = 'interrupt'
    SIGNAL = 'signal'


@dataclass
class Event:
    """
    A queued simulation event.

    ``seq`` is assigned by the kernel on insertion and doubles as the event id.
    Events with equal ``fire_at`` fire in ascending ``seq`` order.
    """
    fire_at: SimTime
    kind: EventKind = EventKind.TIMER
    payload: Any = None
    handler: Optional[Callable[['Event'], None]] = field(default=None, repr=False, compare=False)
    seq: int = -1


@dataclass
class InterruptLine:
    line_id: int
    handler: Callable[['InterruptLine', Any], None] = field(repr=False)
    name: str = ''
    pending: bool = False
    payload: Any = field(default=None, repr=False)


@dataclass
class KernelStats:
    fired: int = 0
    cancelled: int = 0
    interrupts_delivered: int = 0
    lost_interrupts: int = 0


class SimKernel:
    """
    Single-threaded discrete-event loop.

    Usage Example:
        >>> kernel = SimKernel()
        >>> _ = kernel.schedule_event(5, Event(5))
        >>> [ev.fire_at for ev in kernel.advance_until(10)]
        [5]
        >>> kernel.now
        10
    """

    def __init__(self):
        self.__now: SimTime = 0
        self._queue: List[Tuple[SimTime, int, Event]] = []
        self._seq = count()
        self._queued: set[int] = set()
        self._cancelled: set[int] = set()
        self._lines: Dict[int, InterruptLine] = {}
        self._mask_depth = 0
        self._delivering = False
        self.stats = KernelStats()

    @property
    def now(self) -> SimTime:
        return self.__now

    def __len__(self) -> int:
        return len(self._queue) - len(self._cancelled)

    def schedule_event(self, t: SimTime, ev: Event) -> int:
        """
        Queue ``ev`` to fire at tick ``t``.

        Returns:
            int: The event id, usable with :meth:`cancel`.

        Raises:
            SchedulingError: If ``t`` lies before the current tick.
        """
        if t < self.__now:
            raise SchedulingError(f'requested t={t}, clock is at {self.__now}')

        ev.fire_at = int(t)
        ev.seq = next(self._seq)
        heapq.heappush(self._queue, (ev.fire_at, ev.seq, ev))
        self._queued.add(ev.seq)
        return ev.seq

    def post(
            self,
            delay: int,
            handler: Callable[[Event], None],
            kind: EventKind = EventKind.TIMER,
            payload: Any = None
    ) -> int:
        """Schedule ``handler`` to run ``delay`` ticks from now."""
        return self.schedule_event(self.__now + delay, Event(self.__now + delay, kind, payload, handler))

    def cancel(self, event_id: Optional[int]) -> bool:
        if event_id is None or event_id in self._cancelled:
            return False
        if event_id not in self._queued:
            return False
        self._cancelled.add(event_id)
        self.stats.cancelled += 1
        return True

    def advance_until(self, t: SimTime) -> List[Event]:
        """
        Fire every pending event with ``fire_at <= t`` in ``(fire_at, seq)`` order.

        Handlers may schedule further events; those fire in the same call when
        they are due by ``t``. On return the clock reads exactly ``t``.
        """
        if t < self.__now:
            raise SchedulingError(f'cannot advance to t={t}, clock is at {self.__now}')

        fired = []
        while self._queue and self._queue[0][0] <= t:
            fire_at, seq, ev = heapq.heappop(self._queue)
            self._queued.discard(seq)
            if seq in self._cancelled:
                self._cancelled.discard(seq)
                continue

            self.__now = fire_at
            self.stats.fired += 1
            fired.append(ev)
            if ev.handler is not None:
                ev.handler(ev)

        self.__now = t
        return fired

    # Interrupt lines ----------------------------------------------------------------------------

    def register_interrupt(
            self,
            line_id: int,
            handler: Callable[[InterruptLine, Any], None],
            name: str = ''
    ) -> InterruptLine:
        if line_id in self._lines:
            raise ConfigurationError(f'interrupt line {line_id} already has a handler')

        line = InterruptLine(line_id, handler, name or f'line-{line_id}')
        self._lines[line_id] = line
        return line

    def line(self, line_id: int) -> Optional[InterruptLine]:
        return self._lines.get(line_id)

    def raise_interrupt(self, line_id: int, payload: Any = None) -> bool:
        """
        Raise an interrupt line.

        The handler runs at the current tick before any further event dispatch.
        Raising an unregistered line is counted as a lost interrupt.

        Returns:
            bool: ``False`` if the interrupt was lost.
        """
        line = self._lines.get(line_id)
        if line is None:
            self.stats.lost_interrupts += 1
            log.warning(f'Lost interrupt on unregistered line {line_id} at t={self.__now}')
            return False

        line.pending = True
        line.payload = payload
        if not self._mask_depth:
            self._deliver_pending()
        return True

    @contextmanager
    def interrupts_masked(self) -> Iterator[None]:
        """Latch interrupts raised inside the block; deliver them in registration order on exit."""
        self._mask_depth += 1
        try:
            yield
        finally:
            self._mask_depth -= 1
            if not self._mask_depth:
                self._deliver_pending()

    def _deliver_pending(self) -> None:
        if self._delivering:
            return

        self._delivering = True
        try:
            while True:
                line = next((ln for ln in self._lines.values() if ln.pending), None)
                if line is None:
                    break
                line.pending = False
                payload, line.payload = line.payload, None
                self.stats.interrupts_delivered += 1
                line.handler(line, payload)
        finally:
            self._delivering = False
