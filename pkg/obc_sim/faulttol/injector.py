"""
Radiation fault injector: Poisson-distributed single event upsets plus an
explicit, time-stamped fault schedule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence

import numpy as np

from obc_sim.errors import ConfigurationError
from obc_sim.helpers import get_logger

log = get_logger(__name__)

FAULT_KINDS = frozenset({
    'seu', 'hang', 'stall', 'power-cycle', 'nack', 'stuck', 'clear', 'latchup', 'spi-timeout',
    'spi-bitrot', 'corrupt-boot', 'spurious-interrupt', 'tmr-upset',
})


class UpsetTarget(Protocol):
    label: str

    @property
    def bit_count(self) -> int: ...

    @property
    def megabits(self) -> float: ...

    def flip_absolute(self, position: int) -> None: ...


@dataclass(frozen=True)
class FaultEvent:
    """
    One fault, drawn or scheduled.

    ``target`` names a memory for upsets, a device or task for the other
    kinds; ``bit`` is the absolute bit position within an upset target.
    """
    t: int
    kind: str
    target: Optional[str] = None
    bit: Optional[int] = None
    args: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ConfigurationError(f'unknown fault kind {self.kind!r}')

    def as_record(self) -> Dict[str, Any]:
        record = {'kind': self.kind, 'target': self.target, 'bit': self.bit}
        record.update(self.args)
        return record


class FaultInjector:
    """
    Parameters:
        seu_rate (float): Expected upsets per second per megabit.
        targets (dict): Upset targets by name.
        seed (int): Seed of the injector's own random generator.
        schedule (list, optional): Explicit upsets applied at their exact time.
    """

    def __init__(
            self,
            seu_rate: float = 0.0,
            targets: Optional[Dict[str, UpsetTarget]] = None,
            seed: int = 0,
            schedule: Optional[Sequence[FaultEvent]] = None
    ):
        if seu_rate < 0:
            raise ConfigurationError('SEU rate cannot be negative')

        self.seu_rate = float(seu_rate)
        self.targets: Dict[str, UpsetTarget] = dict(targets or {})
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.schedule: List[FaultEvent] = sorted(schedule or [], key=lambda ev: ev.t)
        self._cursor = 0
        self.injected = 0

    def add_target(self, name: str, target: UpsetTarget) -> None:
        self.targets[name] = target

    def apply(self, event: FaultEvent) -> FaultEvent:
        """Apply a single upset to its target."""
        target = self.targets.get(event.target)
        if target is None:
            raise ConfigurationError(f'no upset target named {event.target!r}')
        if not 0 <= event.bit < target.bit_count:
            raise ConfigurationError(f'bit {event.bit} outside {event.target} ({target.bit_count} bits)')

        target.flip_absolute(event.bit)
        self.injected += 1
        log.debug(f'SEU in {event.target} bit {event.bit} at t={event.t}')
        return event

    def expected_upsets(self, name: str, dt: int) -> float:
        return self.seu_rate * (dt / 1000) * self.targets[name].megabits


def inject_faults(injector: FaultInjector, now: int, dt: int) -> List[FaultEvent]:
    """
    Draw and apply the upsets for the window of ``dt`` ms ending at ``now``.

    Each target receives ``Poisson(seu_rate * dt * megabits)`` flips at
    uniformly drawn bit positions, targets visited in name order. Scheduled
    upsets due by ``now`` are applied first, in time order.
    """
    events = []
    while injector._cursor < len(injector.schedule) and injector.schedule[injector._cursor].t <= now:
        event = injector.schedule[injector._cursor]
        injector._cursor += 1
        if event.kind == 'seu':
            events.append(injector.apply(event))

    if injector.seu_rate <= 0 or dt <= 0:
        return events

    for name in sorted(injector.targets):
        target = injector.targets[name]
        flips = int(injector.rng.poisson(injector.expected_upsets(name, dt)))
        if not flips:
            continue
        for position in injector.rng.integers(0, target.bit_count, size=flips):
            events.append(injector.apply(FaultEvent(now, 'seu', name, int(position))))
    return events
