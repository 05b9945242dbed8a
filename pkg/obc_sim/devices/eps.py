"""
Electrical power subsystem micro-controller: battery, bulk housekeeping
exchange and the hardware watchdog that power-cycles the OBC.
"""
from __future__ import annotations

import struct
from typing import Callable, List, Optional

from obc_sim.errors import BusError, ConfigurationError
from obc_sim.helpers import get_logger
from obc_sim.simkernel import Event, EventKind, SimKernel, SimTime

log = get_logger(__name__)

EPS_ADDRESS = 0x2C
_BULK_HEADER = struct.Struct('<BIdI')
BULK_RECORD_TYPE = 3


class WatchdogGpio:
    """
    The GPIO line whose edge resets the EPS watchdog.

    Exactly one owner can claim the line; only the owner holds the kick function.
    """

    def __init__(self, eps: 'EpsModel'):
        self.__eps = eps
        self.__owner: Optional[str] = None
        self.edges = 0

    @property
    def owner(self) -> Optional[str]:
        return self.__owner

    def claim(self, owner: str) -> Callable[[], None]:
        if self.__owner is not None:
            raise ConfigurationError(f'watchdog GPIO already claimed by {self.__owner}')
        self.__owner = owner
        return self._edge

    def _edge(self) -> None:
        self.edges += 1
        self.__eps.kick()


class EpsModel:
    """
    Parameters:
        kernel (SimKernel): Owner of the watchdog expiry event.
        battery_soc (float): Initial state of charge.
        discharge_rate (float): SoC lost per second per unit of load.
        charge_rate (float): SoC gained per second from the arrays.
        hw_watchdog_timeout (int): Milliseconds without a kick before a power cycle.
        bulk_record_size (int): Size of the bulk housekeeping record in bytes.
    """

    def __init__(
            self,
            kernel: SimKernel,
            battery_soc: float = 0.8,
            discharge_rate: float = 1e-5,
            charge_rate: float = 3e-5,
            hw_watchdog_timeout: int = 3000,
            bulk_record_size: int = 64
    ):
        if bulk_record_size < _BULK_HEADER.size:
            raise ConfigurationError(f'bulk records need at least {_BULK_HEADER.size} bytes')

        self.kernel = kernel
        self.battery_soc = float(battery_soc)
        self.discharge_rate = discharge_rate
        self.charge_rate = charge_rate
        self.hw_watchdog_timeout = hw_watchdog_timeout
        self.bulk_record_size = bulk_record_size
        self.gpio = WatchdogGpio(self)
        self.nack = False

        self.power_cycle_count = 0
        self.kicks = 0
        self.last_kick: Optional[SimTime] = None
        self.on_power_cycle: List[Callable[[str], None]] = []
        self._expiry_event: Optional[int] = None
        self._expiry_at: Optional[SimTime] = None

    # Watchdog -----------------------------------------------------------------------------------

    def arm(self) -> None:
        self.kernel.cancel(self._expiry_event)
        self._expiry_at = self.kernel.now + self.hw_watchdog_timeout
        self._expiry_event = self.kernel.schedule_event(
            self._expiry_at, Event(self._expiry_at, EventKind.TIMER, handler=self._on_expiry),
        )

    def kick(self) -> None:
        self.kicks += 1
        self.last_kick = self.kernel.now
        self.arm()

    @property
    def hw_watchdog_remaining(self) -> Optional[int]:
        return None if self._expiry_at is None else self._expiry_at - self.kernel.now

    def _on_expiry(self, _ev: Event) -> None:
        self._expiry_event = self._expiry_at = None
        log.warning(f'EPS watchdog expired at t={self.kernel.now} (last kick {self.last_kick})')
        self.power_cycle('hw-watchdog')

    def power_cycle(self, cause: str) -> None:
        """Cut and restore OBC power; the watchdog countdown restarts from full."""
        self.power_cycle_count += 1
        self.arm()
        for callback in self.on_power_cycle:
            callback(cause)

    # Battery ------------------------------------------------------------------------------------

    def tick(self, dt: int, load: float) -> float:
        """Integrate the battery over ``dt`` ms at the given load; returns the new SoC."""
        rate = self.charge_rate - self.discharge_rate * load
        self.battery_soc = min(1.0, max(0.0, self.battery_soc + rate * dt / 1000))
        return self.battery_soc

    def bulk_record(self) -> bytes:
        """
        The bulk housekeeping record the OBC fetches from the EPS.

        Raises:
            BusError: While the EPS link is not acknowledging.
        """
        if self.nack:
            raise BusError(EPS_ADDRESS, 'EPS link not acknowledging')

        header = _BULK_HEADER.pack(BULK_RECORD_TYPE, self.kernel.now & 0xFFFFFFFF, self.battery_soc,
                                   self.power_cycle_count)
        return header.ljust(self.bulk_record_size, b'\x00')


def parse_bulk_record(record: bytes) -> dict:
    kind, t, soc, power_cycles = _BULK_HEADER.unpack_from(record)
    return {'type': kind, 't': t, 'battery_soc': soc, 'power_cycles': power_cycles}
