"""
Housekeeping, sensor polling and the beacon.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from obc_sim.devices.eps import parse_bulk_record
from obc_sim.devices.sensors import SensorDataSmoother
from obc_sim.errors import BusError, TelemetrySizeError
from obc_sim.flightplan import ExitStatus, TaskHandle
from obc_sim.fsm import Mode
from obc_sim.helpers import get_logger
from obc_sim.tasks.registry import TaskContext, nan_vector, task_body

log = get_logger(__name__)

HOUSEKEEPING_TYPE = 1
BEACON_TYPE = 2
BEACON_SIZE = 32

VALID_MAG = 1
VALID_GYRO = 2
VALID_TEMP = 4
VALID_DIE = 8
VALID_EPS = 16
VALID_ALL = VALID_MAG | VALID_GYRO | VALID_TEMP | VALID_DIE | VALID_EPS

MODE_CODES = {mode: code for code, mode in enumerate(Mode)}

_HOUSEKEEPING = struct.Struct('<BIBBHd3d3d2dII')
_BEACON = struct.Struct('<BIBBdd')


def _mode_code(mode: Optional[Mode]) -> int:
    return 0xFF if mode is None else MODE_CODES[mode]


def _mode_from_code(code: int) -> Optional[Mode]:
    return None if code == 0xFF else list(Mode)[code]


@dataclass
class HousekeepingRecord:
    """
    One housekeeping sample. Fields whose sensor failed hold NaN and have
    their bit cleared in ``valid``.

    Usage Example:
        >>> rec = HousekeepingRecord(1000, Mode.DETUMBLE, battery_soc=0.8)
        >>> HousekeepingRecord.unpack(rec.pack()) == rec
        True
    """
    timestamp: int
    mode: Optional[Mode]
    valid: int = VALID_ALL
    bus_fault_flags: int = 0
    battery_soc: float = 0.0
    omega: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    b_field: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperatures: Tuple[float, float] = (0.0, 0.0)
    ecc_corrected: int = 0
    ecc_uncorrectable: int = 0

    def pack(self) -> bytes:
        return _HOUSEKEEPING.pack(
            HOUSEKEEPING_TYPE, self.timestamp & 0xFFFFFFFF, _mode_code(self.mode), self.valid,
            self.bus_fault_flags, self.battery_soc, *self.omega, *self.b_field, *self.temperatures,
            self.ecc_corrected, self.ecc_uncorrectable,
        )

    @classmethod
    def unpack(cls, blob: bytes) -> 'HousekeepingRecord':
        values = _HOUSEKEEPING.unpack(blob[:_HOUSEKEEPING.size])
        if values[0] != HOUSEKEEPING_TYPE:
            raise ValueError(f'not a housekeeping record (type {values[0]})')
        return cls(
            timestamp=values[1], mode=_mode_from_code(values[2]), valid=values[3], bus_fault_flags=values[4],
            battery_soc=values[5], omega=tuple(values[6:9]), b_field=tuple(values[9:12]),
            temperatures=tuple(values[12:14]), ecc_corrected=values[14], ecc_uncorrectable=values[15],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HousekeepingRecord):
            return NotImplemented

        def same(a, b):
            return all((math.isnan(x) and math.isnan(y)) or x == y for x, y in zip(np.ravel(a), np.ravel(b)))

        return (
            (self.timestamp, self.mode, self.valid, self.bus_fault_flags, self.ecc_corrected, self.ecc_uncorrectable)
            == (other.timestamp, other.mode, other.valid, other.bus_fault_flags, other.ecc_corrected,
                other.ecc_uncorrectable)
            and same([self.battery_soc], [other.battery_soc])
            and same(self.omega, other.omega)
            and same(self.b_field, other.b_field)
            and same(self.temperatures, other.temperatures)
        )


def pack_beacon(t: int, mode: Optional[Mode], flags: int, soc: float, omega_mag: float) -> bytes:
    return _BEACON.pack(BEACON_TYPE, t & 0xFFFFFFFF, _mode_code(mode), flags & 0xFF, soc, omega_mag).ljust(
        BEACON_SIZE, b'\x00')


def unpack_beacon(blob: bytes) -> dict:
    kind, t, mode, flags, soc, omega_mag = _BEACON.unpack(blob[:_BEACON.size])
    return {'type': kind, 't': t, 'mode': _mode_from_code(mode), 'flags': flags, 'battery_soc': soc,
            'omega_mag': omega_mag}


@dataclass
class SensorCache:
    """The software's latest view of the body rates and temperatures."""
    smoothing: str = 'none'
    window: int = 5
    alpha: float = 0.2
    omega: np.ndarray = field(default_factory=nan_vector)
    temperatures: Tuple[float, ...] = ()
    readings: int = 0
    smoothers: List[SensorDataSmoother] = field(init=False, repr=False)

    def __post_init__(self):
        self.smoothers = [SensorDataSmoother(self.smoothing, self.window, self.alpha) for _ in range(3)]

    def update_omega(self, raw: np.ndarray) -> np.ndarray:
        self.omega = np.array([smoother.apply(float(w)) for smoother, w in zip(self.smoothers, raw)])
        self.readings += 1
        return self.omega

    def update_temperatures(self, temperatures: Tuple[float, ...]) -> None:
        valid = tuple(t for t in temperatures if not math.isnan(t))
        if valid:
            self.temperatures = valid

    def reset(self) -> None:
        for smoother in self.smoothers:
            smoother.reset()
        self.omega = nan_vector()
        self.temperatures = ()
        self.readings = 0


def _try_read(read, fallback):
    try:
        return read(), True
    except BusError as e:
        log.debug(f'sensor read failed: {e}')
        return fallback, False


def read_temperatures(ctx: TaskContext) -> Tuple[Tuple[float, float], int]:
    board, board_ok = _try_read(ctx.access.read_board_temperature, math.nan)
    die, die_ok = _try_read(ctx.access.read_die_temperature, math.nan)
    return (board, die), (VALID_TEMP if board_ok else 0) | (VALID_DIE if die_ok else 0)


@task_body('housekeeping')
def housekeeping(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    """Poll every sensor and the EPS, then store one record in the shared telemetry memory."""
    now = handle.now
    access = ctx.access
    valid = 0

    b_field, ok = _try_read(access.read_magnetometer, nan_vector())
    valid |= VALID_MAG if ok else 0
    omega, ok = _try_read(access.read_gyro, nan_vector())
    valid |= VALID_GYRO if ok else 0
    temperatures, temp_valid = read_temperatures(ctx)
    valid |= temp_valid

    soc = math.nan
    try:
        soc = parse_bulk_record(access.eps_exchange())['battery_soc']
        valid |= VALID_EPS
    except BusError as e:
        log.debug(f'EPS exchange failed: {e}')

    if valid & VALID_GYRO:
        ctx.sensors.update_omega(omega)
    ctx.sensors.update_temperatures(temperatures)

    corrected, uncorrectable = access.ecc_counters()
    record = HousekeepingRecord(
        now, ctx.mode(), valid, access.fault_flags(), soc, tuple(omega), tuple(b_field), temperatures,
        corrected, uncorrectable,
    )
    try:
        slot = access.write_telemetry(record.pack())
    except TelemetrySizeError as e:
        log.error(f'housekeeping record rejected: {e}')
        return ExitStatus.FAILED

    ctx.telemetry.emit('housekeeping', now, slot=slot, valid=valid, bus_fault_flags=record.bus_fault_flags)
    return ExitStatus.OK


@task_body('sensor-poll')
def sensor_poll(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    """Refresh the cached body rates and temperatures the mode logic reads."""
    try:
        ctx.sensors.update_omega(ctx.access.read_gyro())
    except BusError as e:
        log.debug(f'gyro unavailable at t={handle.now}: {e}')
    temperatures, _ = read_temperatures(ctx)
    ctx.sensors.update_temperatures(temperatures)
    return ExitStatus.OK


@task_body('beacon')
def beacon(ctx: TaskContext, handle: TaskHandle) -> ExitStatus:
    """Store a 32-byte status record (mode, SoC, |ω|)."""
    now = handle.now
    metrics = ctx.metrics()
    mode = ctx.mode()
    blob = pack_beacon(now, mode, metrics.bus_fault_flags, metrics.battery_soc, metrics.omega_mag)
    slot = ctx.access.write_telemetry(blob)
    ctx.telemetry.emit('beacon', now, slot=slot, mode=mode, battery_soc=metrics.battery_soc,
                       omega_mag=metrics.omega_mag)
    return ExitStatus.OK
