"""
Device access layer: the only way task bodies reach the hardware.

Every operation is a preset request code handed to :meth:`DeviceAccess.ioctl`;
the named wrappers below are the userspace functions the tasks call.
"""
from __future__ import annotations

from enum import Enum
from typing import TYPE_CHECKING, Any, Callable, List, Optional, Tuple

import numpy as np

from obc_sim.devices.sensors import (
    GYRO_ADDRESS,
    GYRO_DATA,
    GYRO_LSB,
    GYRO_TEMP,
    MAG_ADDRESS,
    MAG_DATA,
    MAG_LSB,
    TEMP_ADDRESS,
    TEMP_DATA,
    TEMP_LSB,
    decode_vector,
    decode_words,
)
from obc_sim.errors import ConfigurationError
from obc_sim.faulttol.config import scrub_config
from obc_sim.faulttol.memory import ScrubReport, scrub_memory

if TYPE_CHECKING:
    from obc_sim.compression.cube import HyperspectralCube
    from obc_sim.devices import Hardware
    from obc_sim.devices.fpga import CompressionJob
    from obc_sim.devices.spi import SpiTransfer
    from obc_sim.faulttol.tmr import Vote


class Ioctl(Enum):
    I2C_READ = 0x01
    SET_MAGNETORQUER = 0x10
    SPI_BURST_READ = 0x20
    SPI_BURST_WRITE = 0x21
    FLASH_READ = 0x22
    TELEMETRY_WRITE = 0x30
    DOWNLINK_WRITE = 0x31
    TELEMETRY_READ = 0x32
    EPS_EXCHANGE = 0x40
    FPGA_SUBMIT = 0x50
    FPGA_CHECKSUM = 0x51
    ECC_SCRUB = 0x60
    CONFIG_SCRUB = 0x61
    BOOT_STATUS = 0x62
    CONFIG_DIVERGENCE = 0x63
    FAULT_FLAGS = 0x70
    ECC_COUNTERS = 0x71


class DeviceAccess:
    """
    Parameters:
        hardware (Hardware): The devices behind the request codes.

    Usage Example:
        >>> from obc_sim.simkernel import SimKernel
        >>> from obc_sim.devices import Hardware
        >>> hw = Hardware.build(SimKernel())
        >>> bool(np.allclose(DeviceAccess(hw).read_gyro(), [0.0, 0.0, 0.3], atol=1e-3))
        True
    """

    def __init__(self, hardware: 'Hardware'):
        self.hw = hardware
        self.calls = 0
        self._table = {
            Ioctl.I2C_READ: hardware.bus.read,
            Ioctl.SET_MAGNETORQUER: hardware.actuators.set_magnetorquer,
            Ioctl.SPI_BURST_READ: hardware.spi.burst_read,
            Ioctl.SPI_BURST_WRITE: hardware.spi.burst_write,
            Ioctl.FLASH_READ: self._flash_read,
            Ioctl.TELEMETRY_WRITE: hardware.telemetry_memory.write,
            Ioctl.DOWNLINK_WRITE: hardware.downlink_memory.write,
            Ioctl.TELEMETRY_READ: hardware.telemetry_memory.records_since,
            Ioctl.EPS_EXCHANGE: hardware.eps.bulk_record,
            Ioctl.FPGA_SUBMIT: hardware.fpga.submit,
            Ioctl.FPGA_CHECKSUM: hardware.fpga.checksum,
            Ioctl.ECC_SCRUB: self._scrub_banks,
            Ioctl.CONFIG_SCRUB: lambda now: scrub_config(hardware.config_memory, now),
            Ioctl.BOOT_STATUS: lambda: (hardware.boot_store.primary_valid, hardware.boot_store.fallback_valid),
            Ioctl.CONFIG_DIVERGENCE: lambda: hardware.config_memory.divergence,
            Ioctl.FAULT_FLAGS: lambda: hardware.bus_fault_flags,
            Ioctl.ECC_COUNTERS: self._ecc_counters,
        }

    def ioctl(self, request: Ioctl, *args: Any) -> Any:
        try:
            operation = self._table[request]
        except KeyError:
            raise ConfigurationError(f'no driver for request {request!r}') from None
        self.calls += 1
        return operation(*args)

    def _flash_read(self, flash_name: str, offset: int, length: int) -> bytes:
        flash = self.hw.flash(flash_name)
        self.hw.spi_busy_ticks += flash.read_latency
        return flash.read(offset, length)

    def _scrub_banks(self, now: int) -> ScrubReport:
        report = ScrubReport()
        for bank in self.hw.ecc_banks():
            report += scrub_memory(bank, now)
        return report

    def _ecc_counters(self) -> Tuple[int, int]:
        banks = self.hw.ecc_banks()
        return sum(bank.corrected for bank in banks), sum(bank.uncorrectable for bank in banks)

    # Sensors ------------------------------------------------------------------------------------

    def read_magnetometer(self) -> np.ndarray:
        """Body-frame field in tesla."""
        return decode_vector(self.ioctl(Ioctl.I2C_READ, MAG_ADDRESS, MAG_DATA, 6), MAG_LSB)

    def read_gyro(self) -> np.ndarray:
        """Body rates in rad/s."""
        return decode_vector(self.ioctl(Ioctl.I2C_READ, GYRO_ADDRESS, GYRO_DATA, 6), GYRO_LSB)

    def read_board_temperature(self) -> float:
        return decode_words(self.ioctl(Ioctl.I2C_READ, TEMP_ADDRESS, TEMP_DATA, 2))[0] * TEMP_LSB

    def read_die_temperature(self) -> float:
        return decode_words(self.ioctl(Ioctl.I2C_READ, GYRO_ADDRESS, GYRO_TEMP, 2))[0] * TEMP_LSB

    # Actuators ----------------------------------------------------------------------------------

    def set_magnetorquer(self, duty) -> None:
        self.ioctl(Ioctl.SET_MAGNETORQUER, duty)

    # Memories -----------------------------------------------------------------------------------

    def write_telemetry(self, record: bytes) -> int:
        return self.ioctl(Ioctl.TELEMETRY_WRITE, record)

    def write_downlink(self, packet: bytes) -> int:
        return self.ioctl(Ioctl.DOWNLINK_WRITE, packet)

    def read_telemetry_since(self, sequence: int) -> List[Tuple[int, bytes]]:
        """Stored telemetry records from write sequence ``sequence`` on."""
        return self.ioctl(Ioctl.TELEMETRY_READ, sequence)

    def spi_read(
            self,
            flash_name: str,
            start: int,
            total: int,
            on_done: Optional[Callable[['SpiTransfer'], None]] = None
    ) -> 'SpiTransfer':
        return self.ioctl(Ioctl.SPI_BURST_READ, self.hw.flash(flash_name), start, total, None, on_done)

    def spi_write(
            self,
            flash_name: str,
            start: int,
            data: bytes,
            on_done: Optional[Callable[['SpiTransfer'], None]] = None
    ) -> 'SpiTransfer':
        return self.ioctl(Ioctl.SPI_BURST_WRITE, self.hw.flash(flash_name), start, data, on_done)

    def flash_read(self, flash_name: str, offset: int, length: int) -> bytes:
        return self.ioctl(Ioctl.FLASH_READ, flash_name, offset, length)

    # EPS and FPGA -------------------------------------------------------------------------------

    def eps_exchange(self) -> bytes:
        return self.ioctl(Ioctl.EPS_EXCHANGE)

    def compress(self, cube: 'HyperspectralCube', on_done: Callable[['CompressionJob'], None]) -> 'CompressionJob':
        return self.ioctl(Ioctl.FPGA_SUBMIT, cube, on_done)

    def checksum(self, payload: bytes) -> 'Vote':
        return self.ioctl(Ioctl.FPGA_CHECKSUM, payload)

    # Memory health ------------------------------------------------------------------------------

    def scrub_memories(self, now: int) -> ScrubReport:
        return self.ioctl(Ioctl.ECC_SCRUB, now)

    def scrub_config(self, now: int) -> ScrubReport:
        return self.ioctl(Ioctl.CONFIG_SCRUB, now)

    def config_divergence(self) -> int:
        return self.ioctl(Ioctl.CONFIG_DIVERGENCE)

    def boot_status(self) -> Tuple[bool, bool]:
        """Checksum validity of the primary and fallback boot images."""
        return self.ioctl(Ioctl.BOOT_STATUS)

    def fault_flags(self) -> int:
        return self.ioctl(Ioctl.FAULT_FLAGS)

    def ecc_counters(self) -> Tuple[int, int]:
        """Corrected and uncorrectable word counts over the ECC banks."""
        return self.ioctl(Ioctl.ECC_COUNTERS)
