"""
I2C bus and register-level sensor device models.
"""
from __future__ import annotations

from enum import Enum
from typing import Dict, Iterable, Optional

import numpy as np

from obc_sim.errors import BusError
from obc_sim.helpers import get_logger

log = get_logger(__name__)

I2C_LATENCY = 1
"""Ticks per bus transaction."""


class DeviceFault(Enum):
    NONE = 'none'
    NACK = 'nack'
    STUCK = 'stuck'


def _to_int16(value: float) -> int:
    return int(min(32767, max(-32768, round(value))))


class I2cDeviceModel:
    """
    A 7-bit addressed device exposing a byte register file.

    Sixteen-bit words are stored big-endian. Noise is declared per word
    register as a Gaussian sigma in LSB and applied on read only, so reads
    never change the register file.

    Parameters:
        address (int): 7-bit bus address.
        name (str): Human-readable device name.
        noise (dict, optional): ``{register: sigma_lsb}`` for 16-bit word registers.
        seed (int): Seed of the device's noise generator.
        fault_flag (int): Bit this device sets in the bus fault flags.
    """

    def __init__(
            self,
            address: int,
            name: str,
            noise: Optional[Dict[int, float]] = None,
            seed: int = 0,
            fault_flag: int = 0
    ):
        if not 0 <= address < 0x80:
            raise ValueError(f'I2C address 0x{address:x} is not 7-bit')

        self.address = address
        self.name = name
        self.registers: Dict[int, int] = {}
        self.noise = {reg: float(sigma) for reg, sigma in (noise or {}).items()}
        self.rng = np.random.default_rng(seed)
        self.fault_flag = fault_flag
        self.__fault = DeviceFault.NONE
        self.latched = False
        self._stale: Optional[Dict[int, int]] = None

    @property
    def fault(self) -> DeviceFault:
        return self.__fault

    @fault.setter
    def fault(self, new: DeviceFault):
        if not isinstance(new, DeviceFault):
            raise TypeError('fault must be a DeviceFault!')
        if self.latched and new is not DeviceFault.NACK:
            log.warning(f'{self.name} is latched up; fault stays {self.__fault.value}')
            return

        self._stale = dict(self.registers) if new is DeviceFault.STUCK else None
        self.__fault = new

    def latch_up(self) -> None:
        """Permanent failure: the device stops acknowledging for good."""
        self.fault = DeviceFault.NACK
        self.latched = True

    def set_word(self, register: int, value: float) -> None:
        word = _to_int16(value) & 0xFFFF
        self.registers[register] = word >> 8
        self.registers[register + 1] = word & 0xFF

    def set_words(self, register: int, values: Iterable[float]) -> None:
        for i, value in enumerate(values):
            self.set_word(register + 2 * i, value)

    def read(self, register: int, length: int) -> bytes:
        if self.__fault is DeviceFault.NACK:
            raise BusError(self.address)

        source = self._stale if self.__fault is DeviceFault.STUCK else self.registers
        out = bytearray(source.get(register + i, 0) for i in range(length))
        if self.__fault is DeviceFault.STUCK:
            return bytes(out)

        for reg, sigma in self.noise.items():
            offset = reg - register
            if sigma <= 0 or offset < 0 or offset + 1 >= length:
                continue
            raw = int.from_bytes(out[offset:offset + 2], 'big', signed=True)
            noisy = _to_int16(raw + self.rng.normal(0.0, sigma)) & 0xFFFF
            out[offset:offset + 2] = noisy.to_bytes(2, 'big')
        return bytes(out)


class I2cBus:
    """
    The OBC's I2C master.

    A read that fails sets the device's bit in :attr:`fault_flags`; the next
    successful read from that device clears it again.
    """

    def __init__(self):
        self.devices: Dict[int, I2cDeviceModel] = {}
        self.fault_flags = 0
        self.transactions = 0
        self.errors = 0
        self.busy_ticks = 0

    def attach(self, device: I2cDeviceModel) -> I2cDeviceModel:
        if device.address in self.devices:
            raise ValueError(f'address 0x{device.address:02x} already taken by {self.devices[device.address].name}')
        self.devices[device.address] = device
        return device

    def device(self, address: int) -> I2cDeviceModel:
        try:
            return self.devices[address]
        except KeyError:
            raise BusError(address, 'not present on the bus') from None

    def read(self, address: int, register: int, length: int) -> bytes:
        self.transactions += 1
        self.busy_ticks += I2C_LATENCY
        device = self.devices.get(address)
        if device is None:
            self.errors += 1
            raise BusError(address, 'not present on the bus')

        try:
            data = device.read(register, length)
        except BusError:
            self.errors += 1
            self.fault_flags |= device.fault_flag
            raise

        self.fault_flags &= ~device.fault_flag
        return data
