"""
The sensor suite on the I2C bus: magnetometer, IMU gyro and board
temperature sensor, with their register maps and unit conversions.
"""
from __future__ import annotations

from collections import deque
from typing import Tuple

import numpy as np

from obc_sim.devices.environment import EnvironmentState
from obc_sim.devices.i2c import I2cBus, I2cDeviceModel

MAG_ADDRESS = 0x1E
MAG_DATA = 0x03
MAG_LSB = 10e-9          # tesla

GYRO_ADDRESS = 0x68
GYRO_DATA = 0x43
GYRO_TEMP = 0x41
GYRO_LSB = 1e-4          # rad/s

TEMP_ADDRESS = 0x48
TEMP_DATA = 0x00
TEMP_LSB = 0.01          # °C

FLAG_MAG = 1
FLAG_GYRO = 2
FLAG_TEMP = 4
FLAG_SPI_IMAGE = 8
FLAG_SPI_OUT = 16
FLAG_EPS = 32

DIE_TEMPERATURE_OFFSET = 5.0

VALID_SMOOTHING_ALGORITHMS = [
    'none',
    'moving_average',
    'exponential_moving_average',
]


def build_sensor_bus(mag_sigma: float, gyro_sigma: float, temp_sigma: float, seed: int) -> I2cBus:
    """Attach the three sensors, each with its own noise stream derived from ``seed``."""
    bus = I2cBus()
    bus.attach(I2cDeviceModel(
        MAG_ADDRESS, 'magnetometer', {MAG_DATA + 2 * i: mag_sigma for i in range(3)},
        seed=seed * 16 + 1, fault_flag=FLAG_MAG,
    ))
    bus.attach(I2cDeviceModel(
        GYRO_ADDRESS, 'gyro', {**{GYRO_DATA + 2 * i: gyro_sigma for i in range(3)}, GYRO_TEMP: temp_sigma},
        seed=seed * 16 + 2, fault_flag=FLAG_GYRO,
    ))
    bus.attach(I2cDeviceModel(
        TEMP_ADDRESS, 'temperature', {TEMP_DATA: temp_sigma},
        seed=seed * 16 + 3, fault_flag=FLAG_TEMP,
    ))
    return bus


def refresh_sensors(bus: I2cBus, env: EnvironmentState) -> None:
    """Write the true environment state into the sensor registers."""
    bus.devices[MAG_ADDRESS].set_words(MAG_DATA, env.b_body / MAG_LSB)
    gyro = bus.devices[GYRO_ADDRESS]
    gyro.set_words(GYRO_DATA, env.omega / GYRO_LSB)
    gyro.set_word(GYRO_TEMP, (env.temperature + DIE_TEMPERATURE_OFFSET) / TEMP_LSB)
    bus.devices[TEMP_ADDRESS].set_word(TEMP_DATA, env.temperature / TEMP_LSB)


def decode_words(raw: bytes) -> Tuple[int, ...]:
    return tuple(int.from_bytes(raw[i:i + 2], 'big', signed=True) for i in range(0, len(raw) - 1, 2))


def decode_vector(raw: bytes, lsb: float) -> np.ndarray:
    return np.array(decode_words(raw), dtype=float) * lsb


class SensorDataSmoother:
    """
    Class to apply smoothing algorithms to sensor data.

    Usage Example:
        >>> smoother = SensorDataSmoother(method='moving_average', window_size=2)
        >>> smoother.apply(20.0), smoother.apply(22.0)
        (20.0, 21.0)
    """

    def __init__(self, method: str = 'none', window_size: int = 5, alpha: float = 0.2):
        """
        Parameters:
            method (str): One of :data:`VALID_SMOOTHING_ALGORITHMS`.
            window_size (int): The size of the window for the moving average.
            alpha (float): The smoothing factor for exponential moving average, between 0 and 1.
        """
        if method not in VALID_SMOOTHING_ALGORITHMS:
            raise ValueError(f'Invalid smoothing method: {method}')

        self.method = method
        self.window_size = window_size
        self.alpha = alpha
        self.data = deque(maxlen=window_size)
        self.ema = None

    def apply(self, new_data: float) -> float:
        if self.method == 'moving_average':
            self.data.append(new_data)
            return sum(self.data) / len(self.data)
        if self.method == 'exponential_moving_average':
            self.ema = new_data if self.ema is None else (1 - self.alpha) * self.ema + self.alpha * new_data
            return self.ema
        return new_data

    def reset(self) -> None:
        self.data.clear()
        self.ema = None
