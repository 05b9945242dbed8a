"""
Simulated hardware of the OBC and its surroundings.

:class:`Hardware` holds one instance of every device; task bodies reach it
only through :class:`~obc_sim.devices.access.DeviceAccess`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from obc_sim.compression.coder import RiceParams
from obc_sim.compression.cube import HyperspectralCube
from obc_sim.devices.environment import ActuatorState, EnvironmentState, env_step
from obc_sim.devices.eps import EpsModel
from obc_sim.devices.fpga import CompressionUnit
from obc_sim.devices.i2c import I2cBus, I2cDeviceModel
from obc_sim.devices.sensors import FLAG_EPS, FLAG_SPI_IMAGE, FLAG_SPI_OUT, build_sensor_bus, refresh_sensors
from obc_sim.devices.shared_memory import SharedTelemetryMemory
from obc_sim.devices.spi import SpiController, SpiFlashModel
from obc_sim.faulttol.boot import BootImageStore
from obc_sim.faulttol.config import ConfigMemory
from obc_sim.faulttol.injector import UpsetTarget
from obc_sim.faulttol.memory import WORD_BYTES, MemoryBank
from obc_sim.scenario import (
    ActuatorConfig,
    CompressionConfig,
    EnvironmentConfig,
    EpsConfig,
    FaultConfig,
    RunConfig,
    Scenario,
    SensorConfig,
    SpiConfig,
    TelemetryConfig,
)
from obc_sim.simkernel import SimKernel

CAMERA_FLASH = 'camera-flash'
IMAGE_STORE = 'image-store'
PACKET_SIZE = 256


@dataclass(eq=False)
class Hardware:
    kernel: SimKernel
    env: EnvironmentState
    actuators: ActuatorState
    bus: I2cBus
    spi: SpiController
    camera_flash: SpiFlashModel
    image_store: SpiFlashModel
    telemetry_memory: SharedTelemetryMemory
    downlink_memory: SharedTelemetryMemory
    eps: EpsModel
    config_memory: ConfigMemory
    fpga: CompressionUnit
    boot_store: BootImageStore
    env_step_ms: int = 100
    spi_busy_ticks: int = 0

    @classmethod
    def build(cls, kernel: SimKernel, scenario: Optional[Scenario] = None) -> Hardware:
        """
        Assemble every device from a scenario; section defaults when ``scenario`` is omitted.

        All device noise and memory contents derive from the run seed.
        """
        run = scenario.run if scenario else RunConfig()
        envc = scenario.environment if scenario else EnvironmentConfig()
        sensors = scenario.sensors if scenario else SensorConfig()
        spic = scenario.spi if scenario else SpiConfig()
        telemetry = scenario.telemetry if scenario else TelemetryConfig()
        epsc = scenario.eps if scenario else EpsConfig()
        actuators = scenario.actuators if scenario else ActuatorConfig()
        compression = scenario.compression if scenario else CompressionConfig()
        faults = scenario.faults if scenario else FaultConfig()

        env = EnvironmentState(np.array(envc.omega), np.array(envc.inertia), np.array(envc.b_inertial),
                               np.array(envc.attitude), envc.temperature)
        bus = build_sensor_bus(sensors.mag_sigma, sensors.gyro_sigma, sensors.temp_sigma, run.seed)
        refresh_sensors(bus, env)

        store_words = -(-spic.out_capacity // WORD_BYTES)
        config_memory = ConfigMemory(faults.config_bits, seed=run.seed * 7 + 3)
        return cls(
            kernel=kernel,
            env=env,
            actuators=ActuatorState(actuators.dipole_per_duty),
            bus=bus,
            spi=SpiController(kernel),
            camera_flash=SpiFlashModel(CAMERA_FLASH, spic.capacity, spic.page_size, spic.burst_size,
                                       spic.read_latency, spic.write_latency, fault_flag=FLAG_SPI_IMAGE),
            image_store=SpiFlashModel(IMAGE_STORE, spic.out_capacity, spic.page_size, spic.burst_size,
                                      spic.read_latency, spic.write_latency,
                                      storage=MemoryBank(store_words, 'image-flash'), fault_flag=FLAG_SPI_OUT),
            telemetry_memory=SharedTelemetryMemory(telemetry.capacity, telemetry.slot_size, 'telemetry-flash'),
            downlink_memory=SharedTelemetryMemory(telemetry.downlink_capacity, PACKET_SIZE, 'scratch'),
            eps=EpsModel(kernel, epsc.battery_soc, epsc.discharge_rate, epsc.charge_rate,
                         epsc.hw_watchdog_timeout, epsc.bulk_record_size),
            config_memory=config_memory,
            fpga=CompressionUnit(kernel, config_memory, compression.prediction_bands,
                                 compression.weight_resolution, compression.update_scaling,
                                 RiceParams(compression.initial_k, compression.unary_limit),
                                 compression.encode_latency, compression.tmr),
            boot_store=BootImageStore(size=faults.boot_image_size, seed=run.seed * 7 + 5),
            env_step_ms=run.env_step,
        )

    # Lookups ------------------------------------------------------------------------------------

    def flash(self, name: str) -> SpiFlashModel:
        flashes = {CAMERA_FLASH: self.camera_flash, IMAGE_STORE: self.image_store}
        try:
            return flashes[name]
        except KeyError:
            raise KeyError(f'no flash named {name!r} (expected one of {", ".join(flashes)})') from None

    def i2c_device(self, name: str) -> I2cDeviceModel:
        for device in self.bus.devices.values():
            if device.name == name:
                return device
        raise KeyError(f'no I2C device named {name!r}')

    def ecc_banks(self) -> List[MemoryBank]:
        return [self.image_store.storage, self.telemetry_memory.bank]

    def upset_targets(self) -> Dict[str, UpsetTarget]:
        return {
            'image-flash': self.image_store.storage,
            'telemetry-flash': self.telemetry_memory.bank,
            'config-memory': self.config_memory,
            'boot-flash': self.boot_store,
            CAMERA_FLASH: self.camera_flash,
        }

    @property
    def bus_fault_flags(self) -> int:
        return self.bus.fault_flags | self.spi.fault_flags | (FLAG_EPS if self.eps.nack else 0)

    @property
    def uncorrectable_ecc(self) -> int:
        return sum(bank.uncorrectable for bank in self.ecc_banks())

    # Physics ------------------------------------------------------------------------------------

    def step_environment(self, dt: int) -> float:
        """Advance the body by ``dt`` ms and refresh the sensor registers; returns the magnetic work."""
        _, work = env_step(self.env, self.actuators, dt)
        refresh_sensors(self.bus, self.env)
        return work

    def preload_cube(self, cube: HyperspectralCube) -> int:
        """Ground-load a raw cube into the camera flash at offset 0; returns its size in bytes."""
        raw = cube.to_raw()
        self.camera_flash.program(0, raw)
        return len(raw)
