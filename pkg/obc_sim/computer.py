"""
The simulated on-board computer: hardware, device access, task bodies and
the Flightplan wired onto one :class:`~obc_sim.simkernel.SimKernel`.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from obc_sim.compression.cube import synthetic_cube
from obc_sim.devices import CAMERA_FLASH, Hardware
from obc_sim.devices.access import DeviceAccess
from obc_sim.devices.i2c import DeviceFault
from obc_sim.devices.monitor import ThresholdMonitor
from obc_sim.errors import BusError, ConfigurationError
from obc_sim.faulttol.boot import BootChoice, select_boot_image
from obc_sim.faulttol.injector import FaultEvent, FaultInjector, inject_faults
from obc_sim.faulttol.memory import ScrubReport
from obc_sim.flightplan import Flightplan
from obc_sim.fsm import HealthMetrics, Mode, handle_emergency_interrupt
from obc_sim.helpers import get_logger
from obc_sim.scenario import Command, Scenario, load_scenario
from obc_sim.simkernel import Event, EventKind, InterruptLine, SimKernel
from obc_sim.tasks import (
    BdotState,
    DownlinkQueue,
    ImagingSequence,
    SensorCache,
    TaskContext,
    make_runner,
    validate_bodies,
)
from obc_sim.telemetry import TelemetryLog

log = get_logger(__name__)

EPS_TARGET = 'eps'

_DEVICE_FAULTS = {
    'nack': DeviceFault.NACK,
    'stuck': DeviceFault.STUCK,
    'clear': DeviceFault.NONE,
}


@dataclass
class RunSummary:
    """Totals of one run, as printed after ``obcsim run``."""
    t: int
    seed: int
    final_mode: str
    timeline: List[Tuple[int, Optional[str], str, str]] = field(default_factory=list)
    boots: List[Tuple[int, str, str]] = field(default_factory=list)
    power_cycles: int = 0
    hw_kicks: int = 0
    kills: Dict[str, int] = field(default_factory=dict)
    overruns: Dict[str, int] = field(default_factory=dict)
    memory_scrub: ScrubReport = field(default_factory=ScrubReport)
    config_scrub: ScrubReport = field(default_factory=ScrubReport)
    upsets: int = 0
    compression_ratios: List[float] = field(default_factory=list)
    omega_mag: float = 0.0
    battery_soc: float = 0.0
    anomalies: int = 0


class OnBoardComputer:
    """
    One simulated satellite, built from a validated scenario.

    Parameters:
        scenario (Scenario): The run description.
        kernel (SimKernel, optional): Event loop to run on; a fresh one by default.

    Usage Example:
        >>> obc = OnBoardComputer(load_scenario())
        >>> obc.run(2000).final_mode
        'Detumble'
    """

    def __init__(self, scenario: Scenario, kernel: Optional[SimKernel] = None):
        self.scenario = scenario
        self.kernel = kernel if kernel is not None else SimKernel()
        self.telemetry = TelemetryLog()
        self.hw = Hardware.build(self.kernel, scenario)
        self.access = DeviceAccess(self.hw)

        run = scenario.run
        sensors = scenario.sensors
        imaging = scenario.imaging
        self.ctx = TaskContext(
            kernel=self.kernel,
            access=self.access,
            telemetry=self.telemetry,
            sensors=SensorCache(sensors.smoothing, sensors.smoothing_window, sensors.smoothing_alpha),
            bdot=BdotState(scenario.control.bdot_gain),
            imaging=ImagingSequence(self.access, self.telemetry, imaging.width, imaging.height, imaging.bands,
                                    imaging.bit_depth),
            downlink=DownlinkQueue(packets_per_activation=scenario.telemetry.packets_per_activation),
            mode=lambda: self.flightplan.current_mode,
            metrics=self.health_metrics,
            dipole_per_duty=scenario.actuators.dipole_per_duty,
            scrub_enabled=scenario.faults.scrub,
        )
        self.ctx.imaging.on_stored.append(self.ctx.downlink.queue_image)
        validate_bodies(scenario.modes.all_task_specs())

        self.flightplan = Flightplan(
            self.kernel,
            scenario.modes,
            make_runner(self.ctx),
            self.health_metrics,
            self.telemetry,
            scenario.scheduler.config(),
            kick=self.hw.eps.gpio.claim('software-watchdog'),
            on_mode_change=self._on_mode_change,
        )

        self.monitor = ThresholdMonitor(self.kernel, scenario.modes.interrupt_rules, run.interrupts)
        for rule in self.monitor.rules:
            self.kernel.register_interrupt(rule.line_id, self._on_interrupt, name=rule.name)

        targets = self.hw.upset_targets()
        unknown = [name for name in scenario.faults.targets if name not in targets]
        if unknown:
            raise ConfigurationError(f'unknown upset target(s) {", ".join(unknown)} '
                                     f'(known: {", ".join(sorted(targets))})')
        self.injector = FaultInjector(
            scenario.faults.seu_rate,
            {name: targets[name] for name in scenario.faults.targets},
            seed=run.seed * 7 + 11,
        )
        self._check_fault_schedule()
        self.rng = np.random.default_rng(run.seed * 7 + 13)

        self.hw.eps.on_power_cycle.append(self._on_power_cycle)
        self.boots: List[Dict[str, Any]] = []
        self.anomalies: Counter = Counter()
        self.__booted = False

    @classmethod
    def from_file(cls, path: (str | Path), overrides: Optional[dict] = None) -> 'OnBoardComputer':
        return cls(load_scenario(path, overrides))

    def _check_fault_schedule(self) -> None:
        """Resolve every scheduled fault's target now so a bad name fails before the run starts."""
        for event in self.scenario.fault_schedule:
            try:
                if event.kind == 'seu' and event.target not in self.injector.targets:
                    self.injector.add_target(event.target, self._upset_target(event.target))
                elif event.kind in _DEVICE_FAULTS and event.target != EPS_TARGET or event.kind == 'latchup':
                    self.hw.i2c_device(event.target)
                elif event.kind in ('spi-timeout', 'spi-bitrot'):
                    self.hw.flash(event.target or CAMERA_FLASH)
                elif event.kind == 'hang' and not (event.args.get('task') or event.target):
                    raise ConfigurationError('hang faults need a task')
                elif event.kind == 'spurious-interrupt' and event.args.get('line') is None:
                    raise ConfigurationError('spurious-interrupt faults need a line')
            except KeyError as e:
                raise ConfigurationError(f'{event.kind} fault at t={event.t}: {e.args[0]}') from None

    def _upset_target(self, name: str):
        try:
            return self.hw.upset_targets()[name]
        except KeyError:
            raise ConfigurationError(f'no upset target named {name!r}') from None

    @property
    def booted(self) -> bool:
        return self.__booted

    @property
    def mode(self) -> Optional[Mode]:
        return self.flightplan.current_mode

    # Health views -------------------------------------------------------------------------------

    def health_metrics(self) -> HealthMetrics:
        """What the OBC software knows: cached sensor values plus its own counters."""
        return HealthMetrics(
            battery_soc=self.hw.eps.battery_soc,
            omega=tuple(self.ctx.sensors.omega),
            temperatures=self.ctx.sensors.temperatures,
            uncorrectable_ecc=self.hw.uncorrectable_ecc,
            bus_fault_flags=self.hw.bus_fault_flags,
            self_check_passes=self.ctx.self_check_passes,
            pending_images=self.ctx.imaging.pending_images,
            downlink_backlog=self.ctx.downlink.backlog,
        )

    def true_metrics(self) -> HealthMetrics:
        """The physical state the hardware threshold monitor compares against."""
        return HealthMetrics(
            battery_soc=self.hw.eps.battery_soc,
            omega=tuple(self.hw.env.omega),
            temperatures=(self.hw.env.temperature,),
            uncorrectable_ecc=self.hw.uncorrectable_ecc,
            bus_fault_flags=self.hw.bus_fault_flags,
            self_check_passes=self.ctx.self_check_passes,
            pending_images=self.ctx.imaging.pending_images,
            downlink_backlog=self.ctx.downlink.backlog,
        )

    # Boot ---------------------------------------------------------------------------------------

    def boot(self) -> None:
        """First power-on: start the scheduler in the initial mode and arm every periodic activity."""
        if self.__booted:
            return

        self.__booted = True
        if self.scenario.imaging.preload:
            im = self.scenario.imaging
            cube = synthetic_cube(im.cube, im.width, im.height, im.bands, im.bit_depth, im.seed)
            size = self.hw.preload_cube(cube)
            self.ctx.imaging.queue_raw_image()
            self.telemetry.emit('preload', self.kernel.now, flash=CAMERA_FLASH, bytes=size, cube=im.cube)

        self._start_software(self.scenario.run.initial_mode, 'initial')
        self.hw.eps.arm()

        self.kernel.post(self.hw.env_step_ms, self._on_env_step)
        if self.injector.seu_rate > 0:
            self.kernel.post(self.scenario.faults.step, self._on_injection_step, EventKind.FAULT_INJECTION)
        for event in self.scenario.fault_schedule:
            self.kernel.schedule_event(event.t, Event(event.t, EventKind.FAULT_INJECTION, event, self._on_fault))
        for command in self.scenario.commands:
            self.kernel.schedule_event(command.at, Event(command.at, EventKind.TIMER, command, self._on_command))

    def _start_software(self, mode: Mode, cause: str) -> BootChoice:
        now = self.kernel.now
        store = self.hw.boot_store
        choice = select_boot_image(store)
        record = self.telemetry.emit('boot', now, image=choice, cause=cause, mode=mode,
                                     primary_valid=store.primary_valid, fallback_valid=store.fallback_valid)
        self.boots.append(record)

        self.flightplan.start(mode)
        try:
            self.ctx.sensors.update_omega(self.access.read_gyro())
        except BusError as e:
            log.warning(f'No gyro reading at boot: {e}')
        return choice

    def _on_power_cycle(self, cause: str) -> None:
        now = self.kernel.now
        log.warning(f'OBC power cycle at t={now} ({cause})')
        self.telemetry.emit('power-cycle', now, cause=cause, count=self.hw.eps.power_cycle_count,
                            previous_mode=self.flightplan.current_mode)

        self.flightplan.reset()
        self.hw.spi.abort_all('power cycle')
        self.hw.fpga.reset()
        self.hw.actuators.zero()
        self.ctx.reset()
        self._start_software(Mode.RECOVERY, cause)

    def _on_mode_change(self, previous: Optional[Mode], mode: Mode) -> None:
        self.ctx.bdot.reset()
        self.hw.actuators.zero()

    # Periodic hardware activity -----------------------------------------------------------------

    def _on_env_step(self, _ev: Event) -> None:
        dt = self.hw.env_step_ms
        work = self.hw.step_environment(dt)
        load = 1 + len(self.flightplan.running) + 0.5 * self.hw.actuators.total_duty
        soc = self.hw.eps.tick(dt, load)
        self.telemetry.emit('env', self.kernel.now, omega_mag=self.hw.env.omega_mag, work=work, battery_soc=soc)
        self.monitor.evaluate(self.true_metrics())
        self.kernel.post(dt, self._on_env_step)

    def _on_injection_step(self, _ev: Event) -> None:
        step = self.scenario.faults.step
        for event in inject_faults(self.injector, self.kernel.now, step):
            self.telemetry.emit('fault', self.kernel.now, **event.as_record())
        self.kernel.post(step, self._on_injection_step, EventKind.FAULT_INJECTION)

    def _on_interrupt(self, line: InterruptLine, payload: Any) -> None:
        now = self.kernel.now
        rule = next((r for r in self.monitor.rules if r.line_id == line.line_id), None)
        current = self.flightplan.current_mode
        if rule is None or current is None or self.flightplan.stalled:
            self.anomalies['ignored-interrupt'] += 1
            self.telemetry.emit('anomaly', now, what='interrupt ignored', line=line.line_id)
            return

        if not rule.predicate(self.true_metrics()):
            self.anomalies['spurious-interrupt'] += 1
            self.telemetry.emit('anomaly', now, what='spurious interrupt', line=line.line_id, rule=rule.name)
            log.warning(f'Spurious interrupt on line {line.line_id} at t={now}; condition {rule.predicate} not met')
            return

        target = handle_emergency_interrupt(current, line.line_id, self.scenario.modes.rules)
        self.telemetry.emit('interrupt', now, line=line.line_id, rule=rule.name, mode=current, target=target)
        if target is not None and target is not current:
            self.flightplan.request_mode_switch(target, reason=f'interrupt {rule.name}', preempt=True)

    # Scenario events ----------------------------------------------------------------------------

    def _on_command(self, ev: Event) -> None:
        command: Command = ev.payload
        now = self.kernel.now
        current = self.flightplan.current_mode
        accepted = False
        if current is not None and not current.is_emergency and not self.flightplan.switch_pending \
                and not self.flightplan.stalled:
            accepted = self.flightplan.request_mode_switch(command.mode, reason=f'command {command.name}',
                                                           preempt=command.mode.is_emergency)
        self.telemetry.emit('command', now, name=command.name, target=command.mode, mode=current, accepted=accepted)
        if not accepted:
            log.info(f'Command {command.name} to {command.mode} ignored in mode {current}')

    def _on_fault(self, ev: Event) -> None:
        event: FaultEvent = ev.payload
        now = self.kernel.now
        self.telemetry.emit('fault', now, **event.as_record())
        log.info(f'Injecting {event.kind} fault at t={now} (target {event.target})')

        kind, args = event.kind, event.args
        if kind == 'seu':
            self.injector.apply(event)
        elif kind == 'hang':
            self.flightplan.inject_hang(args.get('task') or event.target, args.get('count', 1))
        elif kind == 'stall':
            self.flightplan.stall()
        elif kind == 'power-cycle':
            self.hw.eps.power_cycle('commanded')
        elif kind in _DEVICE_FAULTS:
            if event.target == EPS_TARGET:
                self.hw.eps.nack = kind == 'nack'
            else:
                self.hw.i2c_device(event.target).fault = _DEVICE_FAULTS[kind]
        elif kind == 'latchup':
            self.hw.i2c_device(event.target).latch_up()
        elif kind == 'spi-timeout':
            self.hw.flash(event.target or CAMERA_FLASH).inject_timeout(args.get('burst', 1))
        elif kind == 'spi-bitrot':
            self.hw.flash(event.target or CAMERA_FLASH).bitrot(args.get('count', 1), self.rng)
        elif kind == 'corrupt-boot':
            self.hw.boot_store.corrupt_checksum(event.bit or 0)
        elif kind == 'spurious-interrupt':
            self.kernel.raise_interrupt(args['line'], None)
        elif kind == 'tmr-upset':
            self.hw.fpga.inject_upset(args.get('count', 1))

    # Running ------------------------------------------------------------------------------------

    def run(self, duration: Optional[int] = None) -> RunSummary:
        """
        Boot if needed and advance the simulation to ``duration`` ms.

        Returns:
            RunSummary: Totals of the run so far.
        """
        self.boot()
        end = self.scenario.run.duration if duration is None else duration
        self.kernel.advance_until(max(end, self.kernel.now))
        return self.summary()

    def write_outputs(self, out_dir: (str | Path)) -> Dict[str, Path]:
        """Write the telemetry log, the telemetry memory and the bad-word maps into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            'telemetry': self.telemetry.write_jsonl(out_dir / 'telemetry.jsonl'),
            'telemetry-memory': self.hw.telemetry_memory.dump_jsonl(out_dir / 'telemetry-memory.jsonl'),
        }
        bad_words = out_dir / 'bad-words.jsonl'
        with bad_words.open('w', encoding='utf-8', newline='\n') as f:
            for bank in self.hw.ecc_banks():
                for record in bank.bad_word_records():
                    f.write(_json_line(record))
        paths['bad-words'] = bad_words
        return paths

    def summary(self) -> RunSummary:
        done = [rec for rec in self.telemetry.of_type('imaging') if rec.get('phase') == 'done']
        return RunSummary(
            t=self.kernel.now,
            seed=self.scenario.run.seed,
            final_mode=str(self.flightplan.current_mode),
            timeline=[(rec['t'], rec['previous'], rec['mode'], rec['reason'])
                      for rec in self.telemetry.of_type('mode-switch')],
            boots=[(rec['t'], rec['image'], rec['cause']) for rec in self.boots],
            power_cycles=self.hw.eps.power_cycle_count,
            hw_kicks=self.hw.eps.kicks,
            kills=dict(self.flightplan.kills),
            overruns=dict(self.flightplan.overruns),
            memory_scrub=self.ctx.scrub_totals['memory'],
            config_scrub=self.ctx.scrub_totals['config'],
            upsets=self.injector.injected,
            compression_ratios=[rec['ratio'] for rec in done],
            omega_mag=self.hw.env.omega_mag,
            battery_soc=self.hw.eps.battery_soc,
            anomalies=self.telemetry.counts['anomaly'],
        )


def _json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(',', ':')) + '\n'
