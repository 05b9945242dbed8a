"""
Scenario files: the simulator's only configuration source.

Grammar::

    # comment
    [section]            scalar section, e.g. [run], [eps]
    [kind NAME]          named section: mode, task, rule, fault, command
    key = value          lists are comma separated, booleans yes/no/on/off/true/false

Every key is declared by a field of one of the section dataclasses below,
together with its converter and default. Loading validates the whole file
before anything runs; errors name the offending key and line.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Type

from obc_sim.errors import ConfigurationError, ScenarioError
from obc_sim.faulttol.injector import FaultEvent
from obc_sim.flightplan import SchedulerConfig, TaskSpec
from obc_sim.fsm import Mode, ModeTable, Predicate, TransitionRule, Trigger

DEFAULT_SCENARIO = Path(__file__).parent / 'scenarios' / 'default.scn'

Overrides = Mapping[str, Mapping[str, Any]]


# Converters -------------------------------------------------------------------------------------

def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ('yes', 'on', 'true', '1'):
        return True
    if value in ('no', 'off', 'false', '0'):
        return False
    raise ValueError(f'expected yes/no, got {text!r}')


def _seconds(text: str) -> int:
    value = float(text)
    if value < 0:
        raise ValueError('time cannot be negative')
    return int(round(value * 1000))


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise ValueError('must be positive')
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError('cannot be negative')
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise ValueError('must lie in [0, 1]')
    return value


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ('', 'auto', 'none') else _non_negative(text)


def _vector(n: int) -> Callable[[str], Tuple[float, ...]]:
    def convert(text: str) -> Tuple[float, ...]:
        values = tuple(float(v) for v in text.split(','))
        if len(values) != n:
            raise ValueError(f'expected {n} comma separated numbers')
        return values
    return convert


def _names(text: str) -> Tuple[str, ...]:
    return tuple(name.strip() for name in text.split(',') if name.strip())


def _field(default: Any, convert: Callable[[str], Any], key: Optional[str] = None) -> Any:
    return field(default=default, metadata={'convert': convert, 'key': key})


# Scalar sections --------------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    duration: int = _field(600_000, _seconds)
    seed: int = _field(1, int)
    initial_mode: Mode = _field(Mode.DETUMBLE, Mode.parse)
    interrupts: bool = _field(True, _bool)
    env_step: int = _field(100, _positive)
    out: str = _field('out', str)


@dataclass(frozen=True)
class SchedulerSection:
    poll_period: int = _field(500, _positive)
    watchdog_period: int = _field(1000, _positive)
    drain_timeout: Optional[int] = _field(None, _optional_int)

    def config(self) -> SchedulerConfig:
        return SchedulerConfig(self.poll_period, self.watchdog_period, self.drain_timeout)


@dataclass(frozen=True)
class EnvironmentConfig:
    omega: Tuple[float, ...] = _field((0.0, 0.0, 0.3), _vector(3))
    inertia: Tuple[float, ...] = _field((0.05, 0.05, 0.02), _vector(3))
    b_inertial: Tuple[float, ...] = _field((45e-6, 0.0, 0.0), _vector(3))
    attitude: Tuple[float, ...] = _field((1.0, 0.0, 0.0, 0.0), _vector(4))
    temperature: float = _field(20.0, float)


@dataclass(frozen=True)
class SensorConfig:
    mag_sigma: float = _field(0.0, float)
    gyro_sigma: float = _field(2.0, float)
    temp_sigma: float = _field(1.0, float)
    smoothing: str = _field('moving_average', str)
    smoothing_window: int = _field(5, _positive)
    smoothing_alpha: float = _field(0.2, _fraction)


@dataclass(frozen=True)
class SpiConfig:
    capacity: int = _field(131072, _positive)
    out_capacity: int = _field(131072, _positive)
    page_size: int = _field(256, _positive)
    burst_size: int = _field(256, _positive)
    read_latency: int = _field(2, _non_negative)
    write_latency: int = _field(4, _non_negative)


@dataclass(frozen=True)
class TelemetryConfig:
    capacity: int = _field(512, _positive)
    slot_size: int = _field(128, _positive)
    downlink_capacity: int = _field(64, _positive)
    packets_per_activation: int = _field(16, _positive)


@dataclass(frozen=True)
class EpsConfig:
    battery_soc: float = _field(0.8, _fraction)
    discharge_rate: float = _field(1e-5, float)
    charge_rate: float = _field(3e-5, float)
    hw_watchdog_timeout: int = _field(3000, _positive)
    bulk_record_size: int = _field(64, _positive)


@dataclass(frozen=True)
class ActuatorConfig:
    dipole_per_duty: float = _field(0.2, float)


@dataclass(frozen=True)
class ControlConfig:
    bdot_gain: float = _field(1e6, float)


@dataclass(frozen=True)
class CompressionConfig:
    prediction_bands: int = _field(3, _non_negative)
    weight_resolution: int = _field(13, _positive)
    update_scaling: int = _field(6, _non_negative)
    initial_k: int = _field(3, _non_negative)
    unary_limit: int = _field(16, _positive)
    encode_latency: int = _field(50, _non_negative)
    tmr: bool = _field(False, _bool)


@dataclass(frozen=True)
class ImagingConfig:
    preload: bool = _field(False, _bool)
    cube: str = _field('gradient', str)
    width: int = _field(32, _positive)
    height: int = _field(32, _positive)
    bands: int = _field(16, _positive)
    bit_depth: int = _field(12, _positive)
    seed: int = _field(0, int)


@dataclass(frozen=True)
class FaultConfig:
    seu_rate: float = _field(0.0, float)
    step: int = _field(1000, _positive)
    scrub: bool = _field(True, _bool)
    config_bits: int = _field(65536, _positive)
    boot_image_size: int = _field(4096, _positive)
    targets: Tuple[str, ...] = _field(('image-flash', 'telemetry-flash', 'config-memory', 'boot-flash'), _names)


SCALAR_SECTIONS: Dict[str, Type] = {
    'run': RunConfig,
    'scheduler': SchedulerSection,
    'environment': EnvironmentConfig,
    'sensors': SensorConfig,
    'spi': SpiConfig,
    'telemetry': TelemetryConfig,
    'eps': EpsConfig,
    'actuators': ActuatorConfig,
    'control': ControlConfig,
    'compression': CompressionConfig,
    'imaging': ImagingConfig,
    'faults': FaultConfig,
}

NAMED_SECTIONS: Dict[str, Dict[str, Tuple[Callable[[str], Any], Any]]] = {
    'mode': {'tasks': (_names, None)},
    'task': {
        'period': (_positive, None),
        'body': (str, ''),
        'control': (_bool, False),
        'duration': (_non_negative, 0),
        'grace': (_non_negative, 0),
    },
    'rule': {
        'from': (_names, None),
        'when': (Predicate.parse, None),
        'to': (Mode.parse, None),
        'trigger': (lambda text: Trigger(text.strip().lower()), Trigger.POLLED),
        'priority': (int, 0),
        'line': (_optional_int, None),
    },
    'fault': {
        'at': (_seconds, None),
        'kind': (str, None),
        'target': (str, None),
        'bit': (_non_negative, None),
        'word': (_non_negative, None),
        'task': (str, None),
        'count': (_positive, 1),
        'line': (int, None),
        'burst': (_positive, 1),
    },
    'command': {
        'at': (_seconds, None),
        'mode': (Mode.parse, None),
    },
}


@dataclass(frozen=True)
class Command:
    name: str
    at: int
    mode: Mode


@dataclass
class Scenario:
    source: str
    run: RunConfig
    scheduler: SchedulerSection
    environment: EnvironmentConfig
    sensors: SensorConfig
    spi: SpiConfig
    telemetry: TelemetryConfig
    eps: EpsConfig
    actuators: ActuatorConfig
    control: ControlConfig
    compression: CompressionConfig
    imaging: ImagingConfig
    faults: FaultConfig
    modes: ModeTable
    tasks: Dict[str, TaskSpec]
    fault_schedule: List[FaultEvent] = field(default_factory=list)
    commands: List[Command] = field(default_factory=list)


# Parsing ----------------------------------------------------------------------------------------

_HEADER_RE = re.compile(r'^\[\s*([a-z]+)(?:\s+([A-Za-z0-9_.\-]+))?\s*\]$')


@dataclass
class _RawSection:
    kind: str
    name: Optional[str]
    line: Optional[int]
    entries: Dict[str, Tuple[str, Optional[int]]] = field(default_factory=dict)

    @property
    def title(self) -> str:
        return self.kind if self.name is None else f'{self.kind} {self.name}'

    def where(self, key: str) -> Tuple[str, Optional[int]]:
        line = self.entries[key][1] if key in self.entries else self.line
        return f'[{self.title}] {key}', line


def _parse_text(text: str) -> Dict[str, _RawSection]:
    sections: Dict[str, _RawSection] = {}
    current: Optional[_RawSection] = None

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue

        if line.startswith('['):
            match = _HEADER_RE.match(line)
            if match is None:
                raise ScenarioError(f'malformed section header {line!r}', line=number)
            current = _RawSection(match.group(1), match.group(2), number)
            if current.title in sections:
                raise ScenarioError(f'section [{current.title}] appears twice', line=number)
            sections[current.title] = current
            continue

        key, sep, value = line.partition('=')
        if not sep:
            raise ScenarioError(f'expected key = value, got {line!r}', line=number)
        if current is None:
            raise ScenarioError('key outside of any section', key=key.strip(), line=number)

        key = key.strip()
        if key in current.entries:
            raise ScenarioError('key given twice', key=f'[{current.title}] {key}', line=number)
        current.entries[key] = (value.strip(), number)

    return sections


def _apply_overrides(sections: Dict[str, _RawSection], overrides: Optional[Overrides]) -> None:
    for title, values in (overrides or {}).items():
        kind, _, name = title.partition(' ')
        section = sections.setdefault(title, _RawSection(kind, name or None, None))
        for key, value in values.items():
            section.entries[key] = (str(value), None)


def _convert(section: _RawSection, key: str, convert: Callable[[str], Any]) -> Any:
    value, line = section.entries[key]
    try:
        return convert(value)
    except (ValueError, ConfigurationError) as e:
        detail = e.detail if isinstance(e, ConfigurationError) and e.detail else str(e)
        raise ScenarioError(f'bad value {value!r}: {detail}', key=f'[{section.title}] {key}', line=line) from None


def _scalar(section: Optional[_RawSection], cls: Type) -> Any:
    if section is None:
        return cls()

    schema = {f.name: f for f in fields(cls)}
    for key in section.entries:
        if key not in schema:
            where, line = section.where(key)
            raise ScenarioError(f'unknown key (expected one of {", ".join(schema)})', key=where, line=line)
    values = {key: _convert(section, key, schema[key].metadata['convert']) for key in section.entries}
    return cls(**values)


def _named(section: _RawSection) -> Dict[str, Any]:
    schema = NAMED_SECTIONS[section.kind]
    for key in section.entries:
        if key not in schema:
            where, line = section.where(key)
            raise ScenarioError(f'unknown key (expected one of {", ".join(schema)})', key=where, line=line)

    values = {}
    for key, (convert, default) in schema.items():
        if key in section.entries:
            values[key] = _convert(section, key, convert)
        elif default is None and key in _REQUIRED[section.kind]:
            where, line = section.where(key)
            raise ScenarioError('required key missing', key=where, line=line)
        else:
            values[key] = default
    return values


_REQUIRED = {
    'mode': {'tasks'},
    'task': {'period'},
    'rule': {'from', 'when', 'to'},
    'fault': {'at', 'kind'},
    'command': {'at', 'mode'},
}


def _resolve_modes(section: _RawSection, key: str, names: Tuple[str, ...], known: Dict[Mode, Any]) -> frozenset:
    if names == ('*',):
        return frozenset(known)
    modes = set()
    for name in names:
        try:
            mode = Mode.parse(name)
        except ConfigurationError:
            where, line = section.where(key)
            raise ScenarioError(f'unknown mode {name!r}', key=where, line=line) from None
        if mode not in known:
            where, line = section.where(key)
            raise ScenarioError(f'mode {mode} has no [mode {mode}] section', key=where, line=line)
        modes.add(mode)
    return frozenset(modes)


def parse_scenario(text: str, overrides: Optional[Overrides] = None, source: str = '<string>') -> Scenario:
    """
    Parse and fully validate scenario text.

    Raises:
        ScenarioError: Naming the offending key and line.
    """
    sections = _parse_text(text)
    _apply_overrides(sections, overrides)

    scalar: Dict[str, Any] = {}
    named: Dict[str, List[_RawSection]] = {kind: [] for kind in NAMED_SECTIONS}
    for section in sections.values():
        if section.kind in SCALAR_SECTIONS and section.name is None:
            continue
        if section.kind in NAMED_SECTIONS and section.name is not None:
            named[section.kind].append(section)
            continue
        raise ScenarioError(f'unknown section [{section.title}]', line=section.line)

    for kind, cls in SCALAR_SECTIONS.items():
        scalar[kind] = _scalar(sections.get(kind), cls)

    # Tasks
    tasks: Dict[str, TaskSpec] = {}
    for section in named['task']:
        values = _named(section)
        try:
            tasks[section.name] = TaskSpec(
                section.name, values['period'], values['body'] or section.name, values['control'],
                values['duration'], values['grace'],
            )
        except ConfigurationError as e:
            where, line = section.where('duration')
            raise ScenarioError(e.detail or str(e), key=where, line=line) from None

    # Modes
    mode_tasks: Dict[Mode, List[TaskSpec]] = {}
    mode_sections: Dict[Mode, _RawSection] = {}
    for section in named['mode']:
        try:
            mode = Mode.parse(section.name)
        except ConfigurationError:
            raise ScenarioError(f'unknown mode {section.name!r}', line=section.line) from None
        values = _named(section)
        where, line = section.where('tasks')

        specs = []
        for task_name in values['tasks']:
            if task_name not in tasks:
                raise ScenarioError(f'task {task_name!r} has no [task {task_name}] section', key=where, line=line)
            specs.append(tasks[task_name])
        if len({spec.name for spec in specs}) != len(specs):
            raise ScenarioError(f'mode {mode} lists a task twice', key=where, line=line)
        controls = [spec.name for spec in specs if spec.is_control]
        if len(controls) > 1:
            raise ScenarioError(
                f'mode {mode} runs {len(controls)} control tasks ({", ".join(controls)}); at most one is allowed',
                key=where, line=line,
            )
        mode_tasks[mode] = specs
        mode_sections[mode] = section

    for required in (scalar['run'].initial_mode, Mode.RECOVERY):
        if required not in mode_tasks:
            where, line = sections['run'].where('initial_mode') if 'run' in sections else ('[run] initial_mode', None)
            raise ScenarioError(f'mode {required} needs a [mode {required}] section', key=where, line=line)

    # Rules
    rules: List[TransitionRule] = []
    priorities: Dict[Tuple[Mode, int], str] = {}
    lines: Dict[int, str] = {}
    for section in named['rule']:
        values = _named(section)
        sources = _resolve_modes(section, 'from', values['from'], mode_tasks)
        target = values['to']
        if target not in mode_tasks:
            where, line = section.where('to')
            raise ScenarioError(f'mode {target} has no [mode {target}] section', key=where, line=line)

        try:
            rule = TransitionRule(section.name, sources - {target}, values['when'], target, values['trigger'],
                                  values['priority'], values['line'])
        except ConfigurationError as e:
            where, line = section.where('to')
            raise ScenarioError(e.detail or str(e), key=where, line=line) from None

        if rule.trigger is Trigger.INTERRUPT:
            if rule.line_id in lines:
                where, line = section.where('line')
                raise ScenarioError(f'interrupt line {rule.line_id} already bound to rule {lines[rule.line_id]!r}',
                                    key=where, line=line)
            lines[rule.line_id] = rule.name
        else:
            for mode in rule.sources:
                if (mode, rule.priority) in priorities:
                    where, line = section.where('priority')
                    raise ScenarioError(
                        f'priority {rule.priority} from mode {mode} already used by rule '
                        f'{priorities[(mode, rule.priority)]!r}',
                        key=where, line=line,
                    )
                priorities[(mode, rule.priority)] = rule.name
        rules.append(rule)

    # Faults and commands
    fault_schedule = [_fault_event(section, scalar['faults']) for section in named['fault']]
    fault_schedule.sort(key=lambda ev: ev.t)

    commands = []
    for section in named['command']:
        values = _named(section)
        if values['mode'] not in mode_tasks:
            where, line = section.where('mode')
            raise ScenarioError(f'mode {values["mode"]} has no [mode] section', key=where, line=line)
        commands.append(Command(section.name, values['at'], values['mode']))
    commands.sort(key=lambda cmd: cmd.at)

    return Scenario(
        source=source,
        modes=ModeTable(mode_tasks, rules),
        tasks=tasks,
        fault_schedule=fault_schedule,
        commands=commands,
        **scalar,
    )


def _fault_event(section: _RawSection, faults: FaultConfig) -> FaultEvent:
    values = _named(section)
    kind = values['kind']
    bit = values['bit']
    if kind == 'seu':
        for key in ('target', 'bit'):
            if values[key] is None:
                where, line = section.where(key)
                raise ScenarioError('required for seu faults', key=where, line=line)
        if values['word'] is not None:
            bit = values['word'] * 72 + bit

    args = {key: values[key] for key in ('task', 'count', 'line', 'burst') if values[key] is not None}
    try:
        return FaultEvent(values['at'], kind, values['target'], bit, args)
    except ConfigurationError as e:
        where, line = section.where('kind')
        raise ScenarioError(e.detail or str(e), key=where, line=line) from None


def load_scenario(path: (str | Path) = DEFAULT_SCENARIO, overrides: Optional[Overrides] = None) -> Scenario:
    """
    Read and validate a scenario file.

    Parameters:
        path (str | Path): Scenario file; the bundled default when omitted.
        overrides (dict, optional): ``{"section": {"key": "value"}}`` applied
            before validation, e.g. ``{"run": {"seed": "7"}}`` or
            ``{"task sensor-poll": {"period": "100"}}``.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ScenarioError(f'cannot read scenario: {e.strerror}', key=str(path)) from None
    return parse_scenario(text, overrides, source=str(path))
