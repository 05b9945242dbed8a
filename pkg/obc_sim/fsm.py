"""
Satellite mode finite state machine.

Modes fall into two disjoint sets, normal and emergency. Polled transitions
are decided at the Flightplan's check node; emergency transitions can also be
driven by interrupt lines bound to rules.
"""
from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from obc_sim.errors import ConfigurationError

if TYPE_CHECKING:
    from obc_sim.flightplan import TaskSpec


class Mode(Enum):
    DETUMBLE = 'Detumble'
    SUN_POINTING = 'SunPointing'
    NOMINAL = 'Nominal'
    IMAGING = 'Imaging'
    DOWNLINK = 'Downlink'
    SAFE_LOW_POWER = 'SafeLowPower'
    EMERGENCY_DETUMBLE = 'EmergencyDetumble'
    RECOVERY = 'Recovery'

    @property
    def is_emergency(self) -> bool:
        return self in EMERGENCY_MODES

    @classmethod
    def parse(cls, name: str) -> 'Mode':
        for mode in cls:
            if mode.value.lower() == name.strip().lower():
                return mode
        raise ConfigurationError(f'unknown mode {name!r}')

    def __str__(self) -> str:
        return self.value


NORMAL_MODES: FrozenSet[Mode] = frozenset(
    {Mode.DETUMBLE, Mode.SUN_POINTING, Mode.NOMINAL, Mode.IMAGING, Mode.DOWNLINK}
)
EMERGENCY_MODES: FrozenSet[Mode] = frozenset(
    {Mode.SAFE_LOW_POWER, Mode.EMERGENCY_DETUMBLE, Mode.RECOVERY}
)


class Trigger(Enum):
    POLLED = 'polled'
    INTERRUPT = 'interrupt'


@dataclass(frozen=True)
class HealthMetrics:
    """
    Snapshot of the health parameters the mode logic is allowed to look at.

    ``omega_mag`` is derived from ``omega`` and ``battery_soc`` is clamped to
    ``[0, 1]`` on construction.
    """
    battery_soc: float
    omega: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperatures: Tuple[float, ...] = ()
    uncorrectable_ecc: int = 0
    bus_fault_flags: int = 0
    self_check_passes: int = 0
    pending_images: int = 0
    downlink_backlog: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'battery_soc', min(1.0, max(0.0, float(self.battery_soc))))
        object.__setattr__(self, 'omega', tuple(float(w) for w in self.omega))
        object.__setattr__(self, 'temperatures', tuple(float(t) for t in self.temperatures))

    @property
    def omega_mag(self) -> float:
        return float(np.linalg.norm(self.omega))

    @property
    def max_temperature(self) -> float:
        return max(self.temperatures) if self.temperatures else float('nan')

    @property
    def min_temperature(self) -> float:
        return min(self.temperatures) if self.temperatures else float('nan')

    def metric(self, name: str) -> float:
        if name not in METRIC_NAMES:
            raise ConfigurationError(f'unknown health metric {name!r}')
        return getattr(self, name)


METRIC_NAMES = frozenset({
    'battery_soc', 'omega_mag', 'max_temperature', 'min_temperature', 'uncorrectable_ecc',
    'bus_fault_flags', 'self_check_passes', 'pending_images', 'downlink_backlog',
})

_OPERATORS: Dict[str, Callable[[float, float], bool]] = {
    '<': operator.lt,
    '<=': operator.le,
    '>': operator.gt,
    '>=': operator.ge,
    '==': operator.eq,
    '!=': operator.ne,
}

_PREDICATE_RE = re.compile(r'^\s*([a-z_]+)\s*(<=|>=|==|!=|<|>)\s*([-+0-9.eE]+)\s*$')


@dataclass(frozen=True)
class Predicate:
    """A named threshold comparison over :class:`HealthMetrics`, e.g. ``battery_soc < 0.3``."""
    metric: str
    op: str
    threshold: float

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise ConfigurationError(f'unknown health metric {self.metric!r}')
        if self.op not in _OPERATORS:
            raise ConfigurationError(f'unknown comparison {self.op!r}')

    @classmethod
    def parse(cls, text: str) -> 'Predicate':
        match = _PREDICATE_RE.match(text)
        if match is None:
            raise ConfigurationError(f'cannot parse predicate {text!r}')
        metric, op, threshold = match.groups()
        try:
            return cls(metric, op, float(threshold))
        except ValueError:
            raise ConfigurationError(f'bad threshold in predicate {text!r}') from None

    def __call__(self, metrics: HealthMetrics) -> bool:
        return _OPERATORS[self.op](metrics.metric(self.metric), self.threshold)

    def __str__(self) -> str:
        return f'{self.metric} {self.op} {self.threshold:g}'


@dataclass(frozen=True)
class TransitionRule:
    name: str
    sources: FrozenSet[Mode]
    predicate: Predicate
    target: Mode
    trigger: Trigger = Trigger.POLLED
    priority: int = 0
    line_id: Optional[int] = None

    def __post_init__(self):
        if self.trigger is Trigger.INTERRUPT:
            if not self.target.is_emergency:
                raise ConfigurationError(
                    f'interrupt rule {self.name!r} must target an emergency mode, not {self.target}'
                )
            if self.line_id is None:
                raise ConfigurationError(f'interrupt rule {self.name!r} needs an interrupt line')

    def applies_to(self, mode: Mode) -> bool:
        return mode in self.sources


def evaluate_polled_transitions(
        current: Mode,
        metrics: HealthMetrics,
        table: Iterable[TransitionRule]
) -> Optional[Mode]:
    """
    Pick the target of the highest-priority polled rule that matches.

    Rules for other source modes, interrupt rules and rules targeting the
    current mode are ignored. Pure function of its inputs.

    Returns:
        Mode | None: The mode to switch to, or ``None`` to stay.
    """
    candidates = sorted(
        (rule for rule in table
         if rule.trigger is Trigger.POLLED and rule.applies_to(current) and rule.target is not current),
        key=lambda rule: -rule.priority,
    )
    for rule in candidates:
        if rule.predicate(metrics):
            return rule.target
    return None


def handle_emergency_interrupt(
        current: Mode,
        line_id: int,
        table: Iterable[TransitionRule]
) -> Optional[Mode]:
    """
    Resolve an interrupt line to the mode the satellite must be in afterwards.

    Returns:
        Mode | None: The bound rule's emergency target, ``current`` when it is
        already there or outside the rule's sources, and ``None`` when no rule
        is bound to ``line_id``.
    """
    rule = next((r for r in table if r.trigger is Trigger.INTERRUPT and r.line_id == line_id), None)
    if rule is None:
        return None
    if current is rule.target or not rule.applies_to(current):
        return current
    return rule.target


@dataclass
class ModeTable:
    """
    Static per-mode task lists plus the transition rules.

    Validated once on construction so that nothing about the table can fail
    while the simulation is running.
    """
    tasks: Dict[Mode, List['TaskSpec']]
    rules: List[TransitionRule] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for mode, specs in self.tasks.items():
            names = [spec.name for spec in specs]
            if len(set(names)) != len(names):
                raise ConfigurationError(f'mode {mode} lists a task twice')
            controls = [spec.name for spec in specs if spec.is_control]
            if len(controls) > 1:
                raise ConfigurationError(
                    f'mode {mode} runs {len(controls)} control tasks ({", ".join(controls)}); at most one is allowed'
                )

        seen: Dict[Tuple[Mode, int], str] = {}
        lines: Dict[int, str] = {}
        for rule in self.rules:
            for mode in (*rule.sources, rule.target):
                if mode not in self.tasks:
                    raise ConfigurationError(f'rule {rule.name!r} refers to mode {mode} which has no task list')

            if rule.trigger is Trigger.INTERRUPT:
                if rule.line_id in lines:
                    raise ConfigurationError(
                        f'interrupt line {rule.line_id} bound to both {lines[rule.line_id]!r} and {rule.name!r}'
                    )
                lines[rule.line_id] = rule.name
                continue

            for mode in rule.sources:
                key = (mode, rule.priority)
                if key in seen:
                    raise ConfigurationError(
                        f'rules {seen[key]!r} and {rule.name!r} share priority {rule.priority} from mode {mode}'
                    )
                seen[key] = rule.name

    def mode_tasks(self, mode: Mode) -> List['TaskSpec']:
        try:
            return list(self.tasks[mode])
        except KeyError:
            raise ConfigurationError(f'mode {mode} is not in the mode table') from None

    @property
    def interrupt_rules(self) -> List[TransitionRule]:
        return [rule for rule in self.rules if rule.trigger is Trigger.INTERRUPT]

    def all_task_specs(self) -> Sequence['TaskSpec']:
        unique = {}
        for specs in self.tasks.values():
            for spec in specs:
                unique.setdefault(spec.name, spec)
        return list(unique.values())


def mode_tasks(mode: Mode, table: ModeTable) -> List['TaskSpec']:
    """Return the static task list of ``mode``."""
    return table.mode_tasks(mode)
