"""
The Flightplan: topmost software layer of the on-board computer.

It owns the time-ordered task list of the current mode, spawns task
activations, tracks their metadata, switches modes from its check node and
hosts the software watchdog that alone may kick the EPS hardware watchdog.
Parent, children and the watchdog thread are all cooperative activities on
the :class:`~obc_sim.simkernel.SimKernel` event loop.
"""
from __future__ import annotations

from bisect import insort
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from itertools import count
from typing import Callable, Dict, Iterator, List, Optional, Union

from obc_sim.errors import ConfigurationError
from obc_sim.fsm import HealthMetrics, Mode, ModeTable, evaluate_polled_transitions
from obc_sim.helpers import get_logger
from obc_sim.simkernel import Event, EventKind, SimKernel, SimTime
from obc_sim.telemetry import TelemetryLog

log = get_logger(__name__)


@dataclass(frozen=True)
class TaskSpec:
    """
    Static description of a periodic task.

    Parameters:
        name (str): Unique task name, e.g. ``sensor-poll``.
        period (int): Milliseconds between activations.
        body_id (str): Key of the task body in the task registry.
        is_control (bool): Whether this is the mode's control algorithm.
        nominal_duration (int): Simulated run time of one activation in ms.
        watchdog_grace (int): Extra ms the watchdog tolerates past the period.
    """
    name: str
    period: int
    body_id: str
    is_control: bool = False
    nominal_duration: int = 0
    watchdog_grace: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigurationError(f'task {self.name!r}: period must be positive')
        if not 0 <= self.nominal_duration < self.period:
            raise ConfigurationError(f'task {self.name!r}: duration must be shorter than the period')
        if self.watchdog_grace < 0:
            raise ConfigurationError(f'task {self.name!r}: watchdog grace cannot be negative')


class ExitStatus(Enum):
    OK = 'ok'
    FAILED = 'failed'
    KILLED = 'killed'


class DispatchResult(Enum):
    SPAWNED = 'spawned'
    DEFERRED = 'deferred'
    IDLE = 'idle'
    CHECKED = 'checked'


@dataclass(eq=False)
class Activation:
    """A running instance of a task; ``handle`` plays the role of a PID."""
    handle: int
    task: str
    started_at: SimTime
    hung: bool = False
    completion_event: Optional[int] = None
    cleanups: List[Callable[[], None]] = field(default_factory=list, repr=False)


@dataclass(eq=False)
class TaskRecord:
    spec: TaskSpec
    next_exec: SimTime
    instance: Optional[Activation] = None
    run_count: int = 0
    last_exit: Optional[ExitStatus] = None
    last_checkin: SimTime = 0
    overruns: int = 0
    seq: int = -1

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass(eq=False)
class CheckNode:
    next_exec: SimTime
    poll_period: int
    seq: int = -1


ScheduleNode = Union[TaskRecord, CheckNode]


class ScheduleList:
    """Task records plus exactly one check node, kept sorted by ``(next_exec, seq)``."""

    def __init__(self):
        self._nodes: List[ScheduleNode] = []
        self._seq = count()
        self._check: Optional[CheckNode] = None

    def insert(self, node: ScheduleNode) -> None:
        if isinstance(node, CheckNode):
            if self._check is not None and self._check is not node:
                raise ConfigurationError('a schedule holds exactly one check node')
            self._check = node
        node.seq = next(self._seq)
        insort(self._nodes, node, key=lambda n: (n.next_exec, n.seq))

    def front(self) -> Optional[ScheduleNode]:
        return self._nodes[0] if self._nodes else None

    def pop_front(self) -> ScheduleNode:
        return self._nodes.pop(0)

    def remove(self, node: ScheduleNode) -> bool:
        for i, other in enumerate(self._nodes):
            if other is node:
                del self._nodes[i]
                return True
        return False

    @property
    def check_node(self) -> Optional[CheckNode]:
        return self._check

    def records(self) -> List[TaskRecord]:
        return [node for node in self._nodes if isinstance(node, TaskRecord)]

    def nodes(self) -> List[ScheduleNode]:
        return list(self._nodes)

    def __iter__(self) -> Iterator[ScheduleNode]:
        return iter(list(self._nodes))

    def __len__(self) -> int:
        return len(self._nodes)


@dataclass
class LedgerEntry:
    required_checkin_period: int
    grace: int
    last_checkin: SimTime


@dataclass
class WatchdogLedger:
    entries: Dict[str, LedgerEntry] = field(default_factory=dict)
    hw_kick_period: int = 1000
    last_hw_kick: Optional[SimTime] = None


@dataclass(frozen=True)
class WatchdogAction:
    kind: str
    task: Optional[str] = None
    handle: Optional[int] = None


@dataclass(frozen=True)
class SchedulerConfig:
    poll_period: int = 500
    watchdog_period: int = 1000
    drain_timeout: Optional[int] = None

    def __post_init__(self):
        if self.poll_period <= 0 or self.watchdog_period <= 0:
            raise ConfigurationError('poll and watchdog periods must be positive')


@dataclass
class PendingSwitch:
    target: Mode
    requested_at: SimTime
    reason: str
    timeout_event: Optional[int] = None


class TaskHandle:
    """What a task body gets to see of the scheduler: its activation and a way to finish."""

    def __init__(self, flightplan: 'Flightplan', activation: Activation):
        self._flightplan = flightplan
        self.activation = activation

    @property
    def now(self) -> SimTime:
        return self._flightplan.kernel.now

    @property
    def alive(self) -> bool:
        return self._flightplan.is_live(self.activation.handle)

    def add_cleanup(self, callback: Callable[[], None]) -> None:
        """Run ``callback`` if the activation is terminated before it finishes."""
        self.activation.cleanups.append(callback)

    def finish(self, exit_status: ExitStatus = ExitStatus.OK) -> None:
        """Signal completion of an asynchronous body."""
        if self.alive and self.activation.completion_event is None:
            self._flightplan.schedule_completion(self.activation, exit_status, self.now)


TaskRunner = Callable[[TaskSpec, TaskHandle], Optional[ExitStatus]]
"""Runs a task body; returns an exit status, or ``None`` if the body finishes asynchronously."""


class Flightplan:
    """
    Polymorphic scheduler: one instance, reloaded with a new task list on every mode switch.

    Parameters:
        kernel (SimKernel): The event loop everything runs on.
        modes (ModeTable): Validated per-mode task lists and transition rules.
        runner (TaskRunner): Executes task bodies.
        metrics (callable): Reads :class:`HealthMetrics` from the devices.
        telemetry (TelemetryLog): Sink for scheduler records.
        config (SchedulerConfig, optional): Poll, watchdog and drain settings.
        kick (callable, optional): The hardware watchdog kick; only the
            software watchdog scan ever calls it.
        on_mode_change (callable, optional): Called with ``(old, new)`` after a switch.
    """

    def __init__(
            self,
            kernel: SimKernel,
            modes: ModeTable,
            runner: TaskRunner,
            metrics: Callable[[], HealthMetrics],
            telemetry: TelemetryLog,
            config: Optional[SchedulerConfig] = None,
            kick: Optional[Callable[[], None]] = None,
            on_mode_change: Optional[Callable[[Optional[Mode], Mode], None]] = None,
    ):
        self.kernel = kernel
        self.modes = modes
        self.config = config or SchedulerConfig()
        self.telemetry = telemetry
        self._runner = runner
        self._metrics = metrics
        self._kick = kick
        self._on_mode_change = on_mode_change

        self.__current_mode: Optional[Mode] = None
        self.schedule = ScheduleList()
        self.ledger = WatchdogLedger(hw_kick_period=self.config.watchdog_period)
        self._records: Dict[str, TaskRecord] = {}
        self._live: Dict[int, Activation] = {}
        self._handles = count(1)
        self._pending: Optional[PendingSwitch] = None
        self._hangs: Counter = Counter()
        self._dispatch_event: Optional[int] = None
        self._dispatch_at: Optional[SimTime] = None
        self._watchdog_event: Optional[int] = None
        self.__stalled = False

        self.spawned: Counter = Counter()
        self.overruns: Counter = Counter()
        self.kills: Counter = Counter()
        self.switch_latencies: List[int] = []

    @property
    def current_mode(self) -> Optional[Mode]:
        return self.__current_mode

    @property
    def stalled(self) -> bool:
        return self.__stalled

    @property
    def switch_pending(self) -> bool:
        return self._pending is not None

    @property
    def running(self) -> Dict[int, Activation]:
        return dict(self._live)

    def is_live(self, handle: int) -> bool:
        return handle in self._live

    def record(self, name: str) -> Optional[TaskRecord]:
        return self._records.get(name)

    # Lifecycle ----------------------------------------------------------------------------------

    def start(self, mode: Mode) -> None:
        """Load ``mode``'s schedule and start the dispatcher and the software watchdog."""
        self._install(mode, self.build_schedule(mode))
        self.__current_mode = mode
        self._arm_dispatch()
        self._arm_watchdog()
        if self._on_mode_change is not None:
            self._on_mode_change(None, mode)

    def reset(self) -> None:
        """Destroy every activation and stop all scheduler activity (power cycle)."""
        for event_id in (self._dispatch_event, self._watchdog_event):
            self.kernel.cancel(event_id)
        if self._pending is not None:
            self.kernel.cancel(self._pending.timeout_event)

        for activation in list(self._live.values()):
            self.kernel.cancel(activation.completion_event)
            self._run_cleanups(activation)

        self._live.clear()
        self._records.clear()
        self._pending = None
        self._hangs.clear()
        self._dispatch_event = self._dispatch_at = self._watchdog_event = None
        self.schedule = ScheduleList()
        self.__current_mode = None
        self.__stalled = False

    def stall(self) -> None:
        """Freeze the whole Flightplan process until the next reset."""
        self.__stalled = True
        log.warning(f'Flightplan stalled at t={self.kernel.now}')

    def inject_hang(self, task: str, activations: int = 1) -> None:
        """Make the next ``activations`` spawns of ``task`` hang without checking in."""
        self._hangs[task] += activations

    # Schedule -----------------------------------------------------------------------------------

    def build_schedule(self, mode: Mode) -> ScheduleList:
        now = self.kernel.now
        schedule = ScheduleList()
        for spec in self.modes.mode_tasks(mode):
            schedule.insert(TaskRecord(spec, next_exec=now, last_checkin=now))
        schedule.insert(CheckNode(now + self.config.poll_period, self.config.poll_period))
        return schedule

    def _install(self, mode: Mode, schedule: ScheduleList) -> None:
        self.schedule = schedule
        self._records = {record.name: record for record in schedule.records()}
        self.ledger = WatchdogLedger(
            entries={
                record.name: LedgerEntry(record.spec.period, record.spec.watchdog_grace, record.last_checkin)
                for record in schedule.records()
            },
            hw_kick_period=self.config.watchdog_period,
            last_hw_kick=self.ledger.last_hw_kick,
        )

    def _arm_dispatch(self) -> None:
        front = self.schedule.front()
        if front is None:
            return

        at = max(front.next_exec, self.kernel.now)
        if self._dispatch_event is not None:
            if self._dispatch_at == at:
                return
            self.kernel.cancel(self._dispatch_event)

        self._dispatch_at = at
        self._dispatch_event = self.kernel.schedule_event(at, Event(at, EventKind.TIMER, handler=self._on_dispatch))

    def _on_dispatch(self, _ev: Event) -> None:
        self._dispatch_event = self._dispatch_at = None
        if self.__stalled:
            return

        now = self.kernel.now
        while True:
            front = self.schedule.front()
            if front is None or front.next_exec > now or self.__stalled:
                break
            self.dispatch_front(now)
        self._arm_dispatch()

    def dispatch_front(self, now: SimTime) -> DispatchResult:
        """
        Handle the node at the front of the schedule if it is due.

        A due task is spawned when no instance of it is running, otherwise
        its activation is skipped and counted as an overrun. Either way it
        goes back into the list one period later. A due check node runs the
        polled mode-transition evaluation.
        """
        node = self.schedule.front()
        if node is None or node.next_exec > now:
            return DispatchResult.IDLE

        self.schedule.pop_front()
        if isinstance(node, CheckNode):
            self.evaluate_check_node(now, node)
            return DispatchResult.CHECKED

        record = node
        record.next_exec += record.spec.period
        self.schedule.insert(record)

        if self._pending is not None:
            return DispatchResult.IDLE

        if record.instance is not None:
            record.overruns += 1
            self.overruns[record.name] += 1
            self.telemetry.emit('overrun', now, task=record.name, handle=record.instance.handle,
                                overruns=record.overruns)
            log.warning(f'{record.name} still running at t={now}; activation skipped')
            return DispatchResult.DEFERRED

        self._spawn(record, now)
        return DispatchResult.SPAWNED

    # Activations --------------------------------------------------------------------------------

    def _spawn(self, record: TaskRecord, now: SimTime) -> None:
        activation = Activation(next(self._handles), record.name, now)
        record.instance = activation
        self._live[activation.handle] = activation
        self.spawned[record.name] += 1
        self.telemetry.emit('dispatch', now, task=record.name, handle=activation.handle, mode=self.current_mode)

        if self._hangs[record.name] > 0:
            self._hangs[record.name] -= 1
            activation.hung = True
            log.debug(f'{record.name} (handle {activation.handle}) hangs at t={now}')
            return

        self.kernel.schedule_event(now, Event(
            now, EventKind.SIGNAL, payload=(record.name, activation.handle), handler=self._on_checkin,
        ))

        try:
            outcome = self._runner(record.spec, TaskHandle(self, activation))
        except Exception as e:
            log.exception(f'{record.name} body raised: {e}')
            outcome = ExitStatus.FAILED

        if outcome is not None and activation.completion_event is None:
            self.schedule_completion(activation, outcome, now + record.spec.nominal_duration)

    def schedule_completion(self, activation: Activation, exit_status: ExitStatus, at: SimTime) -> None:
        activation.completion_event = self.kernel.schedule_event(at, Event(
            at, EventKind.SIGNAL, payload=(activation.handle, exit_status), handler=self._on_completion_event,
        ))

    def _on_checkin(self, ev: Event) -> None:
        name, handle = ev.payload
        if self.__stalled or handle not in self._live:
            return

        now = self.kernel.now
        entry = self.ledger.entries.get(name)
        record = self._records.get(name)
        if entry is not None:
            entry.last_checkin = now
        if record is not None:
            record.last_checkin = now

    def _on_completion_event(self, ev: Event) -> None:
        if self.__stalled:
            return
        handle, exit_status = ev.payload
        self.on_completion(handle, exit_status)

    def on_completion(self, handle: int, exit_status: ExitStatus) -> None:
        """
        Child-exit notification: update the metadata of the finished activation.

        Does no waiting and touches nothing but metadata; a stale or unknown
        handle is logged as an anomaly.
        """
        now = self.kernel.now
        activation = self._live.pop(handle, None)
        if activation is None:
            self.telemetry.emit('anomaly', now, what='completion for unknown handle', handle=handle)
            log.warning(f'Completion for unknown handle {handle} at t={now}')
            return

        record = self._records.get(activation.task)
        if record is not None and record.instance is activation:
            record.instance = None
            record.run_count += 1
            record.last_exit = exit_status

        self.telemetry.emit('completion', now, task=activation.task, handle=handle, exit=exit_status,
                            runtime=now - activation.started_at)
        self._post_finalize_if_drained()

    def terminate(self, handle: int, reason: str) -> bool:
        """Deliver a termination directive to a running activation."""
        now = self.kernel.now
        activation = self._live.pop(handle, None)
        if activation is None:
            return False

        self.kernel.cancel(activation.completion_event)
        self._run_cleanups(activation)

        record = self._records.get(activation.task)
        if record is not None and record.instance is activation:
            record.instance = None
            record.last_exit = ExitStatus.KILLED

        self.kills[activation.task] += 1
        self.telemetry.emit('kill', now, task=activation.task, handle=handle, reason=reason,
                            runtime=now - activation.started_at)
        log.warning(f'Terminated {activation.task} (handle {handle}) at t={now}: {reason}')
        self._post_finalize_if_drained()
        return True

    @staticmethod
    def _run_cleanups(activation: Activation) -> None:
        for callback in activation.cleanups:
            try:
                callback()
            except Exception as e:
                log.exception(f'cleanup for {activation.task} failed: {e}')
        activation.cleanups.clear()

    # Mode switching -----------------------------------------------------------------------------

    def evaluate_check_node(self, now: SimTime, node: Optional[CheckNode] = None) -> Optional[Mode]:
        """
        Poll health metrics and decide whether to switch modes.

        The check node always goes back into the list ``poll_period`` later.
        Nothing is evaluated while a switch is already in progress.
        """
        node = node or self.schedule.check_node
        if node is not None:
            self.schedule.remove(node)
            node.next_exec = now + node.poll_period
            self.schedule.insert(node)

        if self._pending is not None:
            return None

        metrics = self._metrics()
        target = evaluate_polled_transitions(self.current_mode, metrics, self.modes.rules)
        self.telemetry.emit('check', now, mode=self.current_mode, battery_soc=metrics.battery_soc,
                            omega_mag=metrics.omega_mag, decision=target)
        if target is not None:
            self.request_mode_switch(target, reason='polled', preempt=target.is_emergency)
        return target

    def request_mode_switch(self, target: Mode, reason: str = 'requested', preempt: bool = False) -> bool:
        """
        Switch to ``target`` once no activation is running.

        New activations stop immediately. With ``preempt`` (emergency targets)
        running activations are terminated and the switch completes on the
        same tick; otherwise they drain, bounded by the drain timeout.

        Returns:
            bool: ``False`` if the request was ignored.
        """
        now = self.kernel.now
        if target is self.current_mode:
            return False

        if self._pending is not None:
            if not preempt or self._pending.target.is_emergency:
                return False
            self.kernel.cancel(self._pending.timeout_event)
            self._pending = None

        self.telemetry.emit('mode-switch-request', now, current=self.current_mode, target=target,
                            reason=reason, running=len(self._live))

        if preempt:
            for handle in list(self._live):
                self.terminate(handle, reason=f'preempted by switch to {target}')
            self._complete_switch(target, now, reason)
            return True

        self._pending = PendingSwitch(target, now, reason)
        if not self._live:
            self._complete_switch(target, now, reason)
            return True

        timeout = self.drain_timeout()
        pending = self._pending
        pending.timeout_event = self.kernel.schedule_event(now + timeout, Event(
            now + timeout, EventKind.TIMER, payload=pending, handler=self._on_drain_timeout,
        ))
        return True

    def drain_timeout(self) -> int:
        if self.config.drain_timeout is not None:
            return self.config.drain_timeout
        durations = [record.spec.nominal_duration for record in self._records.values()]
        return max(1, 2 * max(durations, default=0))

    def _on_drain_timeout(self, ev: Event) -> None:
        pending = ev.payload
        if self.__stalled or self._pending is not pending:
            return

        pending.timeout_event = None
        for handle in list(self._live):
            self.terminate(handle, reason='drain timeout')
        self._complete_switch(pending.target, pending.requested_at, pending.reason)

    def _post_finalize_if_drained(self) -> None:
        pending = self._pending
        if pending is None or self._live:
            return
        self.kernel.schedule_event(self.kernel.now, Event(
            self.kernel.now, EventKind.SIGNAL, payload=pending, handler=self._on_finalize,
        ))

    def _on_finalize(self, ev: Event) -> None:
        pending = ev.payload
        if self.__stalled or self._pending is not pending or self._live:
            return
        self._complete_switch(pending.target, pending.requested_at, pending.reason)

    def _complete_switch(self, target: Mode, requested_at: SimTime, reason: str) -> None:
        now = self.kernel.now
        if self._pending is not None:
            self.kernel.cancel(self._pending.timeout_event)
            self._pending = None

        previous = self.current_mode
        self._install(target, self.build_schedule(target))
        self.__current_mode = target
        latency = now - requested_at
        self.switch_latencies.append(latency)

        self.telemetry.emit('mode-switch', now, previous=previous, mode=target, reason=reason,
                            requested_at=requested_at, latency=latency)
        log.info(f'Mode {previous} -> {target} at t={now} ({reason}, latency {latency} ms)')

        if self._on_mode_change is not None:
            self._on_mode_change(previous, target)

        if self._dispatch_event is not None:
            self.kernel.cancel(self._dispatch_event)
            self._dispatch_event = self._dispatch_at = None
        self._arm_dispatch()

    # Software watchdog --------------------------------------------------------------------------

    def _arm_watchdog(self) -> None:
        self._watchdog_event = self.kernel.post(self.config.watchdog_period, self._on_watchdog)

    def _on_watchdog(self, _ev: Event) -> None:
        self._watchdog_event = None
        if not self.__stalled:
            self.software_watchdog_scan(self.kernel.now)
        self._arm_watchdog()

    def software_watchdog_scan(self, now: SimTime) -> List[WatchdogAction]:
        """
        Terminate running tasks that missed their checkin, otherwise kick the hardware watchdog.

        A task is overdue when ``now - last_checkin`` exceeds its required
        checkin period plus grace while an instance of it is running.
        """
        actions = []
        for name, entry in self.ledger.entries.items():
            record = self._records.get(name)
            if record is None or record.instance is None:
                continue
            if now - entry.last_checkin > entry.required_checkin_period + entry.grace:
                actions.append(WatchdogAction('terminate', name, record.instance.handle))

        for action in actions:
            self.terminate(action.handle, reason='missed watchdog checkin')

        if not actions and self._kick is not None:
            self._kick()
            self.ledger.last_hw_kick = now
            self.telemetry.emit('hw-kick', now, source='software-watchdog')
            actions.append(WatchdogAction('kick'))

        return actions
