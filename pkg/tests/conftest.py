from __future__ import annotations

from typing import List

import pytest

from obc_sim.compression.cube import synthetic_cube
from obc_sim.flightplan import ExitStatus, Flightplan, SchedulerConfig, TaskSpec
from obc_sim.fsm import HealthMetrics, Mode, ModeTable
from obc_sim.scenario import load_scenario, parse_scenario
from obc_sim.simkernel import SimKernel
from obc_sim.telemetry import TelemetryLog

QUIET_SCENARIO = """
[run]
duration = 60
seed = 1
initial_mode = Nominal

[task housekeeping]
period = 1000
duration = 50
grace = 500

[task memory-scrub]
period = 10000
duration = 50
grace = 2000

[task config-scrub]
period = 10000
duration = 20
grace = 2000

[task self-check]
period = 1000
duration = 10
grace = 500

[mode Nominal]
tasks = housekeeping, memory-scrub, config-scrub

[mode Recovery]
tasks = housekeeping, self-check
"""
"""A scenario without transition rules: the OBC stays in Nominal unless a fault intervenes."""


class StubMetrics:
    """Settable health metrics for driving the Flightplan by hand."""

    def __init__(self, **values):
        self.values = {'battery_soc': 0.8, **values}

    def set(self, **values) -> None:
        self.values.update(values)

    def __call__(self) -> HealthMetrics:
        return HealthMetrics(**self.values)


class Kicks:
    def __init__(self, kernel: SimKernel):
        self.kernel = kernel
        self.times: List[int] = []

    def __call__(self) -> None:
        self.times.append(self.kernel.now)


def ok_runner(spec, handle):
    return ExitStatus.OK


def make_flightplan(
        tasks,
        rules=(),
        modes=None,
        runner=ok_runner,
        metrics=None,
        config=None,
        kernel=None,
        kick=None,
) -> Flightplan:
    """Flightplan over ``tasks`` in Nominal (plus any extra ``modes``), stopped at t=0."""
    kernel = kernel if kernel is not None else SimKernel()
    table = {Mode.NOMINAL: list(tasks)}
    table.update(modes or {})
    return Flightplan(
        kernel,
        ModeTable(table, list(rules)),
        runner,
        metrics or StubMetrics(),
        TelemetryLog(),
        config or SchedulerConfig(),
        kick=kick,
    )


@pytest.fixture
def kernel() -> SimKernel:
    return SimKernel()


@pytest.fixture
def default_scenario():
    return load_scenario()


@pytest.fixture
def quiet_scenario():
    def build(overrides=None, extra: str = ''):
        return parse_scenario(QUIET_SCENARIO + extra, overrides)
    return build


@pytest.fixture
def small_cube():
    return synthetic_cube('band-correlated', 12, 10, 6, 12, seed=4)


@pytest.fixture
def task_spec():
    def build(name='t', period=1000, duration=10, grace=0, control=False, body=None):
        return TaskSpec(name, period, body or name, control, duration, grace)
    return build
