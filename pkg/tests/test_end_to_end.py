"""
Whole-satellite runs: the default mission plus scripted fault scenarios.
"""
import math

import numpy as np
import pytest

from obc_sim.computer import OnBoardComputer
from obc_sim.faulttol.ecc import syndrome_array
from obc_sim.flightplan import ExitStatus
from obc_sim.fsm import Mode
from obc_sim.scenario import load_scenario
from obc_sim.simkernel import SimKernel

LOW_POWER = """
[mode SafeLowPower]
tasks = housekeeping

[rule low-power-interrupt]
from = *
when = battery_soc < 0.3
to = SafeLowPower
trigger = interrupt
line = 1

[rule low-power]
from = *
when = battery_soc < 0.3
to = SafeLowPower
priority = 100
"""


@pytest.fixture(scope='module')
def default_run():
    obc = OnBoardComputer(load_scenario())
    summary = obc.run()
    return obc, summary


# Default mission --------------------------------------------------------------------------------

def test_default_mission_detumbles_then_points(default_run):
    obc, summary = default_run

    previous, mode = summary.timeline[0][1:3]
    assert (previous, mode) == ('Detumble', 'SunPointing')
    assert summary.t == 600_000
    assert summary.power_cycles == 0
    assert not summary.kills
    assert [boot[1:] for boot in summary.boots] == [('primary', 'initial')]


def test_bdot_halves_the_rate_and_never_adds_energy(default_run):
    obc, _ = default_run
    env = obc.telemetry.of_type('env')

    assert env[0]['omega_mag'] == pytest.approx(0.3, abs=1e-3)
    assert min(rec['omega_mag'] for rec in env) < 0.15
    assert max(rec['work'] for rec in env) <= 1e-9
    rates = [rec['omega_mag'] for rec in env]
    assert all(later <= earlier + 1e-6 for earlier, later in zip(rates, rates[1:]))


def test_every_hardware_kick_comes_from_the_software_watchdog(default_run):
    obc, summary = default_run
    kicks = obc.telemetry.of_type('hw-kick')

    assert len(kicks) == summary.hw_kicks
    assert kicks[-1]['t'] == 600_000
    assert {rec['source'] for rec in kicks} == {'software-watchdog'}


def test_computer_runs_on_the_kernel_it_is_given(quiet_scenario):
    kernel = SimKernel()
    obc = OnBoardComputer(quiet_scenario(), kernel=kernel)

    assert obc.kernel is kernel
    obc.run(2_000)
    assert kernel.now == 2_000
    assert kernel.stats.fired > 0


# Watchdog hierarchy -----------------------------------------------------------------------------

def test_hung_task_is_killed_without_a_reboot(quiet_scenario):
    obc = OnBoardComputer(quiet_scenario(None, '[fault hang-hk]\nat = 5.5\nkind = hang\ntask = housekeeping\n'))
    summary = obc.run(15_000)

    (kill,) = obc.telemetry.of_type('kill')
    assert kill['task'] == 'housekeeping'
    assert kill['t'] == 7_000
    assert summary.power_cycles == 0
    resumed = [rec['t'] for rec in obc.telemetry.of_type('dispatch') if rec['task'] == 'housekeeping' and rec['t'] >= 7_000]
    assert resumed[:3] == [7_000, 8_000, 9_000]
    assert obc.flightplan.record('housekeeping').last_exit is ExitStatus.OK


def test_stalled_flightplan_is_power_cycled_into_recovery(quiet_scenario):
    obc = OnBoardComputer(quiet_scenario(None, '[fault freeze]\nat = 5.5\nkind = stall\n'))
    summary = obc.run(12_000)

    (cycle,) = obc.telemetry.of_type('power-cycle')
    last_kick = max(rec['t'] for rec in obc.telemetry.of_type('hw-kick') if rec['t'] < cycle['t'])
    assert last_kick == 5_000
    assert cycle['t'] == last_kick + obc.scenario.eps.hw_watchdog_timeout
    assert cycle['cause'] == 'hw-watchdog'

    boot = obc.boots[-1]
    assert (boot['t'], boot['mode'], boot['image'], boot['cause']) == (8_000, 'Recovery', 'primary', 'hw-watchdog')
    assert summary.final_mode == 'Recovery'
    assert summary.power_cycles == 1
    assert obc.ctx.self_check_passes >= 1


@pytest.mark.parametrize('fault', [
    '[fault bad-crc]\nat = 2\nkind = corrupt-boot\n',
    '[fault flip]\nat = 2\nkind = seu\ntarget = boot-flash\nbit = 100\n',
])
def test_damaged_primary_boots_the_fallback(quiet_scenario, fault):
    obc = OnBoardComputer(quiet_scenario(None, fault + '[fault reboot]\nat = 3\nkind = power-cycle\n'))
    obc.run(5_000)

    assert [(b['image'], b['mode']) for b in obc.boots] == [('primary', 'Nominal'), ('fallback', 'Recovery')]
    assert obc.boots[-1]['primary_valid'] is False
    assert obc.mode is Mode.RECOVERY


# Interrupt versus check-node latency ------------------------------------------------------------

def low_power_run(quiet_scenario, soc, interrupts):
    overrides = {
        'eps': {'battery_soc': soc, 'discharge_rate': '0.02', 'charge_rate': '0'},
        'run': {'interrupts': 'yes' if interrupts else 'no'},
    }
    obc = OnBoardComputer(quiet_scenario(overrides, LOW_POWER))
    obc.run(5_000)
    crossing = next(rec['t'] for rec in obc.telemetry.of_type('env') if rec['battery_soc'] < 0.3)
    (switch,) = obc.telemetry.of_type('mode-switch')
    return crossing, switch


@pytest.mark.parametrize('soc', ['0.305', '0.31', '0.32', '0.33', '0.34'])
def test_interrupt_switches_on_the_crossing_tick(quiet_scenario, soc):
    crossing, switch = low_power_run(quiet_scenario, soc, interrupts=True)

    assert switch['t'] == crossing
    assert switch['mode'] == 'SafeLowPower'
    assert switch['latency'] == 0
    assert switch['reason'] == 'interrupt low-power-interrupt'


@pytest.mark.parametrize('soc', ['0.305', '0.31', '0.32', '0.33', '0.34'])
def test_without_interrupts_the_next_check_node_switches(quiet_scenario, soc):
    crossing, switch = low_power_run(quiet_scenario, soc, interrupts=False)

    assert switch['reason'] == 'polled'
    assert switch['t'] % 500 == 0
    assert crossing <= switch['t'] <= crossing + 500


# Radiation --------------------------------------------------------------------------------------

def irradiated_run(quiet_scenario, scrub):
    overrides = {
        'run': {'duration': '120'},
        'faults': {'seu_rate': '20', 'targets': 'image-flash, config-memory', 'scrub': scrub},
    }
    obc = OnBoardComputer(quiet_scenario(overrides))
    obc.run()
    return obc


def uncorrectable_words(obc):
    bank = obc.hw.image_store.storage
    syndrome, overall = syndrome_array(bank.data, bank.check)
    return int(np.count_nonzero((syndrome != 0) & (overall == 0)))


def test_scrubbing_keeps_double_errors_down(quiet_scenario):
    scrubbed = irradiated_run(quiet_scenario, 'yes')
    unscrubbed = irradiated_run(quiet_scenario, 'no')

    assert scrubbed.injector.injected == unscrubbed.injector.injected
    assert uncorrectable_words(scrubbed) < uncorrectable_words(unscrubbed)
    assert scrubbed.summary().memory_scrub.corrected > 0

    passes = [rec for rec in scrubbed.telemetry.of_type('scrub') if rec['target'] == 'config']
    assert len(passes) == 13
    assert all(rec['divergence_after'] == 0 for rec in passes)
    assert all(rec['divergence_before'] > 0 for rec in passes[1:])
    assert unscrubbed.hw.config_memory.divergence > 0


def test_upset_count_is_poisson(quiet_scenario):
    obc = irradiated_run(quiet_scenario, 'yes')
    megabits = obc.hw.image_store.storage.megabits + obc.hw.config_memory.megabits
    expected = 20 * 120 * megabits

    assert abs(obc.injector.injected - expected) < 3 * math.sqrt(expected)


# Determinism ------------------------------------------------------------------------------------

def test_same_seed_gives_identical_telemetry(quiet_scenario, tmp_path):
    extra = '[fault hang-hk]\nat = 3\nkind = hang\ntask = housekeeping\n'
    overrides = {'faults': {'seu_rate': '5'}, 'sensors': {'mag_sigma': '3'}}

    paths = []
    for name in ('a', 'b'):
        obc = OnBoardComputer(quiet_scenario(overrides, extra))
        obc.run(20_000)
        paths.append(obc.telemetry.write_jsonl(tmp_path / f'{name}.jsonl'))

    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_bytes()


def test_different_seeds_diverge(quiet_scenario):
    lines = []
    for seed in ('1', '2'):
        obc = OnBoardComputer(quiet_scenario({'faults': {'seu_rate': '5'}, 'run': {'seed': seed}}))
        obc.run(10_000)
        lines.append(list(obc.telemetry.lines()))
    assert lines[0] != lines[1]
