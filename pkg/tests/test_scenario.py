import pytest

from conftest import QUIET_SCENARIO
from obc_sim.errors import ScenarioError
from obc_sim.fsm import Mode, Trigger
from obc_sim.scenario import load_scenario, parse_scenario

# First line of text appended to the quiet scenario.
EXTRA = QUIET_SCENARIO.count('\n') + 1


def fails(text, overrides=None):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text, overrides)
    return info.value


def test_default_scenario_loads(default_scenario):
    assert default_scenario.run.duration == 600_000
    assert default_scenario.run.initial_mode is Mode.DETUMBLE
    assert default_scenario.scheduler.config().drain_timeout is None
    assert default_scenario.tasks['bdot-control'].is_control
    assert len(default_scenario.tasks) == 10
    assert set(default_scenario.modes.tasks) == set(Mode)
    assert default_scenario.fault_schedule == []


def test_quiet_scenario_fills_defaults(quiet_scenario):
    scenario = quiet_scenario()
    assert scenario.run.duration == 60_000
    assert scenario.eps.hw_watchdog_timeout == 3000
    assert scenario.sensors.smoothing == 'moving_average'
    assert scenario.modes.rules == []


def test_overrides_replace_and_add_keys():
    scenario = load_scenario(overrides={
        'run': {'seed': 7},
        'task sensor-poll': {'period': '100'},
        'faults': {'scrub': 'no'},
    })

    assert scenario.run.seed == 7
    assert scenario.tasks['sensor-poll'].period == 100
    assert [s.period for s in scenario.modes.mode_tasks(Mode.DETUMBLE) if s.name == 'sensor-poll'] == [100]
    assert scenario.faults.scrub is False


def test_unknown_key_names_key_and_line():
    error = fails('\n[run]\nduration = 10\nspeed = 3\n')
    assert error.key == '[run] speed'
    assert error.line == 4


def test_bad_value_names_key_and_line():
    error = fails('[eps]\nbattery_soc = 1.5\n')
    assert (error.key, error.line) == ('[eps] battery_soc', 2)
    assert 'must lie in [0, 1]' in str(error)


def test_override_errors_carry_no_line(quiet_scenario):
    with pytest.raises(ScenarioError) as info:
        quiet_scenario({'run': {'seed': 'seven'}})
    assert info.value.key == '[run] seed'
    assert info.value.line is None


@pytest.mark.parametrize('text, line', [
    ('[run\nseed = 1\n', 1),
    ('seed = 1\n', 1),
    ('[run]\nseed 1\n', 2),
    ('[run]\nseed = 1\nseed = 2\n', 3),
    ('[run]\n[run]\n', 2),
    ('[orbit]\n', 1),
])
def test_syntax_errors(text, line):
    assert fails(text).line == line


def test_modes_need_sections():
    error = fails('[task hk]\nperiod = 1000\n\n[mode Nominal]\ntasks = hk\n\n[run]\ninitial_mode = Nominal\n')
    assert 'Recovery' in str(error)
    assert (error.key, error.line) == ('[run] initial_mode', 8)


def test_mode_cannot_list_an_unknown_task():
    error = fails(QUIET_SCENARIO + '[mode Imaging]\ntasks = housekeeping, camera\n')
    assert (error.key, error.line) == ('[mode Imaging] tasks', EXTRA + 1)


def test_mode_runs_one_control_task():
    extra = '[task a]\nperiod = 100\ncontrol = yes\n[task b]\nperiod = 100\ncontrol = on\n[mode Detumble]\ntasks = a, b\n'
    assert 'control' in str(fails(QUIET_SCENARIO + extra))


def test_task_timing_is_validated():
    error = fails(QUIET_SCENARIO + '[task late]\nperiod = 100\nduration = 100\n')
    assert (error.key, error.line) == ('[task late] duration', EXTRA + 2)


def test_wildcard_rule_excludes_its_target(quiet_scenario):
    scenario = quiet_scenario(None, '[rule fail]\nfrom = *\nwhen = battery_soc < 0.1\nto = Recovery\npriority = 1\n')
    (rule,) = scenario.modes.rules
    assert rule.sources == frozenset({Mode.NOMINAL})
    assert rule.trigger is Trigger.POLLED


def test_rule_sources_must_be_known_modes():
    error = fails(QUIET_SCENARIO + '[rule r]\nfrom = Nominal, Hibernate\nwhen = battery_soc < 0.1\nto = Recovery\n')
    assert (error.key, error.line) == ('[rule r] from', EXTRA + 1)
    error = fails(QUIET_SCENARIO + '[rule r]\nfrom = Nominal, Imaging\nwhen = battery_soc < 0.1\nto = Recovery\n')
    assert 'no [mode Imaging] section' in str(error)


def test_rule_target_needs_a_mode_section():
    error = fails(QUIET_SCENARIO + '[rule r]\nfrom = Nominal\nwhen = battery_soc < 0.1\nto = Imaging\n')
    assert error.key == '[rule r] to'


def test_rule_predicate_is_parsed():
    error = fails(QUIET_SCENARIO + '[rule r]\nfrom = Nominal\nwhen = altitude < 400\nto = Recovery\n')
    assert (error.key, error.line) == ('[rule r] when', EXTRA + 2)


def test_polled_priorities_are_unique_per_source():
    rules = ''.join(
        f'[rule {name}]\nfrom = Nominal\nwhen = battery_soc < 0.{i}\nto = Recovery\npriority = 5\n'
        for i, name in enumerate(('a', 'b'), start=1)
    )
    error = fails(QUIET_SCENARIO + rules)
    assert (error.key, error.line) == ('[rule b] priority', EXTRA + 9)


def test_interrupt_lines_bind_once():
    rules = ''.join(
        f'[rule {name}]\nfrom = Nominal\nwhen = battery_soc < 0.2\nto = Recovery\ntrigger = interrupt\nline = 4\n'
        for name in ('a', 'b')
    )
    assert fails(QUIET_SCENARIO + rules).key == '[rule b] line'


def test_interrupt_rules_target_emergency_modes():
    extra = '[rule r]\nfrom = Recovery\nwhen = battery_soc < 0.2\nto = Nominal\ntrigger = interrupt\nline = 4\n'
    assert fails(QUIET_SCENARIO + extra).key == '[rule r] to'


def test_fault_schedule(quiet_scenario):
    extra = (
        '[fault late]\nat = 9\nkind = hang\ntask = housekeeping\n'
        '[fault flip]\nat = 2.5\nkind = seu\ntarget = image-flash\nword = 3\nbit = 5\n'
    )
    flip, late = quiet_scenario(None, extra).fault_schedule

    assert (flip.t, flip.kind, flip.target, flip.bit) == (2_500, 'seu', 'image-flash', 3 * 72 + 5)
    assert flip.args == {'count': 1, 'burst': 1}
    assert (late.t, late.args['task']) == (9_000, 'housekeeping')


def test_seu_faults_need_target_and_bit():
    error = fails(QUIET_SCENARIO + '[fault f]\nat = 1\nkind = seu\ntarget = image-flash\n')
    assert (error.key, error.line) == ('[fault f] bit', EXTRA)


def test_unknown_fault_kind():
    assert fails(QUIET_SCENARIO + '[fault f]\nat = 1\nkind = meteor\n').key == '[fault f] kind'


def test_commands_are_sorted_by_time(quiet_scenario):
    extra = '[command late]\nat = 5\nmode = Recovery\n[command early]\nat = 1.5\nmode = recovery\n'
    commands = quiet_scenario(None, extra).commands
    assert [(c.name, c.at, c.mode) for c in commands] == [('early', 1_500, Mode.RECOVERY), ('late', 5_000, Mode.RECOVERY)]


def test_command_mode_needs_a_section():
    assert fails(QUIET_SCENARIO + '[command c]\nat = 1\nmode = Imaging\n').key == '[command c] mode'


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match='cannot read scenario'):
        load_scenario(tmp_path / 'absent.scn')


def test_comments_and_blank_lines_are_ignored(tmp_path):
    path = tmp_path / 'mission.scn'
    path.write_text('# mission\n' + QUIET_SCENARIO.replace('seed = 1', 'seed = 4  # reproducible'))
    scenario = load_scenario(path)
    assert scenario.run.seed == 4
    assert scenario.source == str(path)
