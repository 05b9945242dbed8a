"""
OBCSim: a deterministic discrete-event simulator of a nanosatellite on-board computer.

Usage Example:
    >>> from obc_sim import OnBoardComputer, load_scenario
    >>> summary = OnBoardComputer(load_scenario()).run(1000)
    >>> summary.t
    1000
"""
from obc_sim.__about__ import __AUTHOR__, __PROG__, __VERSION__
from obc_sim.computer import OnBoardComputer, RunSummary
from obc_sim.scenario import DEFAULT_SCENARIO, Scenario, load_scenario, parse_scenario

__all__ = [
    '__AUTHOR__',
    '__PROG__',
    '__VERSION__',
    'OnBoardComputer',
    'RunSummary',
    'DEFAULT_SCENARIO',
    'Scenario',
    'load_scenario',
    'parse_scenario',
]
