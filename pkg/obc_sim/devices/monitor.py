"""
Hardware threshold monitor: the comparator logic that turns a health
threshold crossing into an interrupt, independent of the OBC software.
"""
from __future__ import annotations

from typing import Dict, List, Sequence

from obc_sim.fsm import HealthMetrics, TransitionRule
from obc_sim.helpers import get_logger
from obc_sim.simkernel import SimKernel

log = get_logger(__name__)


class ThresholdMonitor:
    """
    Raises each interrupt rule's line on a false→true edge of its predicate.

    The monitor looks at the true physical state. Lines raised during one
    evaluation are latched and delivered together, in line registration order.

    Parameters:
        kernel (SimKernel): Where the lines are raised.
        rules (list): The interrupt-triggered transition rules.
        enabled (bool): With ``False`` the monitor tracks edges but never raises.
    """

    def __init__(self, kernel: SimKernel, rules: Sequence[TransitionRule], enabled: bool = True):
        self.kernel = kernel
        self.rules = sorted(rules, key=lambda rule: rule.line_id)
        self.enabled = enabled
        self.asserted: Dict[int, bool] = {rule.line_id: False for rule in self.rules}
        self.raised = 0

    def evaluate(self, metrics: HealthMetrics) -> List[int]:
        """Returns the lines raised by this evaluation."""
        lines = []
        with self.kernel.interrupts_masked():
            for rule in self.rules:
                level = rule.predicate(metrics)
                if level and not self.asserted[rule.line_id] and self.enabled:
                    log.debug(f'{rule.name}: {rule.predicate} crossed at t={self.kernel.now}, raising line {rule.line_id}')
                    self.kernel.raise_interrupt(rule.line_id, rule)
                    self.raised += 1
                    lines.append(rule.line_id)
                self.asserted[rule.line_id] = level
        return lines
