"""
Simulated FPGA configuration memory with golden-copy scrubbing.
"""
from __future__ import annotations

from typing import Callable, List, Optional

import numpy as np

from obc_sim.faulttol.memory import ScrubReport
from obc_sim.helpers import get_logger

log = get_logger(__name__)


class ConfigMemory:
    """
    A configuration bitstream plus the golden reference copy it is scrubbed from.

    Parameters:
        bits (int): Bitstream length.
        seed (int): Seed for the random golden bitstream.
    """

    label = 'config-memory'

    def __init__(self, bits: int, seed: int = 0):
        if bits <= 0:
            raise ValueError('configuration memory needs at least one bit')

        golden = np.random.default_rng(seed).integers(0, 2, size=bits, dtype=np.uint8)
        golden.flags.writeable = False
        self.__golden = golden
        self.bitstream = golden.copy()
        self.rewrites = 0
        self.on_rewrite: List[Callable[[], None]] = []

    @property
    def golden(self) -> np.ndarray:
        return self.__golden

    @property
    def bit_count(self) -> int:
        return len(self.bitstream)

    @property
    def megabits(self) -> float:
        return self.bit_count / 1e6

    @property
    def divergence(self) -> int:
        return int(np.count_nonzero(self.bitstream != self.__golden))

    def flip_absolute(self, position: int) -> None:
        self.bitstream[position] ^= 1


def scrub_config(cm: ConfigMemory, now: Optional[int] = None) -> ScrubReport:
    """
    Rewrite the bitstream from the golden copy.

    Nothing is written when the bitstream already matches. A rewrite resets
    whatever logic was loaded from it, so the registered ``on_rewrite``
    callbacks run afterwards.

    Returns:
        ScrubReport: ``corrected`` is the divergence found before the rewrite.
    """
    divergence = cm.divergence
    report = ScrubReport(corrected=divergence, words_scanned=cm.bit_count)
    if not divergence:
        return report

    cm.bitstream[:] = cm.golden
    cm.rewrites += 1
    log.info(f'Configuration memory rewritten at t={now}: {divergence} upset bits cleared')
    for callback in cm.on_rewrite:
        callback()
    return report
