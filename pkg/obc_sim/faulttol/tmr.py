"""
Triple modular redundancy voter.
"""
from __future__ import annotations

from enum import Enum
from typing import Callable, NamedTuple, Optional


class Disagreement(Enum):
    NONE = 'none'
    ONE_DISSENTER = 'one-dissenter'
    SPLIT = 'split'


class Vote(NamedTuple):
    value: int
    disagreement: Disagreement
    dissenter: Optional[int] = None  # 1-based


def tmr_vote(a: int, b: int, c: int) -> Vote:
    """
    Bitwise majority of three equal-width words.

    Usage Example:
        >>> tmr_vote(5, 5, 7)
        Vote(value=5, disagreement=<Disagreement.ONE_DISSENTER: 'one-dissenter'>, dissenter=3)
    """
    value = (a & b) | (a & c) | (b & c)
    if a == b == c:
        return Vote(value, Disagreement.NONE)
    if a == b:
        return Vote(value, Disagreement.ONE_DISSENTER, 3)
    if a == c:
        return Vote(value, Disagreement.ONE_DISSENTER, 2)
    if b == c:
        return Vote(value, Disagreement.ONE_DISSENTER, 1)
    return Vote(value, Disagreement.SPLIT)


def tmr_compute(compute: Callable[[], int], upset: Optional[Callable[[int, int], int]] = None) -> Vote:
    """
    Evaluate ``compute`` three times and vote.

    Parameters:
        compute (callable): The replicated computation.
        upset (callable, optional): ``upset(replica, value)`` may corrupt a
            replica's output before voting.
    """
    outputs = []
    for replica in range(3):
        value = compute()
        if upset is not None:
            value = upset(replica, value)
        outputs.append(value)
    return tmr_vote(*outputs)
