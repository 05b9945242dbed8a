"""
(72,64) extended Hamming code: single error correction, double error detection.

Codeword layout: Hamming positions 1..71, parity bits at the power-of-two
positions 1, 2, 4, ..., 64 and the 64 data bits at the remaining positions in
ascending order. The 8 check bits are stored as one byte: bit 0 is the overall
parity over all 72 bits, bits 1..7 the Hamming parities of positions 1..64.

Flip indices used throughout the package: 0..63 address data bits, 64..71
address check bits (``index - 64``).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Tuple

import numpy as np

DATA_BITS = 64
CHECK_BITS = 8
CODE_BITS = DATA_BITS + CHECK_BITS
DATA_MASK = (1 << DATA_BITS) - 1


def compute_syndrome_positions(n: int = CODE_BITS - 1) -> Tuple[int, ...]:
    positions = []
    p = 1
    while p <= n:
        positions.append(p)
        p <<= 1
    return tuple(positions)


def compute_data_positions(n: int = CODE_BITS - 1) -> Tuple[int, ...]:
    parity = set(compute_syndrome_positions(n))
    return tuple(p for p in range(1, n + 1) if p not in parity)


SYNDROME_POSITIONS = compute_syndrome_positions()
DATA_POSITIONS = compute_data_positions()
_POSITION_TO_DATA_BIT = {pos: bit for bit, pos in enumerate(DATA_POSITIONS)}
_POSITION_TO_CHECK_BIT = {pos: j + 1 for j, pos in enumerate(SYNDROME_POSITIONS)}

assert len(DATA_POSITIONS) == DATA_BITS

# XOR of Hamming positions of the set data bits, one table per data byte.
_BYTE_SYNDROME = np.zeros((8, 256), dtype=np.uint8)
for _byte in range(8):
    for _value in range(256):
        _acc = 0
        for _bit in range(8):
            if _value >> _bit & 1:
                _acc ^= DATA_POSITIONS[8 * _byte + _bit]
        _BYTE_SYNDROME[_byte, _value] = _acc

_BYTE_PARITY = np.array([bin(v).count('1') & 1 for v in range(256)], dtype=np.uint8)
_SYNDROME_TABLE = [[int(v) for v in row] for row in _BYTE_SYNDROME]


class DecodeStatus(Enum):
    CLEAN = 'clean'
    CORRECTED = 'corrected'
    UNCORRECTABLE = 'uncorrectable'


@dataclass(frozen=True)
class CodeWord:
    data: int
    check: int

    def flip(self, index: int) -> 'CodeWord':
        """Return a copy with flip index ``index`` (0..71) inverted."""
        if not 0 <= index < CODE_BITS:
            raise ValueError(f'bit index {index} outside 0..{CODE_BITS - 1}')
        if index < DATA_BITS:
            return CodeWord(self.data ^ (1 << index), self.check)
        return CodeWord(self.data, self.check ^ (1 << (index - DATA_BITS)))


class DecodeResult(NamedTuple):
    data: int
    status: DecodeStatus
    bit: Optional[int] = None


def _hamming(data: int) -> int:
    syndrome = 0
    for byte in range(8):
        syndrome ^= _SYNDROME_TABLE[byte][(data >> (8 * byte)) & 0xFF]
    return syndrome


def ecc_encode(data: int) -> CodeWord:
    """
    Encode a 64-bit word.

    Usage Example:
        >>> ecc_encode(0)
        CodeWord(data=0, check=0)
    """
    data &= DATA_MASK
    hamming = _hamming(data)
    overall = (data.bit_count() + hamming.bit_count()) & 1
    return CodeWord(data, (hamming << 1) | overall)


def ecc_decode(cw: CodeWord) -> DecodeResult:
    """
    Decode a codeword, correcting one flipped bit.

    Returns:
        DecodeResult: The data word and status. ``bit`` is the flip index that
        was corrected. Uncorrectable words come back with their data as stored.
    """
    data = cw.data & DATA_MASK
    check = cw.check & 0xFF
    syndrome = _hamming(data) ^ (check >> 1)
    overall = (data.bit_count() + check.bit_count()) & 1

    if not overall:
        if syndrome == 0:
            return DecodeResult(data, DecodeStatus.CLEAN)
        return DecodeResult(data, DecodeStatus.UNCORRECTABLE)

    if syndrome == 0:
        return DecodeResult(data, DecodeStatus.CORRECTED, DATA_BITS)
    if syndrome in _POSITION_TO_CHECK_BIT:
        return DecodeResult(data, DecodeStatus.CORRECTED, DATA_BITS + _POSITION_TO_CHECK_BIT[syndrome])
    if syndrome in _POSITION_TO_DATA_BIT:
        bit = _POSITION_TO_DATA_BIT[syndrome]
        return DecodeResult(data ^ (1 << bit), DecodeStatus.CORRECTED, bit)

    # Odd overall parity pointing outside the codeword: three or more flips.
    return DecodeResult(data, DecodeStatus.UNCORRECTABLE)


# Vectorized forms over whole banks -------------------------------------------------------------

def _byte_lanes(data: np.ndarray) -> np.ndarray:
    return data.astype('<u8').view(np.uint8).reshape(-1, 8)


def encode_array(data: np.ndarray) -> np.ndarray:
    """Check bytes for an array of uint64 data words."""
    lanes = _byte_lanes(np.asarray(data, dtype=np.uint64))
    hamming = np.zeros(len(lanes), dtype=np.uint8)
    parity = np.zeros(len(lanes), dtype=np.uint8)
    for byte in range(8):
        hamming ^= _BYTE_SYNDROME[byte][lanes[:, byte]]
        parity ^= _BYTE_PARITY[lanes[:, byte]]
    parity ^= _BYTE_PARITY[hamming]
    return ((hamming << 1) | parity).astype(np.uint8)


def syndrome_array(data: np.ndarray, check: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Hamming syndrome and overall parity for every word of a bank.

    Returns:
        tuple: ``(syndrome, overall)`` uint8 arrays; both zero for clean words.
    """
    lanes = _byte_lanes(np.asarray(data, dtype=np.uint64))
    check = np.asarray(check, dtype=np.uint8)
    syndrome = (check >> 1).astype(np.uint8)
    overall = _BYTE_PARITY[check].copy()
    for byte in range(8):
        syndrome ^= _BYTE_SYNDROME[byte][lanes[:, byte]]
        overall ^= _BYTE_PARITY[lanes[:, byte]]
    return syndrome, overall
