"""
Residual mapping and the adaptive Golomb-Rice entropy coder.
"""
from __future__ import annotations

from dataclasses import dataclass

from obc_sim.errors import CompressionError, StreamError


def map_residual(predicted: int, actual: int, bit_depth: int) -> int:
    """
    Fold a signed residual onto the non-negative integers.

    ``0 → 0``, ``+r → 2r − 1``, ``−r → 2r``.

    Usage Example:
        >>> [map_residual(10, a, 8) for a in (10, 11, 9)]
        [0, 1, 2]
    """
    limit = 1 << bit_depth
    if not (0 <= predicted < limit and 0 <= actual < limit):
        raise CompressionError(f'sample or prediction outside the {bit_depth}-bit range')
    residual = actual - predicted
    return 2 * residual - 1 if residual > 0 else -2 * residual


def unmap_residual(index: int) -> int:
    return (index + 1) // 2 if index & 1 else -(index // 2)


class BitWriter:
    """MSB-first bit packer."""

    def __init__(self):
        self._buffer = bytearray()
        self._acc = 0
        self._pending = 0
        self.bits = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits <= 0:
            return
        self._acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        self._pending += nbits
        self.bits += nbits
        while self._pending >= 8:
            self._pending -= 8
            self._buffer.append((self._acc >> self._pending) & 0xFF)
        self._acc &= (1 << self._pending) - 1

    def write_unary(self, q: int) -> None:
        """``q`` one bits followed by a zero."""
        self.write(((1 << q) - 1) << 1, q + 1)

    def align(self) -> None:
        if self._pending:
            self.write(0, 8 - self._pending)

    def getvalue(self) -> bytes:
        if self._pending:
            return bytes(self._buffer) + bytes([(self._acc << (8 - self._pending)) & 0xFF])
        return bytes(self._buffer)


class BitReader:
    """
    MSB-first bit unpacker over ``data[start:]``.

    Running past the end raises :class:`StreamError` with the byte offset of
    the truncation, counted from ``origin``.
    """

    def __init__(self, data: bytes, start: int = 0, limit_bits: int | None = None, origin: int = 0):
        self._data = data
        self._start = start
        self._origin = origin
        self._pos = 0
        self._limit = (len(data) - start) * 8 if limit_bits is None else limit_bits

    @property
    def position(self) -> int:
        return self._pos

    @property
    def byte_offset(self) -> int:
        return self._origin + self._start + self._pos // 8

    def read(self, nbits: int) -> int:
        if nbits <= 0:
            return 0
        if self._pos + nbits > self._limit:
            raise StreamError('stream ends inside a code word', self._origin + self._start + self._limit // 8)

        value = 0
        pos = self._pos
        end = pos + nbits
        while pos < end:
            byte = self._data[self._start + (pos >> 3)]
            take = min(8 - (pos & 7), end - pos)
            shift = 8 - (pos & 7) - take
            value = (value << take) | ((byte >> shift) & ((1 << take) - 1))
            pos += take
        self._pos = end
        return value

    def read_unary(self, limit: int) -> int:
        """Count one bits up to ``limit``; the terminating zero is consumed when present."""
        q = 0
        while q < limit:
            if not self.read(1):
                return q
            q += 1
        return q

    def align(self) -> None:
        self._pos = (self._pos + 7) & ~7


@dataclass(frozen=True)
class RiceParams:
    """
    Parameters:
        initial_k (int): The accumulator starts at ``2^initial_k``.
        unary_limit (int): Quotients this large escape to a raw index.
        rescale_count (int): Accumulator and counter halve when the counter reaches this.
    """
    initial_k: int = 3
    unary_limit: int = 16
    rescale_count: int = 64

    def __post_init__(self):
        if not 0 <= self.initial_k <= 16:
            raise CompressionError(f'initial k {self.initial_k} outside 0..16')
        if not 1 <= self.unary_limit <= 32:
            raise CompressionError(f'unary limit {self.unary_limit} outside 1..32')


class AdaptiveRice:
    """
    Golomb-Rice coder whose parameter follows the running mean of the indices.

    One instance codes one band; both sides start from the same state.
    """

    def __init__(self, params: RiceParams, bit_depth: int):
        self.params = params
        self.bit_depth = bit_depth
        self.accumulator = 1 << params.initial_k
        self.counter = 1

    @property
    def k(self) -> int:
        return min(max(0, (self.accumulator // self.counter).bit_length() - 1), self.bit_depth)

    def _update(self, index: int) -> None:
        self.accumulator += index
        self.counter += 1
        if self.counter >= self.params.rescale_count:
            self.accumulator = (self.accumulator + 1) >> 1
            self.counter >>= 1

    def encode(self, writer: BitWriter, index: int) -> None:
        k = self.k
        q = index >> k
        limit = self.params.unary_limit
        if q < limit:
            writer.write_unary(q)
            writer.write(index, k)
        else:
            writer.write((1 << limit) - 1, limit)
            writer.write(index, self.bit_depth + 1)
        self._update(index)

    def decode(self, reader: BitReader) -> int:
        k = self.k
        limit = self.params.unary_limit
        q = reader.read_unary(limit)
        if q < limit:
            index = (q << k) | reader.read(k)
        else:
            index = reader.read(self.bit_depth + 1)
        self._update(index)
        return index
