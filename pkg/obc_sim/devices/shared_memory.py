"""
Shared telemetry memory: fixed-size record slots in an ECC-protected arena.

There is no file system. Records are addressed by slot index only and the
arena wraps circularly once every slot has been written.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from obc_sim.errors import TelemetrySizeError
from obc_sim.faulttol.memory import WORD_BYTES, MemoryBank


class SharedTelemetryMemory:
    """
    Parameters:
        capacity (int): Number of record slots.
        slot_size (int): Bytes per slot; the largest record accepted.
        label (str): Label of the backing :class:`MemoryBank`.

    Usage Example:
        >>> mem = SharedTelemetryMemory(capacity=2, slot_size=8)
        >>> [mem.write(bytes([i])) for i in range(3)]
        [0, 1, 0]
        >>> mem.read(0)
        b'\\x02'
    """

    def __init__(self, capacity: int, slot_size: int, label: str = 'telemetry-flash'):
        if capacity <= 0 or slot_size <= 0:
            raise ValueError('capacity and slot size must be positive')

        self.capacity = capacity
        self.slot_size = slot_size
        words = -(-capacity * slot_size // WORD_BYTES)
        self.bank = MemoryBank(words, label)
        self.lengths: List[Optional[int]] = [None] * capacity
        self.write_cursor = 0
        self.written = 0

    def write(self, record: bytes) -> int:
        """
        Store ``record`` in the slot under the write cursor.

        Returns:
            int: The slot index written.

        Raises:
            TelemetrySizeError: If the record is larger than one slot.
        """
        if len(record) > self.slot_size:
            raise TelemetrySizeError(f'{len(record)} bytes, slots hold {self.slot_size}')

        slot = self.write_cursor
        self.bank.write(slot * self.slot_size, bytes(record))
        self.lengths[slot] = len(record)
        self.write_cursor = (slot + 1) % self.capacity
        self.written += 1
        return slot

    def read(self, slot: int) -> Optional[bytes]:
        if not 0 <= slot < self.capacity:
            raise IndexError(f'slot {slot} outside 0..{self.capacity - 1}')
        length = self.lengths[slot]
        if length is None:
            return None
        return self.bank.read(slot * self.slot_size, length)

    def records_since(self, sequence: int) -> List[Tuple[int, bytes]]:
        """
        Records with a write sequence number of at least ``sequence``.

        Records already overwritten by the wrap are gone; the result starts
        at the oldest surviving one.

        Returns:
            list: ``(sequence, record)`` pairs in write order.
        """
        start = max(sequence, self.written - self.capacity, 0)
        out = []
        for seq in range(start, self.written):
            out.append((seq, self.read(seq % self.capacity)))
        return out

    @property
    def occupied(self) -> int:
        return min(self.written, self.capacity)

    def slots(self) -> Dict[int, bytes]:
        return {slot: self.read(slot) for slot in range(self.capacity) if self.lengths[slot] is not None}

    def dump_jsonl(self, path: (str | Path)) -> Path:
        """Write every occupied slot as one JSON line: slot, length, record type byte and hex payload."""
        path = Path(path)
        with path.open('w', encoding='utf-8', newline='\n') as f:
            for slot, record in self.slots().items():
                line = {'slot': slot, 'length': len(record), 'type': record[0] if record else None,
                        'hex': record.hex()}
                f.write(json.dumps(line, sort_keys=True, separators=(',', ':')))
                f.write('\n')
        return path
