"""
ECC-protected memory banks and the background scrubber.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from obc_sim.errors import DumpError
from obc_sim.faulttol.ecc import (
    CODE_BITS,
    CodeWord,
    DecodeStatus,
    ecc_decode,
    ecc_encode,
    encode_array,
    syndrome_array,
)
from obc_sim.helpers import get_logger

log = get_logger(__name__)

DUMP_MAGIC = b'ECCB'
DUMP_VERSION = 1
WORD_BYTES = 8

_WORD_DTYPE = np.dtype([('data', '<u8'), ('check', 'u1')])

BANK_LABELS = ('image-flash', 'telemetry-flash', 'boot-flash', 'scratch')


@dataclass
class ScrubReport:
    corrected: int = 0
    uncorrectable: int = 0
    words_scanned: int = 0

    def __add__(self, other: 'ScrubReport') -> 'ScrubReport':
        return ScrubReport(
            self.corrected + other.corrected,
            self.uncorrectable + other.uncorrectable,
            self.words_scanned + other.words_scanned,
        )

    def __str__(self) -> str:
        return f'corrected={self.corrected} uncorrectable={self.uncorrectable} words={self.words_scanned}'


class MemoryBank:
    """
    An array of (72,64) codewords.

    Parameters:
        words (int): Number of 64-bit data words.
        label (str): One of :data:`BANK_LABELS`.

    Usage Example:
        >>> bank = MemoryBank(4, 'scratch')
        >>> bank.write(0, b'hello')
        >>> bank.read(0, 5)
        b'hello'
    """

    def __init__(self, words: int, label: str = 'scratch'):
        if words <= 0:
            raise ValueError('a memory bank needs at least one word')
        if label not in BANK_LABELS:
            raise ValueError(f'unknown bank label {label!r}')

        self.label = label
        self.data = np.zeros(words, dtype=np.uint64)
        self.check = np.zeros(words, dtype=np.uint8)
        self.corrected = 0
        self.uncorrectable = 0
        self.bad_words: Dict[int, Optional[int]] = {}

    @classmethod
    def random(cls, words: int, seed: int, label: str = 'scratch') -> 'MemoryBank':
        bank = cls(words, label)
        rng = np.random.default_rng(seed)
        bank.load_words(rng.integers(0, 2 ** 64, size=words, dtype=np.uint64))
        return bank

    def __len__(self) -> int:
        return len(self.data)

    @property
    def size_bytes(self) -> int:
        return len(self.data) * WORD_BYTES

    @property
    def bit_count(self) -> int:
        return len(self.data) * CODE_BITS

    @property
    def megabits(self) -> float:
        return self.bit_count / 1e6

    def load_words(self, words: np.ndarray) -> None:
        """Overwrite the bank with freshly encoded words (resets nothing else)."""
        words = np.asarray(words, dtype=np.uint64)
        if len(words) != len(self.data):
            raise ValueError(f'expected {len(self.data)} words, got {len(words)}')
        self.data[:] = words
        self.check[:] = encode_array(words)

    def codeword(self, index: int) -> CodeWord:
        return CodeWord(int(self.data[index]), int(self.check[index]))

    def write_word(self, index: int, value: int) -> None:
        cw = ecc_encode(value)
        self.data[index] = np.uint64(cw.data)
        self.check[index] = cw.check
        self.bad_words.pop(index, None)

    def flip(self, word: int, bit: int) -> None:
        """Invert one stored bit; ``bit`` is a flip index 0..71."""
        if not 0 <= word < len(self.data):
            raise IndexError(f'word {word} outside 0..{len(self.data) - 1}')
        cw = self.codeword(word).flip(bit)
        self.data[word] = np.uint64(cw.data)
        self.check[word] = cw.check

    def flip_absolute(self, position: int) -> None:
        self.flip(position // CODE_BITS, position % CODE_BITS)

    def _decoded(self, start: int, stop: int) -> np.ndarray:
        data = self.data[start:stop].copy()
        syndrome, overall = syndrome_array(data, self.check[start:stop])
        for i in np.flatnonzero(syndrome | overall):
            data[i] = np.uint64(ecc_decode(self.codeword(start + int(i))).data)
        return data

    def read(self, offset: int, length: int) -> bytes:
        """Read bytes through the decoder; single-bit errors are corrected on the fly, not rewritten."""
        if offset < 0 or length < 0 or offset + length > self.size_bytes:
            raise IndexError(f'read of {length} bytes at {offset} outside a {self.size_bytes}-byte bank')
        if length == 0:
            return b''
        first, last = offset // WORD_BYTES, (offset + length - 1) // WORD_BYTES + 1
        raw = self._decoded(first, last).astype('<u8').tobytes()
        start = offset - first * WORD_BYTES
        return raw[start:start + length]

    def write(self, offset: int, payload: bytes) -> None:
        """Read-modify-write ``payload`` at byte ``offset``."""
        length = len(payload)
        if offset < 0 or offset + length > self.size_bytes:
            raise IndexError(f'write of {length} bytes at {offset} outside a {self.size_bytes}-byte bank')
        if length == 0:
            return
        first, last = offset // WORD_BYTES, (offset + length - 1) // WORD_BYTES + 1
        raw = bytearray(self._decoded(first, last).astype('<u8').tobytes())
        start = offset - first * WORD_BYTES
        raw[start:start + length] = payload

        words = np.frombuffer(bytes(raw), dtype='<u8').astype(np.uint64)
        self.data[first:last] = words
        self.check[first:last] = encode_array(words)
        for index in range(first, last):
            self.bad_words.pop(index, None)

    # Persistence --------------------------------------------------------------------------------

    def to_bytes(self) -> bytes:
        label = self.label.encode('ascii')
        header = DUMP_MAGIC + struct.pack('<BB', DUMP_VERSION, len(label)) + label
        body = np.empty(len(self.data), dtype=_WORD_DTYPE)
        body['data'] = self.data
        body['check'] = self.check
        return header + struct.pack('<I', len(self.data)) + body.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> 'MemoryBank':
        if blob[:4] != DUMP_MAGIC:
            raise DumpError('bad magic')
        if len(blob) < 6:
            raise DumpError('truncated header')

        version, label_len = struct.unpack_from('<BB', blob, 4)
        if version != DUMP_VERSION:
            raise DumpError(f'unsupported dump version {version}')

        offset = 6 + label_len
        if len(blob) < offset + 4:
            raise DumpError('truncated header')
        label = blob[6:offset].decode('ascii', errors='replace')
        (count,) = struct.unpack_from('<I', blob, offset)
        offset += 4

        expected = offset + count * _WORD_DTYPE.itemsize
        if len(blob) != expected:
            raise DumpError(f'expected {expected} bytes for {count} words, found {len(blob)}')
        try:
            bank = cls(count, label)
        except ValueError as e:
            raise DumpError(str(e)) from None

        body = np.frombuffer(blob, dtype=_WORD_DTYPE, count=count, offset=offset)
        bank.data[:] = body['data']
        bank.check[:] = body['check']
        return bank

    def dump(self, path: (str | Path)) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: (str | Path)) -> 'MemoryBank':
        return cls.from_bytes(Path(path).read_bytes())

    def bad_word_records(self) -> List[dict]:
        return [
            {'bank': self.label, 'word': index, 'flagged_at': t}
            for index, t in sorted(self.bad_words.items())
        ]

    def write_bad_words(self, path: (str | Path)) -> Path:
        path = Path(path)
        with path.open('w', encoding='utf-8', newline='\n') as f:
            for rec in self.bad_word_records():
                f.write(json.dumps(rec, sort_keys=True, separators=(',', ':')))
                f.write('\n')
        return path


def scrub_memory(bank: MemoryBank, now: Optional[int] = None) -> ScrubReport:
    """
    One read-correct-rewrite pass over every word of ``bank``.

    Corrected words are re-encoded in place. Uncorrectable words are left as
    they are and flagged in the bank's bad-word map; the bank counter only
    grows for words not flagged before.
    """
    report = ScrubReport(words_scanned=len(bank))
    syndrome, overall = syndrome_array(bank.data, bank.check)

    for i in np.flatnonzero(syndrome | overall):
        index = int(i)
        result = ecc_decode(bank.codeword(index))
        if result.status is DecodeStatus.CORRECTED:
            bank.write_word(index, result.data)
            report.corrected += 1
        elif result.status is DecodeStatus.UNCORRECTABLE:
            report.uncorrectable += 1
            if index not in bank.bad_words:
                bank.bad_words[index] = now
                bank.uncorrectable += 1

    bank.corrected += report.corrected
    if report.corrected or report.uncorrectable:
        log.info(f'Scrubbed {bank.label}: {report}')
    return report
