"""
Hyperspectral cubes: band-sequential 16-bit sample storage, the raw file
format with its text sidecar, and the synthetic test corpus.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from obc_sim.errors import CompressionError

SIDECAR_MAGIC = 'OBCSIM CUBE'
SIDECAR_VERSION = 1
CORPUS_KINDS = ('constant', 'gradient', 'band-correlated', 'random')


@dataclass(eq=False)
class HyperspectralCube:
    """
    Samples are held as a ``(bands, height, width)`` uint16 array.

    Usage Example:
        >>> cube = synthetic_cube('constant', 4, 4, 2)
        >>> cube.shape
        (2, 4, 4)
    """
    samples: np.ndarray
    bit_depth: int = 12

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.uint16)
        if self.samples.ndim != 3 or 0 in self.samples.shape:
            raise CompressionError(f'cube needs shape (bands, height, width), got {self.samples.shape}')
        if not 2 <= self.bit_depth <= 16:
            raise CompressionError(f'bit depth {self.bit_depth} outside 2..16')
        if int(self.samples.max()) >= 1 << self.bit_depth:
            raise CompressionError(f'sample {int(self.samples.max())} exceeds {self.bit_depth}-bit range')

    @property
    def bands(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.samples.shape

    @property
    def sample_count(self) -> int:
        return self.samples.size

    @property
    def raw_bits(self) -> int:
        return self.sample_count * self.bit_depth

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HyperspectralCube):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.samples, other.samples)

    # Raw file + sidecar -------------------------------------------------------------------------

    def to_raw(self) -> bytes:
        return self.samples.astype('<u2').tobytes()

    @classmethod
    def from_raw(cls, raw: bytes, width: int, height: int, bands: int, bit_depth: int) -> 'HyperspectralCube':
        expected = width * height * bands * 2
        if len(raw) != expected:
            raise CompressionError(f'raw cube holds {len(raw)} bytes, sidecar implies {expected}')
        samples = np.frombuffer(raw, dtype='<u2').reshape(bands, height, width)
        return cls(samples.astype(np.uint16), bit_depth)

    def sidecar(self) -> str:
        lines = [
            SIDECAR_MAGIC,
            f'version = {SIDECAR_VERSION}',
            f'width = {self.width}',
            f'height = {self.height}',
            f'bands = {self.bands}',
            f'bit_depth = {self.bit_depth}',
            'interleave = bsq',
            'byte_order = little',
        ]
        return '\n'.join(lines) + '\n'

    def write(self, path: (str | Path)) -> Path:
        path = Path(path)
        path.write_bytes(self.to_raw())
        sidecar_path(path).write_text(self.sidecar(), encoding='ascii', newline='\n')
        return path

    @classmethod
    def read(cls, path: (str | Path)) -> 'HyperspectralCube':
        path = Path(path)
        header = parse_sidecar(sidecar_path(path).read_text(encoding='ascii'))
        return cls.from_raw(path.read_bytes(), header['width'], header['height'], header['bands'],
                            header['bit_depth'])


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + '.hdr')


def parse_sidecar(text: str) -> Dict[str, int]:
    lines = text.splitlines()
    if len(lines) != 8 or lines[0].strip() != SIDECAR_MAGIC:
        raise CompressionError('cube sidecar must be the 8-line OBCSIM CUBE header')

    fields: Dict[str, str] = {}
    for number, line in enumerate(lines[1:], start=2):
        key, sep, value = line.partition('=')
        if not sep:
            raise CompressionError(f'sidecar line {number} is not key = value')
        fields[key.strip()] = value.strip()

    if fields.get('interleave') != 'bsq' or fields.get('byte_order') != 'little':
        raise CompressionError('only little-endian band-sequential cubes are supported')

    try:
        header = {key: int(fields[key]) for key in ('version', 'width', 'height', 'bands', 'bit_depth')}
    except (KeyError, ValueError) as e:
        raise CompressionError(f'bad sidecar field: {e}') from None
    if header['version'] != SIDECAR_VERSION:
        raise CompressionError(f'unsupported sidecar version {header["version"]}')
    return header


# Synthetic corpus -------------------------------------------------------------------------------

def synthetic_cube(
        kind: str,
        width: int,
        height: int,
        bands: int,
        bit_depth: int = 12,
        seed: int = 0
) -> HyperspectralCube:
    """
    Build one cube of the test corpus.

    Parameters:
        kind (str): ``constant``, ``gradient`` (``50 + 10x + 15y + 40z``),
            ``band-correlated`` (random first band, each next band the previous
            plus small noise) or ``random`` (uniform over the full range).
    """
    s_max = (1 << bit_depth) - 1
    rng = np.random.default_rng(seed)
    z, y, x = np.indices((bands, height, width), dtype=np.int64)

    if kind == 'constant':
        samples = np.full((bands, height, width), min(1000, s_max), dtype=np.int64)
    elif kind == 'gradient':
        samples = 50 + 10 * x + 15 * y + 40 * z
    elif kind == 'band-correlated':
        samples = np.empty((bands, height, width), dtype=np.int64)
        samples[0] = rng.integers(s_max // 4, 3 * s_max // 4 + 1, size=(height, width))
        for band in range(1, bands):
            samples[band] = samples[band - 1] + rng.integers(-2, 3, size=(height, width))
    elif kind == 'random':
        samples = rng.integers(0, s_max + 1, size=(bands, height, width))
    else:
        raise CompressionError(f'unknown corpus cube {kind!r}; pick one of {", ".join(CORPUS_KINDS)}')

    return HyperspectralCube(np.clip(samples, 0, s_max).astype(np.uint16), bit_depth)
