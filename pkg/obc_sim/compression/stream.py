"""
Encoded stream format plus the encoder and decoder.

Layout: a fixed little-endian header followed by the body bitstream. The
body codes the folded residuals of every band in band-sequential order with
one adaptive Rice coder per band, each band padded to a byte boundary.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from obc_sim.compression.coder import (
    AdaptiveRice,
    BitReader,
    BitWriter,
    RiceParams,
    map_residual,
    unmap_residual,
)
from obc_sim.compression.cube import HyperspectralCube
from obc_sim.compression.predictor import (
    PredictorParams,
    PredictorState,
    central_differences,
    first_sample_prediction,
    local_sum,
    predict_from,
    update_weights,
)
from obc_sim.errors import CompressionError, FormatVersionError, StreamError

STREAM_MAGIC = b'OBCH'
FORMAT_VERSION = 1
_HEADER = struct.Struct('<4sBHHHBBBBBBQ')
HEADER_BYTES = _HEADER.size


@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    bands: int
    predictor: PredictorParams
    coder: RiceParams
    body_bits: int
    version: int = FORMAT_VERSION

    def pack(self) -> bytes:
        p, c = self.predictor, self.coder
        return _HEADER.pack(
            STREAM_MAGIC, self.version, self.width, self.height, self.bands,
            p.bit_depth, p.prediction_bands, p.weight_resolution, p.update_scaling,
            c.initial_k, c.unary_limit, self.body_bits,
        )

    @classmethod
    def unpack(cls, blob: bytes) -> 'StreamHeader':
        if blob[:4] != STREAM_MAGIC[:len(blob[:4])]:
            raise StreamError('bad magic', 0)
        if len(blob) < HEADER_BYTES:
            raise StreamError('truncated header', len(blob))

        (_, version, width, height, bands, depth, p_bands, omega, scaling,
         initial_k, unary_limit, body_bits) = _HEADER.unpack_from(blob)
        if version != FORMAT_VERSION:
            raise FormatVersionError(f'stream is version {version}, this decoder reads {FORMAT_VERSION}', 4)
        if not (width and height and bands):
            raise StreamError('zero cube dimension', 5)

        try:
            predictor = PredictorParams(depth, p_bands, omega, scaling)
        except CompressionError as e:
            raise StreamError(f'bad predictor parameters ({e})', 11) from None
        try:
            coder = RiceParams(initial_k, unary_limit)
        except CompressionError as e:
            raise StreamError(f'bad coder parameters ({e})', 15) from None

        return cls(width, height, bands, predictor, coder, body_bits, version)


@dataclass(eq=False)
class EncodedStream:
    header: StreamHeader
    body: bytes = field(repr=False)

    @property
    def length(self) -> int:
        """Total stream length in bits."""
        return HEADER_BYTES * 8 + self.header.body_bits

    @property
    def ratio(self) -> float:
        h = self.header
        return (h.width * h.height * h.bands * h.predictor.bit_depth) / self.length

    def to_bytes(self) -> bytes:
        return self.header.pack() + self.body

    @classmethod
    def from_bytes(cls, blob: bytes) -> 'EncodedStream':
        header = StreamHeader.unpack(blob)
        needed = (header.body_bits + 7) // 8
        body = blob[HEADER_BYTES:]
        if len(body) < needed:
            raise StreamError(f'body holds {len(body)} of {needed} bytes', len(blob))
        return cls(header, bytes(body[:needed]))


Visit = Callable[[int, int, int], int]
"""``visit(prediction, x, y)`` returns the actual sample at ``(x, y)``."""


def _code_band(
        rows: List[List[int]],
        previous: List[List[List[int]]],
        previous_first: int,
        z: int,
        state: PredictorState,
        visit: Visit
) -> None:
    """
    Walk one band in raster order, shared verbatim by encoder and decoder.

    ``previous`` holds the central differences of the bands used for
    prediction, nearest band first.
    """
    params = state.params
    height, width = len(rows), len(rows[0])
    state.reset()

    for y in range(height):
        for x in range(width):
            if x == 0 and y == 0:
                rows[0][0] = visit(first_sample_prediction(previous_first, z, params), 0, 0)
                continue

            sigma = local_sum(rows, x, y)
            diffs = [band[y][x] for band in previous]
            prediction = predict_from(sigma, diffs, state.weights, params)
            actual = visit(prediction, x, y)
            rows[y][x] = actual
            update_weights(state, actual - prediction, diffs)


def encode(
        cube: HyperspectralCube,
        prediction_bands: int = 3,
        weight_resolution: int = 13,
        update_scaling: int = 6,
        coder: Optional[RiceParams] = None
) -> EncodedStream:
    """
    Losslessly encode ``cube``. Bit-exact for a given input and parameters.

    Usage Example:
        >>> from obc_sim.compression.cube import synthetic_cube
        >>> decode(encode(synthetic_cube('gradient', 8, 8, 4))) == synthetic_cube('gradient', 8, 8, 4)
        True
    """
    params = PredictorParams(cube.bit_depth, prediction_bands, weight_resolution, update_scaling)
    coder = coder or RiceParams()
    writer = BitWriter()
    state = PredictorState(params)
    differences: List[List[List[int]]] = []

    for z in range(cube.bands):
        band = cube.samples[z]
        rows = band.astype(np.int64).tolist()
        rice = AdaptiveRice(coder, params.bit_depth)

        def visit(prediction: int, x: int, y: int) -> int:
            actual = rows[y][x]
            rice.encode(writer, map_residual(prediction, actual, params.bit_depth))
            return actual

        previous_first = int(cube.samples[z - 1, 0, 0]) if z else 0
        _code_band(rows, differences[:params.prediction_bands], previous_first, z, state, visit)
        writer.align()
        differences.insert(0, central_differences(band).tolist())

    header = StreamHeader(cube.width, cube.height, cube.bands, params, coder, writer.bits)
    return EncodedStream(header, writer.getvalue())


def _decode_bands(stream: EncodedStream, stop_on_truncation: bool) -> Tuple[np.ndarray, int]:
    h = stream.header
    params = h.predictor
    reader = BitReader(stream.body, limit_bits=min(h.body_bits, len(stream.body) * 8), origin=HEADER_BYTES)
    state = PredictorState(params)
    samples = np.zeros((h.bands, h.height, h.width), dtype=np.uint16)
    differences: List[List[List[int]]] = []

    for z in range(h.bands):
        rows = [[0] * h.width for _ in range(h.height)]
        rice = AdaptiveRice(h.coder, params.bit_depth)

        def visit(prediction: int, x: int, y: int) -> int:
            value = prediction + unmap_residual(rice.decode(reader))
            if not 0 <= value <= params.s_max:
                raise StreamError(f'decoded sample {value} outside range', reader.byte_offset)
            return value

        previous_first = int(samples[z - 1, 0, 0]) if z else 0
        try:
            _code_band(rows, differences[:params.prediction_bands], previous_first, z, state, visit)
        except StreamError:
            if stop_on_truncation:
                return samples, z
            raise

        reader.align()
        band = np.asarray(rows, dtype=np.uint16)
        samples[z] = band
        differences.insert(0, central_differences(band).tolist())

    return samples, h.bands


def decode(stream: (EncodedStream | bytes)) -> HyperspectralCube:
    """
    Decode a stream back to the exact original cube.

    Raises:
        StreamError: On a malformed header or truncated body, with the byte offset.
        FormatVersionError: On a stream of another format version.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = EncodedStream.from_bytes(bytes(stream))
    samples, _ = _decode_bands(stream, stop_on_truncation=False)
    return HyperspectralCube(samples, stream.header.predictor.bit_depth)


def decode_partial(blob: bytes) -> Tuple[HyperspectralCube, int]:
    """
    Recover the complete bands of a truncated stream.

    Bands are byte-aligned, so every band whose code words lie wholly before
    the truncation decodes exactly. Missing bands come back as zeros.

    Returns:
        tuple: The cube and the number of bands recovered.
    """
    header = StreamHeader.unpack(blob)
    body = bytes(blob[HEADER_BYTES:HEADER_BYTES + (header.body_bits + 7) // 8])
    samples, recovered = _decode_bands(EncodedStream(header, body), stop_on_truncation=True)
    return HyperspectralCube(samples, header.predictor.bit_depth), recovered
