"""
Adaptive spectral-spatial predictor.

For every sample the predictor forms a neighbour-oriented local sum ``σ`` of
up to four causal neighbours in the same band, takes the central local
differences ``4·s − σ`` of the ``P`` previous bands at the same position,
and predicts with a fixed-point weighted sum of those differences. Weights
adapt after every sample by a sign-sign rule, identically in the encoder and
the decoder.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from obc_sim.errors import CompressionError


@dataclass(frozen=True)
class PredictorParams:
    """
    Parameters:
        bit_depth (int): Sample bit depth ``D``.
        prediction_bands (int): Previous bands used, ``P``.
        weight_resolution (int): Fractional bits of the weights, ``Ω``.
        update_scaling (int): A weight moves by ``2^(Ω − update_scaling)`` per update.
    """
    bit_depth: int = 12
    prediction_bands: int = 3
    weight_resolution: int = 13
    update_scaling: int = 6

    def __post_init__(self):
        if not 2 <= self.bit_depth <= 16:
            raise CompressionError(f'bit depth {self.bit_depth} outside 2..16')
        if not 0 <= self.prediction_bands <= 15:
            raise CompressionError(f'prediction bands {self.prediction_bands} outside 0..15')
        if not 4 <= self.weight_resolution <= 19:
            raise CompressionError(f'weight resolution {self.weight_resolution} outside 4..19')
        if not 0 <= self.update_scaling <= self.weight_resolution:
            raise CompressionError(f'update scaling {self.update_scaling} outside 0..{self.weight_resolution}')

    @property
    def s_max(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def s_mid(self) -> int:
        return 1 << (self.bit_depth - 1)

    @property
    def w_min(self) -> int:
        return -(1 << (self.weight_resolution + 2))

    @property
    def w_max(self) -> int:
        return (1 << (self.weight_resolution + 2)) - 1

    @property
    def step(self) -> int:
        return 1 << (self.weight_resolution - self.update_scaling)

    def initial_weights(self) -> List[int]:
        weights = []
        if self.prediction_bands:
            weight = (7 << self.weight_resolution) // 8
            for _ in range(self.prediction_bands):
                weights.append(weight)
                weight //= 8
        return weights


@dataclass
class PredictorState:
    params: PredictorParams = field(default_factory=PredictorParams)
    weights: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.weights:
            self.reset()

    def reset(self) -> None:
        """Weights start over at the beginning of every band."""
        self.weights = self.params.initial_weights()


def local_sum(band: Sequence[Sequence[int]], x: int, y: int) -> int:
    """
    Neighbour-oriented local sum at ``(x, y)``; undefined (0) for the first sample.

    ``band`` is indexed ``band[y][x]`` and only causal samples are read.
    """
    width = len(band[0])
    if y == 0:
        return 4 * band[0][x - 1] if x > 0 else 0
    north = band[y - 1]
    if width == 1:
        return 4 * north[0]
    if x == 0:
        return 2 * (north[0] + north[1])
    row = band[y]
    if x == width - 1:
        return row[x - 1] + north[x - 1] + 2 * north[x]
    return row[x - 1] + north[x - 1] + north[x] + north[x + 1]


def local_sums(band: np.ndarray) -> np.ndarray:
    """Vectorized :func:`local_sum` over a whole, fully known band."""
    s = band.astype(np.int64)
    height, width = s.shape
    sigma = np.zeros_like(s)

    sigma[0, 1:] = 4 * s[0, :-1]
    if height > 1:
        if width == 1:
            sigma[1:, 0] = 4 * s[:-1, 0]
        else:
            sigma[1:, 0] = 2 * (s[:-1, 0] + s[:-1, 1])
            sigma[1:, -1] = s[1:, -2] + s[:-1, -2] + 2 * s[:-1, -1]
            if width > 2:
                sigma[1:, 1:-1] = s[1:, :-2] + s[:-1, :-2] + s[:-1, 1:-1] + s[:-1, 2:]
    return sigma


def central_differences(band: np.ndarray) -> np.ndarray:
    return 4 * band.astype(np.int64) - local_sums(band)


def predict_from(sigma: int, diffs: Sequence[int], weights: Sequence[int], params: PredictorParams) -> int:
    omega = params.weight_resolution
    dhat = 0
    for weight, diff in zip(weights, diffs):
        dhat += weight * diff
    prediction = (dhat + (sigma << omega) + (1 << (omega + 1))) >> (omega + 2)
    return min(max(prediction, 0), params.s_max)


def first_sample_prediction(previous_first: int, z: int, params: PredictorParams) -> int:
    if z == 0 or params.prediction_bands == 0:
        return params.s_mid
    return previous_first


def predict_sample(cube: np.ndarray, x: int, y: int, z: int, state: PredictorState) -> int:
    """
    Predict sample ``(x, y, z)`` of a ``(bands, height, width)`` sample array.

    Pure given ``state``; only causal samples are read.
    """
    params = state.params
    samples = np.asarray(cube)
    if x == 0 and y == 0:
        return first_sample_prediction(int(samples[z - 1, 0, 0]) if z else 0, z, params)

    sigma = local_sum(samples[z].tolist(), x, y)
    diffs = [
        int(central_differences(samples[z - i])[y, x])
        for i in range(1, min(params.prediction_bands, z) + 1)
    ]
    return predict_from(sigma, diffs, state.weights, params)


def update_weights(state: PredictorState, prediction_error: int, diffs: Sequence[int]) -> PredictorState:
    """
    Sign-sign weight adaptation, clamped to the fixed-point range.

    A zero error or a zero local difference leaves the weight unchanged.
    """
    if prediction_error == 0:
        return state

    params = state.params
    sign = 1 if prediction_error > 0 else -1
    weights = state.weights
    for i, diff in enumerate(diffs):
        if diff:
            moved = weights[i] + (sign if diff > 0 else -sign) * params.step
            weights[i] = min(max(moved, params.w_min), params.w_max)
    return state
