from obc_sim.compression.coder import AdaptiveRice, BitReader, BitWriter, RiceParams, map_residual, unmap_residual
from obc_sim.compression.cube import CORPUS_KINDS, HyperspectralCube, synthetic_cube
from obc_sim.compression.predictor import (
    PredictorParams,
    PredictorState,
    local_sum,
    predict_sample,
    update_weights,
)
from obc_sim.compression.stream import (
    FORMAT_VERSION,
    EncodedStream,
    StreamHeader,
    decode,
    decode_partial,
    encode,
)
