"""Blockwise quaternion rotations for low-bit online vector quantization."""

from . import analysis, data, pipeline, quantizer, quat, rotor
from .pipeline import EncodedBatch, EncodedVector, batch_mse, decode, decode_batch, encode, encode_batch
from .quantizer import Codebook, PackedCodes, pack, train_lloyd_max, unpack
from .rotor import ComplexityReport, Kind, RotationScheme, complexity, forward, inverse, new_scheme

__version__ = "0.1.0"
