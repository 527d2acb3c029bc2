"""CRC-aided serial list Viterbi decoding of rate-(n-1)/n convolutional codes
over the dual trellis, with DSO CRC design and a Monte Carlo harness."""

from .algebra import BinaryPolynomial, crc_append, crc_check, parse_poly, poly_mod
from .encoder import CodeConfig, ParityCheck, encode_step, tb_encode, zt_encode

__all__ = [
    "BinaryPolynomial",
    "CodeConfig",
    "ParityCheck",
    "crc_append",
    "crc_check",
    "encode_step",
    "parse_poly",
    "poly_mod",
    "tb_encode",
    "zt_encode",
]

__version__ = "0.1.0"
