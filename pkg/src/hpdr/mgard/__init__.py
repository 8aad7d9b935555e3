"""Multilevel error-bounded lossy compressor."""

from .codec import mgard_compress, mgard_decompress
from .hierarchy import Hierarchy, build_hierarchy
from .quantize import QuantizedSet, dequantize, quantize
from .transform import CoefficientSet, decompose, recompose

__all__ = [
    "CoefficientSet",
    "Hierarchy",
    "QuantizedSet",
    "build_hierarchy",
    "decompose",
    "dequantize",
    "mgard_compress",
    "mgard_decompress",
    "quantize",
    "recompose",
]
