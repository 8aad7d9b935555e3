"""Self-contained multilevel compression stream.

Layout (little-endian): rank u8, dims u64 each, dtype u8, eb_rel f64,
dict_size u32, range min/max f64, eb_abs f64, bin_width f64, levels u32,
outlier count u64, outliers (u64 index, i64 bin) each, coarsest count u64,
coarsest values f64 each, then the entropy-coded key stream.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import CorruptStreamError, ValidationError
from ..exec_core import ContextCache, ContextKey, DType, SerialAdapter, TensorData
from ..exec_core.tensor import DTYPE_CODES, DTYPE_FROM_CODE
from ..huffman import huffman_compress, huffman_decompress
from .hierarchy import build_hierarchy
from .quantize import DEFAULT_DICT_SIZE, QuantizedSet, dequantize, quantize
from .transform import decompose, recompose

_FIXED = struct.Struct("<BdIddddI")  # dtype, eb_rel, dict, min, max, eb_abs, bin, levels


def mgard_compress(u: TensorData, eb_rel: float, dict_size: int = DEFAULT_DICT_SIZE,
                   adapter=None, cache: ContextCache | None = None,
                   value_range: tuple[float, float] | None = None) -> bytes:
    """Decompose, quantize against the error bound, entropy-code the keys."""
    if u.dtype not in (DType.F32, DType.F64):
        raise ValidationError(f"lossy compression needs F32/F64, got {u.dtype}")
    adapter = adapter or SerialAdapter()
    ctx = None
    if cache is not None:
        key = ContextKey.make(
            "mgard", u.dims, u.dtype.value, eb_rel=float(eb_rel), dict_size=int(dict_size)
        )
        ctx = cache.acquire(key)
    h = ctx.cached("hierarchy", lambda: build_hierarchy(u.dims)) if ctx else build_hierarchy(u.dims)
    c = decompose(u, h, adapter, ctx)
    q = quantize(c, h, eb_rel, dict_size, value_range=value_range)
    keys_blob = huffman_compress(q.keys, q.dict_size, adapter)

    out = bytearray()
    out += struct.pack("<B", u.rank)
    out += struct.pack(f"<{u.rank}Q", *u.dims)
    out += _FIXED.pack(
        DTYPE_CODES[u.dtype], float(eb_rel), q.dict_size, q.u_min, q.u_max,
        q.eb_abs, q.bin_width, q.total_levels,
    )
    out += struct.pack("<Q", q.outlier_idx.size)
    out += q.outlier_idx.astype("<u8").tobytes()
    out += q.outlier_bins.astype("<i8").tobytes()
    out += struct.pack("<Q", q.coarse_values.size)
    out += q.coarse_values.astype("<f8").tobytes()
    out += keys_blob
    return bytes(out)


def mgard_decompress(data, adapter=None, cache: ContextCache | None = None) -> TensorData:
    data = memoryview(data)
    adapter = adapter or SerialAdapter()
    try:
        (rank,) = struct.unpack_from("<B", data, 0)
        pos = 1
        dims = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        (dtype_code, eb_rel, dict_size, u_min, u_max, eb_abs, bin_width,
         total_levels) = _FIXED.unpack_from(data, pos)
        pos += _FIXED.size
        (n_out,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        outlier_idx = np.frombuffer(data, dtype="<u8", count=n_out, offset=pos).copy()
        pos += 8 * n_out
        outlier_bins = np.frombuffer(data, dtype="<i8", count=n_out, offset=pos).copy()
        pos += 8 * n_out
        (n_coarse,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        coarse_values = np.frombuffer(data, dtype="<f8", count=n_coarse, offset=pos).copy()
        pos += 8 * n_coarse
    except (struct.error, ValueError) as e:
        raise CorruptStreamError(f"truncated stream header: {e}") from e
    if dtype_code not in DTYPE_FROM_CODE:
        raise CorruptStreamError(f"unknown dtype code {dtype_code}")
    dtype = DTYPE_FROM_CODE[dtype_code]
    dims = tuple(int(d) for d in dims)

    keys = huffman_decompress(data[pos:], adapter)
    ctx = None
    if cache is not None:
        key = ContextKey.make(
            "mgard", dims, dtype.value, eb_rel=float(eb_rel), dict_size=int(dict_size)
        )
        ctx = cache.acquire(key)
    h = ctx.cached("hierarchy", lambda: build_hierarchy(dims)) if ctx else build_hierarchy(dims)
    if h.total_levels != total_levels:
        raise CorruptStreamError("stored level count does not match dims")
    q = QuantizedSet(
        dims=dims,
        keys=keys,
        outlier_idx=outlier_idx,
        outlier_bins=outlier_bins,
        coarse_values=coarse_values,
        bin_width=float(bin_width),
        eb_abs=float(eb_abs),
        dict_size=int(dict_size),
        u_min=float(u_min),
        u_max=float(u_max),
        total_levels=int(total_levels),
        source_dtype=dtype,
    )
    c = dequantize(q, h)
    values = recompose(c, h, adapter, ctx)
    return TensorData(dims, dtype, values.astype(dtype.np_dtype))
