"""Fixed-rate block compressor: 4^d blocks, common-exponent fixed point,
reversible lifting transform, negabinary bitplane truncation.

Every block compresses to exactly the same bit count (1 zero-block flag +
biased exponent + rate * 4^d payload bits), so compressed size is a pure
function of dims, dtype, and rate. All block arithmetic is modular in the
q-bit integer type, which keeps the lifting exactly invertible at full
rate regardless of dynamic range.
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptStreamError, ValidationError
from .exec_core import (
    DType,
    ExecKind,
    ExecStage,
    SerialAdapter,
    TensorData,
    execute_gem,
    partition_bounds,
)

BLOCK_SIDE = 4
MAX_BLOCK_RANK = 3
# Blocks per batch for vectorized bit packing; multiple of 8 keeps batch
# boundaries byte-aligned for any per-block bit width.
BATCH_BLOCKS = 4096


@dataclass(frozen=True)
class ScalarSpec:
    q: int                 # fixed-point width in bits
    e_bits: int            # biased exponent field width
    e_bias: int
    int_dtype: np.dtype
    uint_dtype: np.dtype
    nb_mask: int           # alternating-bit negabinary mask


SPECS = {
    DType.F32: ScalarSpec(32, 8, 127, np.dtype(np.int32), np.dtype(np.uint32),
                          0xAAAAAAAA),
    DType.F64: ScalarSpec(64, 11, 1023, np.dtype(np.int64), np.dtype(np.uint64),
                          0xAAAAAAAAAAAAAAAA),
}


@dataclass(frozen=True)
class RateSpec:
    rate: int
    q: int

    def __post_init__(self):
        if not (1 <= self.rate <= self.q):
            raise ValidationError(f"rate must be in [1, {self.q}], got {self.rate}")

    def block_bits(self, d: int, e_bits: int) -> int:
        return 1 + e_bits + self.rate * BLOCK_SIDE**d


def _sequency_perm(d: int) -> np.ndarray:
    """Order block positions by total frequency index, ties lexicographic.

    Per-axis frequency of the four lifted outputs: position 0 holds the
    running average, 2 and 3 the mid differences, 1 the finest detail.
    """
    freq_of_pos = (0, 3, 1, 2)
    positions = list(itertools.product(range(BLOCK_SIDE), repeat=d))
    keyed = sorted(
        range(len(positions)),
        key=lambda flat: (sum(freq_of_pos[i] for i in positions[flat]), flat),
    )
    return np.array(keyed, dtype=np.int64)


SEQUENCY_PERM = {d: _sequency_perm(d) for d in (1, 2, 3)}
SEQUENCY_INV = {d: np.argsort(p) for d, p in SEQUENCY_PERM.items()}


def partition_blocks(u: TensorData) -> tuple[np.ndarray, tuple[int, ...]]:
    """Tile the domain into 4^d blocks, replicating edge values into padding.

    Returns (blocks, grid): blocks has shape (n_blocks, 4^d) with row-major
    element order inside each block, and grid is the per-dimension block
    count. Blocks are ordered row-major over the grid.
    """
    if u.rank > MAX_BLOCK_RANK:
        raise ValidationError(f"rank {u.rank} > {MAX_BLOCK_RANK} unsupported")
    d = u.rank
    arr = u.values
    pad = [(0, (-s) % BLOCK_SIDE) for s in arr.shape]
    if any(p for _, p in pad):
        arr = np.pad(arr, pad, mode="edge")
    grid = tuple(s // BLOCK_SIDE for s in arr.shape)
    # split each axis into (grid, 4), move grid axes first, flatten
    shape = []
    for g in grid:
        shape.extend([g, BLOCK_SIDE])
    blocks = arr.reshape(shape)
    order = list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2))
    blocks = blocks.transpose(order).reshape(int(np.prod(grid)), BLOCK_SIDE**d)
    return np.ascontiguousarray(blocks), grid


def unpartition_blocks(blocks: np.ndarray, grid: tuple[int, ...],
                       dims: tuple[int, ...]) -> np.ndarray:
    """Inverse of partition_blocks; padding values are discarded."""
    d = len(dims)
    shape = list(grid) + [BLOCK_SIDE] * d
    arr = blocks.reshape(shape)
    order = []
    for i in range(d):
        order.extend([i, d + i])
    arr = arr.transpose(order).reshape([g * BLOCK_SIDE for g in grid])
    return arr[tuple(slice(0, s) for s in dims)]


def exp_align(blocks: np.ndarray, dtype: DType) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Common-exponent fixed point per block.

    e_max is the base-2 exponent of the largest magnitude (m in [1, 2)),
    fixed = round(value * 2^(q-2-e_max)). All-zero blocks get a sentinel
    flag and zero payload.
    """
    spec = SPECS[dtype]
    blocks = np.asarray(blocks, dtype=np.float64)
    if not np.isfinite(blocks).all():
        raise ValidationError("non-finite values cannot be aligned")
    maxabs = np.abs(blocks).max(axis=1)
    zero_mask = maxabs == 0
    safe = np.where(zero_mask, 1.0, maxabs)
    e_max = np.floor(np.log2(safe)).astype(np.int32)
    # guard against log2 rounding at power-of-two boundaries
    too_low = np.ldexp(1.0, (e_max + 1).astype(np.int32)) <= safe
    e_max[too_low] += 1
    too_high = np.ldexp(1.0, e_max.astype(np.int32)) > safe
    e_max[too_high] -= 1
    e_max = np.maximum(e_max, -spec.e_bias)  # keep biased exponent >= 0
    shift = (spec.q - 2 - e_max).astype(np.int32)
    fixed = np.rint(np.ldexp(blocks, shift[:, None]))
    fixed = fixed.astype(spec.int_dtype)
    fixed[zero_mask] = 0
    return fixed, e_max, zero_mask


def exp_restore(fixed: np.ndarray, e_max: np.ndarray, dtype: DType) -> np.ndarray:
    spec = SPECS[dtype]
    shift = (e_max.astype(np.int32) - (spec.q - 2))
    out = np.ldexp(fixed.astype(np.float64), shift[:, None])
    return out.astype(dtype.np_dtype) if dtype is DType.F32 else out


def _lift_axis(x, y, z, w, forward: bool):
    """Reversible counterpart of the published 4-point lifting.

    Each average/half-difference pair is replaced by its exactly invertible
    form (difference kept whole, average via shifted difference); the final
    rotation pair is invertible as published. Arithmetic wraps modulo 2^q,
    and the inverse replays the same stored operands, so forward/inverse
    compose to the identity for every input.
    """
    if forward:
        w -= x; x += w >> 1
        y -= z; z += y >> 1
        z -= x; x += z >> 1
        y -= w; w += y >> 1
        w += y >> 1; y -= w >> 1
    else:
        y += w >> 1; w -= y >> 1
        w -= y >> 1; y += w
        x -= z >> 1; z += x
        z -= y >> 1; y += z
        x -= w >> 1; w += x


def _transform(blocks: np.ndarray, d: int, forward: bool) -> np.ndarray:
    out = blocks.reshape((blocks.shape[0],) + (BLOCK_SIDE,) * d)
    axes = range(1, d + 1) if forward else range(d, 0, -1)
    with np.errstate(over="ignore"):
        for axis in axes:
            view = np.moveaxis(out, axis, -1)
            x, y, z, w = (view[..., i] for i in range(BLOCK_SIDE))
            _lift_axis(x, y, z, w, forward)
    return out.reshape(blocks.shape[0], BLOCK_SIDE**d)


def forward_transform(blocks: np.ndarray, d: int) -> np.ndarray:
    """Decorrelate along each dimension in ascending order."""
    return _transform(blocks.copy(), d, forward=True)


def inverse_transform(blocks: np.ndarray, d: int) -> np.ndarray:
    """Exact inverse: reverse steps in reverse axis order."""
    return _transform(blocks.copy(), d, forward=False)


def _to_negabinary(v: np.ndarray, spec: ScalarSpec) -> np.ndarray:
    mask = spec.uint_dtype.type(spec.nb_mask)
    u = v.view(spec.uint_dtype)
    with np.errstate(over="ignore"):
        return (u + mask) ^ mask


def _from_negabinary(u: np.ndarray, spec: ScalarSpec) -> np.ndarray:
    mask = spec.uint_dtype.type(spec.nb_mask)
    with np.errstate(over="ignore"):
        return ((u ^ mask) - mask).view(spec.int_dtype)


def bitplane_encode(fixed: np.ndarray, e_max: np.ndarray, zero_mask: np.ndarray,
                    rate: RateSpec, d: int, dtype: DType) -> np.ndarray:
    """Emit each block as flag + biased exponent + exactly rate*4^d payload
    bits, planes ordered most significant first over sequency-permuted
    negabinary coefficients. Returns unpacked bits (uint8 per bit)."""
    spec = SPECS[dtype]
    m = BLOCK_SIDE**d
    n = fixed.shape[0]
    perm = SEQUENCY_PERM[d]
    nb = _to_negabinary(fixed[:, perm], spec)
    w = rate.block_bits(d, spec.e_bits)
    bits = np.zeros((n, w), dtype=np.uint8)
    bits[:, 0] = zero_mask
    biased = (e_max.astype(np.int64) + spec.e_bias)
    if biased.size and (biased.min() < 0 or biased.max() >= (1 << spec.e_bits)):
        raise ValidationError("exponent outside biased range")
    biased = np.where(zero_mask, 0, biased)
    for i in range(spec.e_bits):
        bits[:, 1 + i] = (biased >> (spec.e_bits - 1 - i)) & 1
    off = 1 + spec.e_bits
    nb[zero_mask] = 0
    for t in range(rate.rate):
        plane = (nb >> spec.uint_dtype.type(spec.q - 1 - t)) & spec.uint_dtype.type(1)
        bits[:, off + t * m:off + (t + 1) * m] = plane.astype(np.uint8)
    return bits.reshape(-1)


def bitplane_decode(bits: np.ndarray, n_blocks: int, rate: RateSpec, d: int,
                    dtype: DType) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rebuild fixed-point blocks, zero-filling the truncated planes."""
    spec = SPECS[dtype]
    m = BLOCK_SIDE**d
    w = rate.block_bits(d, spec.e_bits)
    mat = bits.reshape(n_blocks, w)
    zero_mask = mat[:, 0].astype(bool)
    biased = np.zeros(n_blocks, dtype=np.int64)
    for i in range(spec.e_bits):
        biased = (biased << 1) | mat[:, 1 + i]
    e_max = (biased - spec.e_bias).astype(np.int32)
    e_max[zero_mask] = -spec.e_bias
    off = 1 + spec.e_bits
    nb = np.zeros((n_blocks, m), dtype=spec.uint_dtype)
    for t in range(rate.rate):
        plane = mat[:, off + t * m:off + (t + 1) * m].astype(spec.uint_dtype)
        nb |= plane << spec.uint_dtype.type(spec.q - 1 - t)
    fixed = _from_negabinary(nb, spec)[:, SEQUENCY_INV[d]]
    fixed[zero_mask] = 0
    return np.ascontiguousarray(fixed), e_max, zero_mask


_ZFP_HEADER = struct.Struct("<BBB")  # rank, dtype code, rate


def compressed_size(dims, dtype: DType, rate: int) -> int:
    """Exact stream size in bytes for the fix-rate contract."""
    spec = SPECS[dtype]
    d = len(dims)
    n_blocks = 1
    for s in dims:
        n_blocks *= (int(s) + BLOCK_SIDE - 1) // BLOCK_SIDE
    total_bits = n_blocks * RateSpec(rate, spec.q).block_bits(d, spec.e_bits)
    return _ZFP_HEADER.size + 8 * d + (total_bits + 7) // 8


def zfp_compress(u: TensorData, rate: int, adapter=None) -> bytes:
    """Self-contained fix-rate stream: tiny header + equal-budget blocks."""
    from .exec_core.tensor import DTYPE_CODES

    if u.dtype not in SPECS:
        raise ValidationError(f"fix-rate compression needs F32/F64, got {u.dtype}")
    spec = SPECS[u.dtype]
    rs = RateSpec(int(rate), spec.q)
    adapter = adapter or SerialAdapter()
    d = u.rank
    blocks, grid = partition_blocks(u)
    n = blocks.shape[0]
    w = rs.block_bits(d, spec.e_bits)
    ranges = _batch_ranges(n, adapter)
    # batch block counts are multiples of 8, so every batch is byte-aligned
    chunks: list[bytes | None] = [None] * len(ranges)

    def encode_batch(job, _scratch):
        idx, (lo, hi) = job
        fixed, e_max, zmask = exp_align(blocks[lo:hi], u.dtype)
        coef = forward_transform(fixed, d)
        bits = bitplane_encode(coef, e_max, zmask, rs, d, u.dtype)
        chunks[idx] = np.packbits(bits).tobytes()

    execute_gem(list(enumerate(ranges)), [ExecStage(ExecKind.GEM, encode_batch)], adapter)
    header = _ZFP_HEADER.pack(d, DTYPE_CODES[u.dtype], rs.rate)
    dims_blob = struct.pack(f"<{d}Q", *u.dims)
    return header + dims_blob + b"".join(chunks)  # type: ignore[arg-type]


def zfp_decompress(data, adapter=None) -> TensorData:
    from .exec_core.tensor import DTYPE_FROM_CODE

    data = memoryview(data)
    if len(data) < _ZFP_HEADER.size:
        raise CorruptStreamError("stream shorter than header")
    d, dtype_code, rate = _ZFP_HEADER.unpack_from(data, 0)
    if d < 1 or d > MAX_BLOCK_RANK or dtype_code not in DTYPE_FROM_CODE:
        raise CorruptStreamError("bad rank or dtype code")
    dtype = DTYPE_FROM_CODE[dtype_code]
    if dtype not in SPECS:
        raise CorruptStreamError("stored dtype is not a float type")
    spec = SPECS[dtype]
    rs = RateSpec(rate, spec.q)
    pos = _ZFP_HEADER.size
    dims = struct.unpack_from(f"<{d}Q", data, pos)
    pos += 8 * d
    adapter = adapter or SerialAdapter()
    grid = tuple((s + BLOCK_SIDE - 1) // BLOCK_SIDE for s in dims)
    n = int(np.prod(grid))
    w = rs.block_bits(d, spec.e_bits)
    need = (n * w + 7) // 8
    if len(data) - pos < need:
        raise CorruptStreamError(f"payload truncated: need {need} bytes")
    packed = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    blocks = np.empty((n, BLOCK_SIDE**d), dtype=np.float64)

    def decode_batch(block_range, _scratch):
        lo, hi = block_range
        nbits = (hi - lo) * w
        sub = packed[lo * w // 8:(lo * w + nbits + 7) // 8]
        bits = np.unpackbits(sub, count=nbits)
        fixed, e_max, zmask = bitplane_decode(bits, hi - lo, rs, d, dtype)
        coef = inverse_transform(fixed, d)
        vals = exp_restore(coef, e_max, dtype)
        vals[zmask] = 0.0
        blocks[lo:hi] = vals

    ranges = _batch_ranges(n, adapter)
    execute_gem(ranges, [ExecStage(ExecKind.GEM, decode_batch)], adapter)
    arr = unpartition_blocks(blocks, grid, tuple(int(s) for s in dims))
    return TensorData(tuple(int(s) for s in dims), dtype,
                      arr.astype(dtype.np_dtype))


def _batch_ranges(n_blocks: int, adapter) -> list[tuple[int, int]]:
    """Contiguous block ranges; multiples of 8 keep bit packing aligned."""
    if n_blocks == 0:
        return []
    per = max(8, min(BATCH_BLOCKS, -(-n_blocks // max(1, adapter.parallelism))))
    per = (per + 7) // 8 * 8
    return [(lo, min(lo + per, n_blocks)) for lo in range(0, n_blocks, per)]
