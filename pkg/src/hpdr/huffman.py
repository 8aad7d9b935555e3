"""Canonical Huffman codec.

Histogram and bitstream serialization run through the domain execution
model; per-block encode and per-unit decode run through the group model so
both parallelize without changing a single output bit. The codebook is
canonical: only the length array is stored and codes are reassigned
deterministically at decode time.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CorruptStreamError, ValidationError
from .exec_core import (
    DemThread,
    ExecKind,
    ExecStage,
    SerialAdapter,
    dem_exclusive_scan,
    execute_dem,
    execute_gem,
    partition_bounds,
)

BLOCK_SYMBOLS = 4096          # encode block = decode unit
MAX_CODE_LEN = 32
MAX_DICT_SIZE = 65535         # length array is indexed by a u16 on disk


@dataclass
class FrequencyTable:
    dict_size: int
    counts: np.ndarray  # int64, one slot per key

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.size != self.dict_size:
            raise ValidationError("counts length must equal dict_size")


@dataclass
class HuffmanCodebook:
    dict_size: int
    lengths: np.ndarray  # uint8, 0 for absent keys
    codes: np.ndarray    # uint32 canonical code values

    @property
    def max_length(self) -> int:
        return int(self.lengths.max(initial=0))

    def present_keys(self) -> np.ndarray:
        return np.nonzero(self.lengths)[0]


@dataclass
class EncodedStream:
    total_bits: int
    packed: np.ndarray        # uint8, MSB-first within each byte
    bit_offsets: np.ndarray   # uint64, bit offset of every BLOCK_SYMBOLS-th symbol
    n_symbols: int


def _as_keys(keys) -> np.ndarray:
    arr = np.ascontiguousarray(keys)
    if arr.dtype.kind not in "ui":
        raise ValidationError(f"keys must be unsigned integers, got {arr.dtype}")
    return arr.reshape(-1)


def histogram(keys, dict_size: int, adapter=None, n_threads: int | None = None) -> FrequencyTable:
    """Key frequencies via two-stage DEM: per-thread partials, then merge."""
    arr = _as_keys(keys)
    dict_size = int(dict_size)
    if dict_size < 1 or dict_size > MAX_DICT_SIZE:
        raise ValidationError(f"dict_size must be in [1, {MAX_DICT_SIZE}]")
    adapter = adapter or SerialAdapter()
    if arr.size and int(arr.max()) >= dict_size:
        raise ValidationError(
            f"key {int(arr.max())} out of range for dict_size {dict_size}"
        )
    n_parts = max(1, min(int(n_threads) if n_threads else adapter.parallelism,
                         max(1, arr.size)))
    partials = np.zeros((n_parts, dict_size), dtype=np.int64)
    counts = np.zeros(dict_size, dtype=np.int64)

    def partial(t: DemThread):
        a, b = partition_bounds(arr.size, t.count, t.index)
        if a < b:
            partials[t.index] = np.bincount(arr[a:b], minlength=dict_size)

    def merge(t: DemThread):
        if t.index == 0:
            counts[:] = partials.sum(axis=0)

    execute_dem(
        [ExecStage(ExecKind.DEM, partial), ExecStage(ExecKind.DEM, merge)],
        adapter,
        n_threads=n_parts,
    )
    return FrequencyTable(dict_size, counts)


def _lengths_in_place(weights: np.ndarray) -> np.ndarray:
    """Optimal codeword lengths from sorted weights, computed in place.

    Classic treeless construction: the sorted array is overwritten first
    with internal-node weights and parent links, then with depths, then
    with leaf lengths. O(n) extra nothing, O(n) time after the sort.
    """
    a = weights.astype(np.int64).tolist()
    n = len(a)
    if n == 1:
        return np.array([1], dtype=np.int64)
    s = 0  # next unmerged leaf
    r = 0  # next unmerged internal node
    for t in range(n - 1):
        # first child
        if s >= n or (r < t and a[r] < a[s]):
            a[t] = a[r]
            a[r] = t
            r += 1
        else:
            a[t] = a[s]
            s += 1
        # second child
        if s >= n or (r < t and a[r] < a[s]):
            a[t] += a[r]
            a[r] = t
            r += 1
        else:
            a[t] += a[s]
            s += 1
    # a[t] for t < n-1 now holds parent indexes after the two passes below
    a[n - 2] = 0
    for t in range(n - 3, -1, -1):
        a[t] = a[a[t]] + 1
    avail = 1
    used = 0
    depth = 0
    t = n - 2  # deepest internal node
    x = n - 1  # next leaf slot to assign (from the back)
    while avail > 0:
        while t >= 0 and a[t] == depth:
            used += 1
            t -= 1
        while avail > used:
            a[x] = depth
            x -= 1
            avail -= 1
        avail = 2 * used
        used = 0
        depth += 1
    return np.array(a, dtype=np.int64)


def build_codebook(freq: FrequencyTable) -> HuffmanCodebook:
    """Two-phase treeless codebook: in-place length computation over the
    sorted nonzero frequencies, then canonical code assignment."""
    counts = freq.counts
    present = np.nonzero(counts > 0)[0]
    if present.size == 0:
        raise ValidationError("frequency table has no nonzero counts")
    lengths = np.zeros(freq.dict_size, dtype=np.uint8)
    if present.size == 1:
        lengths[present[0]] = 1  # single key: length 1 by convention
        codes = np.zeros(freq.dict_size, dtype=np.uint32)
        return HuffmanCodebook(freq.dict_size, lengths, codes)

    # stable ascending sort of (frequency, key), ties broken by key
    order = present[np.argsort(counts[present], kind="stable")]
    leaf_lengths = _lengths_in_place(counts[order].copy())
    # _lengths_in_place returns depths for leaves sorted by descending length;
    # leaves in `order` are ascending by frequency, which matches descending
    # length after the in-place pass (slot i holds the length of leaf i).
    if int(leaf_lengths.max()) > MAX_CODE_LEN:
        raise ValidationError(
            f"codeword length {int(leaf_lengths.max())} exceeds {MAX_CODE_LEN}"
        )
    lengths[order] = leaf_lengths.astype(np.uint8)
    codes = canonical_codes(lengths)
    return HuffmanCodebook(freq.dict_size, lengths, codes)


def canonical_codes(lengths: np.ndarray) -> np.ndarray:
    """Assign code values in (length, key) order; shorter codes sort first."""
    lengths = np.asarray(lengths)
    codes = np.zeros(lengths.size, dtype=np.uint32)
    present = np.nonzero(lengths)[0]
    if present.size == 0:
        return codes
    order = present[np.lexsort((present, lengths[present]))]
    code = 0
    prev_len = int(lengths[order[0]])
    for key in order:
        ln = int(lengths[key])
        code <<= ln - prev_len
        codes[key] = code
        code += 1
        prev_len = ln
    return codes


def _decode_tables(codebook: HuffmanCodebook):
    """first_code/first_rank per length plus symbols ranked by (length, key)."""
    lengths = codebook.lengths
    present = np.nonzero(lengths)[0]
    order = present[np.lexsort((present, lengths[present]))]
    max_len = codebook.max_length
    bl_count = np.bincount(lengths[present].astype(np.int64), minlength=max_len + 2)
    first_code = np.zeros(max_len + 2, dtype=np.int64)
    first_rank = np.zeros(max_len + 2, dtype=np.int64)
    code = 0
    rank = 0
    for ln in range(1, max_len + 1):
        if ln > 1:
            code <<= 1
        first_code[ln] = code
        first_rank[ln] = rank
        code += int(bl_count[ln])
        rank += int(bl_count[ln])
    return first_code, first_rank, bl_count.astype(np.int64), order.astype(np.uint32), max_len


def encode(keys, codebook: HuffmanCodebook, adapter=None) -> list[np.ndarray]:
    """Encode fixed-size symbol blocks independently.

    Returns one fragment per block of BLOCK_SYMBOLS symbols: a uint8 array
    of bit values (MSB of each codeword first). Fragment lengths sum to
    sum(freq_k * len_k).
    """
    arr = _as_keys(keys)
    adapter = adapter or SerialAdapter()
    if arr.size and int(arr.max()) >= codebook.dict_size:
        raise ValidationError("key out of codebook range")
    sym_lengths = codebook.lengths[arr].astype(np.int64)
    if arr.size and int(sym_lengths.min()) == 0:
        missing = int(arr[sym_lengths == 0][0])
        raise ValidationError(f"key {missing} has no codeword")
    sym_codes = codebook.codes[arr].astype(np.uint64)

    n_blocks = (arr.size + BLOCK_SYMBOLS - 1) // BLOCK_SYMBOLS
    fragments: list[np.ndarray | None] = [None] * max(n_blocks, 0)

    def encode_range(block_range, _scratch):
        for b in range(block_range[0], block_range[1]):
            lo = b * BLOCK_SYMBOLS
            hi = min(lo + BLOCK_SYMBOLS, arr.size)
            fragments[b] = _expand_bits(sym_codes[lo:hi], sym_lengths[lo:hi])

    if n_blocks:
        n_groups = max(1, min(adapter.parallelism * 4, n_blocks))
        ranges = [partition_bounds(n_blocks, n_groups, g) for g in range(n_groups)]
        execute_gem(ranges, [ExecStage(ExecKind.GEM, encode_range)], adapter)
    return [f for f in fragments if f is not None] if n_blocks else []


def _expand_bits(codes: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.uint8)
    ends = np.cumsum(lengths)
    starts = ends - lengths
    j = np.arange(total, dtype=np.int64) - np.repeat(starts, lengths)
    shift = (np.repeat(lengths, lengths) - 1 - j).astype(np.uint64)
    bits = (np.repeat(codes, lengths) >> shift) & np.uint64(1)
    return bits.astype(np.uint8)


def serialize(fragments, adapter=None) -> EncodedStream:
    """Pack fragments into one MSB-first bit buffer.

    Write offsets come from an exclusive prefix sum over fragment bit
    lengths; the prefix sums themselves are kept as the decode-unit index.
    """
    fragments = list(fragments)
    lengths = np.array([f.size for f in fragments], dtype=np.int64)
    offsets = dem_exclusive_scan(lengths, adapter) if fragments else np.zeros(0, np.int64)
    total_bits = int(lengths.sum())
    n_symbols = 0  # callers that need it set it; see huffman_compress
    if total_bits:
        bits = np.concatenate(fragments)
        packed = np.packbits(bits)
    else:
        packed = np.zeros(0, dtype=np.uint8)
    return EncodedStream(total_bits, packed, offsets.astype(np.uint64), n_symbols)


@njit(cache=True, nogil=True)
def _decode_unit(packed, limit_bits, start_bit, n_syms, first_code, first_rank,
                 len_counts, sym_by_rank, max_len, out, out_start):
    """Walk one decode unit; returns -1 on success, else the bit offset of the
    codeword that failed to resolve."""
    pos = start_bit
    for i in range(n_syms):
        cw_start = pos
        code = np.int64(0)
        length = 0
        while True:
            if pos >= limit_bits or length >= max_len:
                return cw_start
            bit = (np.int64(packed[pos >> 3]) >> (7 - (pos & 7))) & 1
            code = (code << 1) | bit
            pos += 1
            length += 1
            idx = code - first_code[length]
            if 0 <= idx < len_counts[length]:
                out[out_start + i] = sym_by_rank[first_rank[length] + idx]
                break
    return -1


def decode(stream: EncodedStream, codebook: HuffmanCodebook, adapter=None,
           n_symbols: int | None = None) -> np.ndarray:
    """Decode a packed stream back to keys, unit by unit.

    Units are independently decodable from their recorded bit offsets, so
    groups of units run in parallel; an invalid prefix raises with the bit
    offset where decoding failed.
    """
    adapter = adapter or SerialAdapter()
    n = int(n_symbols if n_symbols is not None else stream.n_symbols)
    if n == 0:
        return np.zeros(0, dtype=np.uint32)
    n_units = (n + BLOCK_SYMBOLS - 1) // BLOCK_SYMBOLS
    if stream.bit_offsets.size < n_units:
        raise CorruptStreamError(
            f"stream has {stream.bit_offsets.size} decode units, need {n_units}"
        )
    first_code, first_rank, len_counts, sym_by_rank, max_len = _decode_tables(codebook)
    out = np.empty(n, dtype=np.uint32)
    errors = np.full(n_units, -2, dtype=np.int64)
    packed = stream.packed
    limit = int(stream.total_bits)
    if limit > packed.size * 8:
        raise CorruptStreamError(f"total_bits {limit} exceeds buffer", bit_offset=packed.size * 8)

    def decode_range(unit_range, _scratch):
        for u in range(unit_range[0], unit_range[1]):
            lo = u * BLOCK_SYMBOLS
            cnt = min(BLOCK_SYMBOLS, n - lo)
            errors[u] = _decode_unit(
                packed, limit, int(stream.bit_offsets[u]), cnt,
                first_code, first_rank, len_counts, sym_by_rank,
                max_len, out, lo,
            )

    n_groups = max(1, min(adapter.parallelism * 4, n_units))
    ranges = [partition_bounds(n_units, n_groups, g) for g in range(n_groups)]
    execute_gem(ranges, [ExecStage(ExecKind.GEM, decode_range)], adapter)
    bad = np.nonzero(errors >= 0)[0]
    if bad.size:
        off = int(errors[bad[0]])
        raise CorruptStreamError(f"invalid or truncated codeword at bit {off}", bit_offset=off)
    return out


_HEADER = struct.Struct("<HQ")   # dict_size, symbol count
_UNITS = struct.Struct("<I")     # decode-unit count
_TOTAL = struct.Struct("<Q")     # total_bits


def huffman_compress(keys, dict_size: int, adapter=None) -> bytes:
    """Self-contained stream: codebook stored as the length array only.

    Layout (little-endian): dict_size u16, symbol count u64, lengths
    dict_size x u8, decode-unit count u32, bit offsets u64 each,
    total_bits u64, packed bits MSB-first.
    """
    arr = _as_keys(keys)
    freq = histogram(arr, dict_size, adapter)
    out = bytearray()
    out += _HEADER.pack(int(dict_size), arr.size)
    if arr.size == 0:
        out += bytes(int(dict_size))
        out += _UNITS.pack(0)
        out += _TOTAL.pack(0)
        return bytes(out)
    codebook = build_codebook(freq)
    out += codebook.lengths.tobytes()
    if np.count_nonzero(freq.counts) == 1:
        # Single distinct key: the length array already identifies it, so the
        # payload is empty and decode reproduces it by count.
        out += _UNITS.pack(0)
        out += _TOTAL.pack(0)
        return bytes(out)
    fragments = encode(arr, codebook, adapter)
    stream = serialize(fragments, adapter)
    out += _UNITS.pack(stream.bit_offsets.size)
    out += stream.bit_offsets.astype("<u8").tobytes()
    out += _TOTAL.pack(stream.total_bits)
    out += stream.packed.tobytes()
    return bytes(out)


def huffman_decompress(data, adapter=None) -> np.ndarray:
    data = memoryview(data)
    need = _HEADER.size
    if len(data) < need:
        raise CorruptStreamError("stream shorter than fixed header")
    dict_size, n_symbols = _HEADER.unpack_from(data, 0)
    pos = _HEADER.size
    if len(data) < pos + dict_size + _UNITS.size:
        raise CorruptStreamError("stream truncated in length array")
    lengths = np.frombuffer(data, dtype=np.uint8, count=dict_size, offset=pos).copy()
    pos += dict_size
    (n_units,) = _UNITS.unpack_from(data, pos)
    pos += _UNITS.size
    if len(data) < pos + 8 * n_units + _TOTAL.size:
        raise CorruptStreamError("stream truncated in decode-unit index")
    offsets = np.frombuffer(data, dtype="<u8", count=n_units, offset=pos).copy()
    pos += 8 * n_units
    (total_bits,) = _TOTAL.unpack_from(data, pos)
    pos += _TOTAL.size
    if n_symbols == 0:
        return np.zeros(0, dtype=np.uint32)
    present = np.nonzero(lengths)[0]
    if present.size == 0:
        raise CorruptStreamError("no codewords in stored length array")
    if n_units == 0 and total_bits == 0:
        if present.size != 1:
            raise CorruptStreamError("empty payload with multi-key codebook")
        return np.full(n_symbols, present[0], dtype=np.uint32)
    packed_bytes = (int(total_bits) + 7) // 8
    if len(data) < pos + packed_bytes:
        raise CorruptStreamError(
            "stream truncated in packed bits", bit_offset=(len(data) - pos) * 8
        )
    packed = np.frombuffer(data, dtype=np.uint8, count=packed_bytes, offset=pos).copy()
    codebook = HuffmanCodebook(dict_size, lengths, canonical_codes(lengths))
    stream = EncodedStream(int(total_bits), packed, offsets, int(n_symbols))
    return decode(stream, codebook, adapter)
