"""Linear quantization of multilevel coefficients.

Residuals map to zigzagged bins of a uniform width derived from the error
bound; bins outside the dictionary range go to an outlier list. Coarsest
nodal values are kept losslessly so degenerate fields (constant input,
range zero) reconstruct exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..exec_core import DType
from .hierarchy import Hierarchy
from .transform import CoefficientSet

DEFAULT_DICT_SIZE = 4096
# quantized bins must stay well inside int64
_BIN_LIMIT = float(2**62)


def zigzag(bins: np.ndarray) -> np.ndarray:
    b = bins.astype(np.int64)
    return ((b << 1) ^ (b >> 63)).astype(np.uint64)


def unzigzag(keys: np.ndarray) -> np.ndarray:
    k = keys.astype(np.uint64)
    return ((k >> np.uint64(1)).astype(np.int64)) ^ -(k & np.uint64(1)).astype(np.int64)


@dataclass
class QuantizedSet:
    dims: tuple[int, ...]
    keys: np.ndarray            # uint32, one per element; coarsest slots hold 0
    outlier_idx: np.ndarray     # uint64 flat indices
    outlier_bins: np.ndarray    # int64 signed bins
    coarse_values: np.ndarray   # float64, raw coarsest nodal values
    bin_width: float
    eb_abs: float
    dict_size: int
    u_min: float
    u_max: float
    total_levels: int
    source_dtype: DType = DType.F64


def quantize(c: CoefficientSet, h: Hierarchy, eb_rel: float,
             dict_size: int = DEFAULT_DICT_SIZE,
             value_range: tuple[float, float] | None = None) -> QuantizedSet:
    """Map coefficients to keys and outliers at bin width 2*eb_abs/levels.

    ``value_range`` overrides the captured data range (used when a chunk must
    honor a bound derived from the whole domain).
    """
    eb_rel = float(eb_rel)
    if not (0.0 < eb_rel < 1.0):
        raise ValidationError(f"eb_rel must be in (0, 1), got {eb_rel}")
    if dict_size < 2 or dict_size > 65535:
        raise ValidationError(f"dict_size must be in [2, 65535], got {dict_size}")
    values = np.asarray(c.values, dtype=np.float64).reshape(-1)
    if not np.isfinite(values).all():
        raise ValidationError("coefficients contain non-finite values")
    vmin, vmax = (c.u_min, c.u_max) if value_range is None else map(float, value_range)
    eb_abs = eb_rel * (vmax - vmin)
    bin_width = 2.0 * eb_abs / h.total_levels if eb_abs > 0 else 1.0

    coarse_idx = h.coarsest_flat_indices()
    coarse_values = values[coarse_idx].copy()

    scaled = values / bin_width
    if np.abs(scaled).max(initial=0.0) >= _BIN_LIMIT:
        raise ValidationError("coefficient exceeds representable bin range")
    bins = np.rint(scaled).astype(np.int64)
    bins[coarse_idx] = 0  # carried raw instead

    half = dict_size // 2
    out_mask = np.abs(bins) >= half
    outlier_idx = np.nonzero(out_mask)[0].astype(np.uint64)
    outlier_bins = bins[out_mask].copy()
    bins[out_mask] = 0
    keys = zigzag(bins).astype(np.uint32)
    return QuantizedSet(
        dims=c.dims,
        keys=keys,
        outlier_idx=outlier_idx,
        outlier_bins=outlier_bins,
        coarse_values=coarse_values,
        bin_width=float(bin_width),
        eb_abs=float(eb_abs),
        dict_size=int(dict_size),
        u_min=vmin,
        u_max=vmax,
        total_levels=h.total_levels,
        source_dtype=c.source_dtype,
    )


def dequantize(q: QuantizedSet, h: Hierarchy) -> CoefficientSet:
    """Rebuild approximate coefficients; every bin reconstructs exactly."""
    keys = np.asarray(q.keys)
    if keys.size != int(np.prod(q.dims)):
        raise ValidationError("key count does not match dims")
    if keys.size and int(keys.max()) >= q.dict_size:
        raise ValidationError(
            f"key {int(keys.max())} out of range for dict_size {q.dict_size}"
        )
    bins = unzigzag(keys.astype(np.uint64))
    values = bins.astype(np.float64) * q.bin_width
    if q.outlier_idx.size:
        values[q.outlier_idx.astype(np.int64)] = (
            q.outlier_bins.astype(np.float64) * q.bin_width
        )
    coarse_idx = h.coarsest_flat_indices().astype(np.int64)
    values[coarse_idx] = q.coarse_values
    return CoefficientSet(
        dims=q.dims,
        values=values.reshape(q.dims),
        level_counts=h.level_element_counts(),
        u_min=q.u_min,
        u_max=q.u_max,
        source_dtype=q.source_dtype,
    )
