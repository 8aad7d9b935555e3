"""N-dimensional array descriptor shared by every reduction pipeline."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import ValidationError

MAX_RANK = 4


class DType(Enum):
    F32 = "f32"
    F64 = "f64"
    U32 = "u32"
    U64 = "u64"
    I32 = "i32"
    I64 = "i64"
    U8 = "u8"

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(_NP_DTYPES[self])

    @property
    def itemsize(self) -> int:
        return self.np_dtype.itemsize

    @classmethod
    def from_numpy(cls, dt: np.dtype) -> "DType":
        dt = np.dtype(dt)
        for k, v in _NP_DTYPES.items():
            if np.dtype(v) == dt:
                return k
        raise ValidationError(f"unsupported numpy dtype {dt}")


_NP_DTYPES = {
    DType.F32: "<f4",
    DType.F64: "<f8",
    DType.U32: "<u4",
    DType.U64: "<u8",
    DType.I32: "<i4",
    DType.I64: "<i8",
    DType.U8: "u1",
}

# Stable on-disk codes for the container header.
DTYPE_CODES = {
    DType.F32: 0,
    DType.F64: 1,
    DType.U32: 2,
    DType.U64: 3,
    DType.I32: 4,
    DType.I64: 5,
    DType.U8: 6,
}
DTYPE_FROM_CODE = {v: k for k, v in DTYPE_CODES.items()}


@dataclass
class TensorData:
    """Dense row-major array with logical extents listed slowest-varying first."""

    dims: tuple[int, ...]
    dtype: DType
    values: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if not self.dims:
            raise ValidationError("dims must be non-empty")
        if len(self.dims) > MAX_RANK:
            raise ValidationError(f"rank {len(self.dims)} exceeds maximum {MAX_RANK}")
        if any(d < 1 for d in self.dims):
            raise ValidationError(f"every extent must be >= 1, got {self.dims}")
        if not isinstance(self.values, np.ndarray):
            self.values = np.asarray(self.values, dtype=self.dtype.np_dtype)
        if self.values.dtype != self.dtype.np_dtype:
            raise ValidationError(
                f"values dtype {self.values.dtype} does not match declared {self.dtype}"
            )
        n = int(np.prod(self.dims))
        if self.values.size != n:
            raise ValidationError(
                f"element count {self.values.size} != product(dims) {n}"
            )
        self.values = np.ascontiguousarray(self.values).reshape(self.dims)

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def nbytes(self) -> int:
        return int(self.values.nbytes)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "TensorData":
        dt = DType.from_numpy(arr.dtype)
        return cls(tuple(arr.shape), dt, np.ascontiguousarray(arr))

    def tobytes(self) -> bytes:
        return self.values.tobytes()
