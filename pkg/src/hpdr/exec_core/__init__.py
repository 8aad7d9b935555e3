"""Execution core: parallel abstractions, device adapters, and the context cache."""

from .adapters import DeviceAdapter, SerialAdapter, ThreadedCpuAdapter, default_adapter
from .blocks import Block, BlockSet, decompose_blocks
from .context import Context, ContextCache, ContextKey
from .stages import (
    DemThread,
    ExecKind,
    ExecStage,
    dem_exclusive_scan,
    execute_dem,
    execute_gem,
    partition_bounds,
)
from .tensor import DType, TensorData

__all__ = [
    "Block",
    "BlockSet",
    "Context",
    "ContextCache",
    "ContextKey",
    "DType",
    "DemThread",
    "DeviceAdapter",
    "ExecKind",
    "ExecStage",
    "SerialAdapter",
    "TensorData",
    "ThreadedCpuAdapter",
    "decompose_blocks",
    "default_adapter",
    "dem_exclusive_scan",
    "execute_dem",
    "execute_gem",
    "partition_bounds",
]
