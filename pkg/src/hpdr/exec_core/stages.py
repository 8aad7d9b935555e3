"""Group (GEM) and domain (DEM) execution over a device adapter.

GEM runs independent groups, each with private fast-tier scratch that
persists across the stages of that group. DEM runs every stage across the
whole domain with a barrier between stages: stage k+1 observes all writes
of stage k.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from ..errors import StagingCapacityError, ValidationError
from .adapters import DeviceAdapter, SerialAdapter


class ExecKind(Enum):
    GEM = "gem"
    DEM = "dem"


@dataclass
class ExecStage:
    kind: ExecKind
    work_fn: Callable
    staging_bytes: int = 0


@dataclass
class DemThread:
    """Per-thread view handed to DEM work functions."""

    index: int
    count: int


def _check_kinds(stages: Sequence[ExecStage], kind: ExecKind):
    for s in stages:
        if s.kind is not kind:
            raise ValidationError(
                f"multi-stage sequence mixes kinds: expected {kind}, got {s.kind}"
            )


def execute_gem(groups, stages: Sequence[ExecStage], adapter: DeviceAdapter | None = None):
    """Run ``stages`` group by group; work_fn(group, scratch) per stage.

    Scratch is a uint8 array of the largest staging request and persists
    across the stages of one group. Effect is identical to the serial
    group-major loop regardless of adapter.
    """
    adapter = adapter or SerialAdapter()
    stages = list(stages)
    if not stages:
        return
    _check_kinds(stages, ExecKind.GEM)
    staging = max(int(s.staging_bytes) for s in stages)
    if staging < 0:
        raise ValidationError("staging_bytes must be non-negative")
    if staging > adapter.staging_capacity:
        raise StagingCapacityError(
            f"requested {staging} bytes of group scratch, adapter "
            f"{adapter.name!r} declares {adapter.staging_capacity}"
        )

    def run_group(group):
        scratch = np.zeros(staging, dtype=np.uint8) if staging else None
        for stage in stages:
            stage.work_fn(group, scratch)

    adapter.map_items(run_group, list(groups))


def execute_dem(
    stages: Sequence[ExecStage],
    adapter: DeviceAdapter | None = None,
    n_threads: int | None = None,
):
    """Run each stage over ``n_threads`` logical domain threads with a barrier
    between stages; work_fn(DemThread) coordinates only through disjoint
    writes visible to the next stage."""
    adapter = adapter or SerialAdapter()
    stages = list(stages)
    if not stages:
        return
    _check_kinds(stages, ExecKind.DEM)
    count = int(n_threads) if n_threads else adapter.parallelism
    if count < 1:
        raise ValidationError("n_threads must be >= 1")
    ctxs = [DemThread(i, count) for i in range(count)]
    for stage in stages:
        # map_items joins before returning: the domain-wide barrier.
        adapter.map_items(stage.work_fn, ctxs)


def partition_bounds(n: int, parts: int, index: int) -> tuple[int, int]:
    """[start, stop) of partition ``index`` when n items split into ``parts``."""
    base, rem = divmod(n, parts)
    start = index * base + min(index, rem)
    return start, start + base + (1 if index < rem else 0)


def dem_exclusive_scan(values: np.ndarray, adapter: DeviceAdapter | None = None,
                       n_threads: int | None = None) -> np.ndarray:
    """Exclusive prefix sum as a two-stage DEM execution (exact, integer)."""
    values = np.asarray(values, dtype=np.int64)
    n = values.size
    adapter = adapter or SerialAdapter()
    count = int(n_threads) if n_threads else adapter.parallelism
    count = max(1, min(count, n)) if n else 1
    out = np.zeros(n, dtype=np.int64)
    part_sums = np.zeros(count, dtype=np.int64)

    def local_scan(t: DemThread):
        a, b = partition_bounds(n, t.count, t.index)
        if a < b:
            c = np.cumsum(values[a:b])
            out[a:b] = c - values[a:b]
            part_sums[t.index] = c[-1]

    def apply_offsets(t: DemThread):
        a, b = partition_bounds(n, t.count, t.index)
        offset = int(part_sums[:t.index].sum())
        if a < b and offset:
            out[a:b] += offset

    execute_dem(
        [ExecStage(ExecKind.DEM, local_scan), ExecStage(ExecKind.DEM, apply_offsets)],
        adapter,
        n_threads=count,
    )
    return out
