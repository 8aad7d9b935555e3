"""Overlap-optimized host/device pipeline with a discrete-event oracle."""

from .models import ThroughputModel, TransportModel, fit_throughput_model, next_chunk_size
from .plan import Direction, PipelinePlan, Task, TaskKind, build_plan, validate_plan
from .runner import (
    AdaptiveChunking,
    FixedChunking,
    HdemConfig,
    run_pipeline,
    run_reconstruct,
    sequential_reduce,
)
from .simulate import (
    PipelineTrace,
    TraceEntry,
    buffer_conflicts,
    overlap_ratio,
    simulate_makespan,
)

__all__ = [
    "AdaptiveChunking",
    "Direction",
    "FixedChunking",
    "HdemConfig",
    "PipelinePlan",
    "PipelineTrace",
    "Task",
    "TaskKind",
    "ThroughputModel",
    "TraceEntry",
    "TransportModel",
    "buffer_conflicts",
    "build_plan",
    "fit_throughput_model",
    "next_chunk_size",
    "overlap_ratio",
    "run_pipeline",
    "run_reconstruct",
    "sequential_reduce",
    "simulate_makespan",
    "validate_plan",
]
