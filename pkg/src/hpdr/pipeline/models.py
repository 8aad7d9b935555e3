"""Chunk-size scheduling models.

The reduction throughput model is a two-piece roofline: linear ramp below a
saturation size, constant above it. The transport model is a single
cost-per-byte, optionally tracked as an exponential moving average of
observed copies. Together they drive the adaptive chunk-size rule: the next
chunk is whatever can be copied while the current chunk computes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

FIT_CUTOFF_DEFAULT = 0.1
# relative slack when deciding a sample already sits on the saturated plateau
SATURATION_TOL = 0.05


@dataclass
class ThroughputModel:
    alpha: float          # ramp slope, (bytes/s) per byte of chunk
    beta_slope: float     # ramp intercept, bytes/s
    gamma: float          # saturated throughput, bytes/s
    c_threshold: float    # chunk size where the ramp meets the plateau
    f: float = FIT_CUTOFF_DEFAULT

    def phi(self, chunk_bytes: float) -> float:
        c = float(chunk_bytes)
        p = self.alpha * c + self.beta_slope if c < self.c_threshold else self.gamma
        if p <= 0:
            raise ValidationError(f"throughput model non-positive at {chunk_bytes}")
        return p

    @classmethod
    def saturated(cls, gamma: float) -> "ThroughputModel":
        return cls(alpha=0.0, beta_slope=float(gamma), gamma=float(gamma), c_threshold=0.0)


@dataclass
class TransportModel:
    beta_copy: float          # seconds per byte, host-device copy cost
    ema_weight: float = 0.25

    def __post_init__(self):
        if self.beta_copy <= 0:
            raise ValidationError("beta_copy must be > 0")

    def theta(self, seconds: float) -> float:
        """Largest transferable size within a time budget."""
        return float(seconds) / self.beta_copy

    def observe(self, nbytes: int, seconds: float):
        """Fold one observed copy into the moving average."""
        if nbytes <= 0 or seconds <= 0:
            return
        sample = seconds / nbytes
        self.beta_copy += self.ema_weight * (sample - self.beta_copy)


def next_chunk_size(c_curr: int, model: ThroughputModel, transport: TransportModel,
                    c_limit: int, size_rest: int, slab_bytes: int = 1) -> int:
    """min(theta(c/phi(c)), c_limit, size_rest), floored to whole slabs.

    Never returns 0 unless nothing remains.
    """
    if size_rest <= 0:
        return 0
    if c_curr <= 0:
        raise ValidationError("c_curr must be > 0")
    raw = transport.theta(c_curr / model.phi(c_curr))
    c_next = min(raw, float(c_limit), float(size_rest))
    slabs = int(c_next // slab_bytes)
    slabs = max(1, slabs)
    return int(min(slabs * slab_bytes, size_rest))


def fit_throughput_model(samples, f: float = FIT_CUTOFF_DEFAULT) -> ThroughputModel:
    """Fit the roofline from (chunk size, throughput) profile points.

    The largest chunk's throughput fixes the plateau. Scanning down in size,
    points below the plateau form the ramp; points that have dropped under
    f * plateau are excluded. The threshold is where the fitted ramp meets
    the plateau.
    """
    pts = sorted((float(c), float(p)) for c, p in samples)
    if len(pts) < 3:
        raise ValidationError("need at least 3 profile samples")
    sizes = np.array([c for c, _ in pts])
    thr = np.array([p for _, p in pts])
    if np.unique(sizes).size == 1:
        raise ValidationError("degenerate profile: all sizes equal")
    gamma = float(thr[-1])
    if gamma <= 0:
        raise ValidationError("non-positive saturated throughput")

    ramp = []
    for c, p in reversed(pts[:-1]):
        if p >= gamma * (1.0 - SATURATION_TOL):
            continue  # still on the plateau
        if p < f * gamma:
            break  # first point under the cutoff is excluded, stop scanning
        ramp.append((c, p))
    if len(ramp) >= 2:
        rc = np.array([c for c, _ in ramp])
        rp = np.array([p for _, p in ramp])
        alpha, beta = np.polyfit(rc, rp, 1)
        alpha = float(alpha)
        beta = float(beta)
        if alpha > 0:
            c_threshold = (gamma - beta) / alpha
        else:
            alpha, beta, c_threshold = 0.0, gamma, float(sizes[0])
    else:
        # everything saturated: constant model
        alpha, beta, c_threshold = 0.0, gamma, float(sizes[0])
    return ThroughputModel(alpha=alpha, beta_slope=beta, gamma=gamma,
                           c_threshold=float(c_threshold), f=float(f))
