"""Multilevel decomposition: interpolation residuals plus L2 correction.

Each level-to-coarser transition computes residuals against multilinear
interpolation from the coarse nodes, then projects them onto the coarse
space: a transfer-mass application (fine tridiagonal mass multiply followed
by prolongation-transpose restriction) and a dimension-wise tridiagonal
solve against the coarse mass matrix. Mass weights use piecewise-linear
basis overlap with physical node distances, which halves the diagonal at
boundaries. Recomposition replays the same correction from the stored
residuals, so the pair inverts to floating-point rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..exec_core import (
    Context,
    DType,
    ExecKind,
    ExecStage,
    SerialAdapter,
    TensorData,
    execute_gem,
    partition_bounds,
)
from .hierarchy import Hierarchy


@dataclass
class CoefficientSet:
    """Flat multilevel coefficients: residuals in place at their owning level's
    fine-only positions, coarsest nodal values at coarsest positions."""

    dims: tuple[int, ...]
    values: np.ndarray            # float64, shaped dims
    level_counts: list[int]       # elements owned per level, coarsest first
    u_min: float
    u_max: float
    source_dtype: DType = DType.F64


@dataclass
class AxisOps:
    """Per (level transition, dimension) stencils and factorizations."""

    n_fine: int
    n_coarse: int
    sel: np.ndarray               # coarse node positions within the fine level
    fo: np.ndarray                # fine-only positions
    ai: np.ndarray                # left coarse neighbor (coarse indexing)
    bi: np.ndarray                # right coarse neighbor (coarse indexing)
    t: np.ndarray                 # interpolation weight toward the right neighbor
    fine_mass: tuple[np.ndarray, np.ndarray, np.ndarray]
    thomas: tuple[np.ndarray, np.ndarray, np.ndarray]  # (w, b', upper) of coarse mass


@dataclass
class LevelPlan:
    """AxisOps per transition; index 0 is the finest-to-next transition."""

    steps: list[list[AxisOps | None]] = field(default_factory=list)


def _mass_tridiag(coords: np.ndarray):
    """Piecewise-linear mass matrix bands from physical node positions."""
    h = np.diff(coords).astype(np.float64)
    n = coords.size
    diag = np.zeros(n)
    diag[:-1] += h / 3.0
    diag[1:] += h / 3.0
    lower = np.zeros(n)
    lower[1:] = h / 6.0
    upper = np.zeros(n)
    upper[:-1] = h / 6.0
    return lower, diag, upper


def _thomas_factors(mass):
    lower, diag, upper = mass
    n = diag.size
    w = np.zeros(n)
    bp = diag.copy()
    for i in range(1, n):
        w[i] = lower[i] / bp[i - 1]
        bp[i] = diag[i] - w[i] * upper[i - 1]
    return w, bp, upper


def _axis_ops(fine_coords: np.ndarray, coarse_coords: np.ndarray) -> AxisOps | None:
    n = fine_coords.size
    nc = coarse_coords.size
    if n == nc:
        return None
    sel = np.minimum(2 * np.arange(nc, dtype=np.int64), n - 1)
    mask = np.ones(n, dtype=bool)
    mask[sel] = False
    fo = np.nonzero(mask)[0]
    ai = (fo - 1) // 2
    bi = np.where(fo + 1 == n - 1, nc - 1, (fo + 1) // 2)
    xa = coarse_coords[ai].astype(np.float64)
    xb = coarse_coords[bi].astype(np.float64)
    xj = fine_coords[fo].astype(np.float64)
    t = (xj - xa) / (xb - xa)
    return AxisOps(
        n_fine=n,
        n_coarse=nc,
        sel=sel,
        fo=fo,
        ai=ai,
        bi=bi,
        t=t,
        fine_mass=_mass_tridiag(fine_coords),
        thomas=_thomas_factors(_mass_tridiag(coarse_coords)),
    )


def build_plan(h: Hierarchy) -> LevelPlan:
    plan = LevelPlan()
    for level in range(h.finest_level, 0, -1):
        fine_maps = h.maps_at(level)
        coarse_maps = h.maps_at(level - 1)
        plan.steps.append(
            [_axis_ops(f, c) for f, c in zip(fine_maps, coarse_maps)]
        )
    return plan


# ---- axis-wise kernels (rows layout: lines along the active axis) ----


def _to_rows(arr: np.ndarray, axis: int):
    moved = np.moveaxis(arr, axis, -1)
    shape = moved.shape
    return np.ascontiguousarray(moved).reshape(-1, shape[-1]), shape


def _from_rows(rows: np.ndarray, shape, axis: int):
    return np.moveaxis(rows.reshape(shape), -1, axis)


def _gem_rows(rows: np.ndarray, kernel, adapter):
    """Run kernel(row_slice) over contiguous row groups through GEM."""
    n = rows.shape[0]
    groups = max(1, min(adapter.parallelism * 4, n))
    bounds = [partition_bounds(n, groups, g) for g in range(groups)]

    def work(rg, _scratch):
        lo, hi = rg
        if lo < hi:
            kernel(rows[lo:hi])

    execute_gem(bounds, [ExecStage(ExecKind.GEM, work)], adapter)


def _prolong_axis(coarse: np.ndarray, ops: AxisOps, axis: int, adapter) -> np.ndarray:
    rows, shape = _to_rows(coarse, axis)
    out = np.empty((rows.shape[0], ops.n_fine), dtype=np.float64)
    n = rows.shape[0]
    groups = max(1, min(adapter.parallelism * 4, n))
    bounds = [partition_bounds(n, groups, g) for g in range(groups)]

    def work(rg, _scratch):
        lo, hi = rg
        if lo >= hi:
            return
        src = rows[lo:hi]
        dst = out[lo:hi]
        dst[:, ops.sel] = src
        va = src[:, ops.ai]
        vb = src[:, ops.bi]
        # va + t*(vb - va) is exact for equal endpoints
        dst[:, ops.fo] = va + ops.t * (vb - va)

    execute_gem(bounds, [ExecStage(ExecKind.GEM, work)], adapter)
    return _from_rows(out, shape[:-1] + (ops.n_fine,), axis)


def _restrict_axis(fine: np.ndarray, ops: AxisOps, axis: int, adapter) -> np.ndarray:
    """Prolongation transpose: coarse nodes gather their own value plus the
    weighted fine-only contributions (each coarse node sees at most one
    neighbor from each side, so plain fancy indexing is exact)."""
    rows, shape = _to_rows(fine, axis)
    out = np.empty((rows.shape[0], ops.n_coarse), dtype=np.float64)
    n = rows.shape[0]
    groups = max(1, min(adapter.parallelism * 4, n))
    bounds = [partition_bounds(n, groups, g) for g in range(groups)]

    def work(rg, _scratch):
        lo, hi = rg
        if lo >= hi:
            return
        src = rows[lo:hi]
        dst = out[lo:hi]
        dst[:] = src[:, ops.sel]
        contrib = src[:, ops.fo]
        dst[:, ops.ai] += (1.0 - ops.t) * contrib
        dst[:, ops.bi] += ops.t * contrib

    execute_gem(bounds, [ExecStage(ExecKind.GEM, work)], adapter)
    return _from_rows(out, shape[:-1] + (ops.n_coarse,), axis)


def _mass_mult_axis(arr: np.ndarray, ops: AxisOps, axis: int, adapter) -> np.ndarray:
    lower, diag, upper = ops.fine_mass
    rows, shape = _to_rows(arr, axis)
    out = np.empty_like(rows)

    n = rows.shape[0]
    groups = max(1, min(adapter.parallelism * 4, n))
    bounds = [partition_bounds(n, groups, g) for g in range(groups)]

    def work(rg, _scratch):
        lo, hi = rg
        if lo >= hi:
            return
        x = rows[lo:hi]
        y = out[lo:hi]
        y[:] = diag * x
        y[:, 1:] += lower[1:] * x[:, :-1]
        y[:, :-1] += upper[:-1] * x[:, 1:]

    execute_gem(bounds, [ExecStage(ExecKind.GEM, work)], adapter)
    return _from_rows(out, shape, axis)


def _thomas_solve_axis(arr: np.ndarray, ops: AxisOps, axis: int, adapter) -> np.ndarray:
    """Tridiagonal solve per line via the iterative abstraction: lines are
    batched into groups and each group sweeps sequentially along the axis."""
    w, bp, upper = ops.thomas
    rows, shape = _to_rows(arr, axis)
    n = rows.shape[1]

    def kernel(x):
        for i in range(1, n):
            x[:, i] -= w[i] * x[:, i - 1]
        x[:, n - 1] /= bp[n - 1]
        for i in range(n - 2, -1, -1):
            x[:, i] -= upper[i] * x[:, i + 1]
            x[:, i] /= bp[i]

    _gem_rows(rows, kernel, adapter)
    return _from_rows(rows, shape, axis)


# ---- level driver ----


def _active(steps: list[AxisOps | None]):
    return [(d, op) for d, op in enumerate(steps) if op is not None]


def _correction(mc: np.ndarray, steps: list[AxisOps | None], adapter) -> np.ndarray:
    b = mc
    for axis, ops in _active(steps):
        b = _restrict_axis(_mass_mult_axis(b, ops, axis, adapter), ops, axis, adapter)
    for axis, ops in _active(steps):
        b = _thomas_solve_axis(b, ops, axis, adapter)
    return b


def _interpolate(coarse: np.ndarray, steps: list[AxisOps | None], adapter) -> np.ndarray:
    pred = coarse
    for axis, ops in _active(steps):
        pred = _prolong_axis(pred, ops, axis, adapter)
    return pred


def _coarse_selector(steps: list[AxisOps | None], shape) -> tuple:
    sels = []
    for d, op in enumerate(steps):
        if op is None:
            sels.append(np.arange(shape[d], dtype=np.int64))
        else:
            sels.append(op.sel)
    return np.ix_(*sels)


def _plan_for(h: Hierarchy, ctx: Context | None) -> LevelPlan:
    if ctx is not None:
        return ctx.cached("level_plan", lambda: build_plan(h))
    return build_plan(h)


def decompose(u: TensorData, h: Hierarchy, adapter=None, ctx: Context | None = None) -> CoefficientSet:
    """Split nodal values into multilevel residuals plus corrected coarse values.

    With a context, the returned buffer aliases persistent context memory and
    stays valid until the next reduction on that context.
    """
    if u.dims != h.dims:
        raise ValidationError(f"dims {u.dims} do not match hierarchy {h.dims}")
    if u.dtype not in (DType.F32, DType.F64):
        raise ValidationError("decomposition requires F32 or F64 input")
    adapter = adapter or SerialAdapter()
    plan = _plan_for(h, ctx)
    if ctx is not None:
        work = ctx.array("nodal_work", u.dims, np.float64)
        np.copyto(work, u.values)
    else:
        work = u.values.astype(np.float64, copy=True)
    vmin = float(u.values.min())
    vmax = float(u.values.max())
    for step_idx, level in enumerate(range(h.finest_level, 0, -1)):
        steps = plan.steps[step_idx]
        fine_ix = np.ix_(*h.maps_at(level))
        sub = work[fine_ix]
        coarse = sub[_coarse_selector(steps, sub.shape)]
        pred = _interpolate(coarse, steps, adapter)
        mc = sub - pred
        corr = _correction(mc, steps, adapter)
        work[fine_ix] = mc
        work[np.ix_(*h.maps_at(level - 1))] = coarse + corr
    return CoefficientSet(
        dims=u.dims,
        values=work,
        level_counts=h.level_element_counts(),
        u_min=vmin,
        u_max=vmax,
        source_dtype=u.dtype,
    )


def recompose(c: CoefficientSet, h: Hierarchy, adapter=None, ctx: Context | None = None) -> np.ndarray:
    """Exact algebraic inverse of decompose up to floating-point rounding."""
    if tuple(c.dims) != h.dims:
        raise ValidationError(f"dims {c.dims} do not match hierarchy {h.dims}")
    adapter = adapter or SerialAdapter()
    plan = _plan_for(h, ctx)
    if ctx is not None:
        work = ctx.array("recompose_work", h.dims, np.float64)
        np.copyto(work, c.values)
    else:
        work = np.asarray(c.values, dtype=np.float64).copy()
    for step_idx, level in zip(range(h.total_levels - 2, -1, -1), range(1, h.total_levels)):
        steps = plan.steps[step_idx]
        fine_ix = np.ix_(*h.maps_at(level))
        sub = work[fine_ix]
        coarse_sel = _coarse_selector(steps, sub.shape)
        mc = sub.copy()
        mc[coarse_sel] = 0.0
        corr = _correction(mc, steps, adapter)
        coarse_vals = work[np.ix_(*h.maps_at(level - 1))] - corr
        pred = _interpolate(coarse_vals, steps, adapter)
        work[fine_ix] = pred + mc
    return work
