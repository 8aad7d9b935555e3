"""Nested grid hierarchy for the multilevel decomposition.

Coarsening halves each dimension (n -> floor(n/2) + 1) until it reaches 2;
coarse node i maps to fine index 2i, clamped so the last node is always
retained. Extents of 1 ride along as degenerate dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError


def coarsen(n: int) -> int:
    return n // 2 + 1


@dataclass
class Hierarchy:
    dims: tuple[int, ...]
    total_levels: int
    # level_counts[dim] lists node counts finest first, one entry per level
    level_counts: list[list[int]]
    # index_maps[dim][k] holds finest-grid indices of the nodes that survive
    # k coarsenings (k=0 is the finest level, k=total_levels-1 the coarsest)
    index_maps: list[list[np.ndarray]] = field(repr=False)

    @property
    def finest_level(self) -> int:
        """Levels are indexed finest = total_levels - 1 down to coarsest = 0."""
        return self.total_levels - 1

    def counts_at(self, level: int) -> tuple[int, ...]:
        """Per-dimension node counts at a level (spec indexing, 0 = coarsest)."""
        k = self.finest_level - level
        return tuple(c[k] for c in self.level_counts)

    def maps_at(self, level: int) -> list[np.ndarray]:
        k = self.finest_level - level
        return [m[k] for m in self.index_maps]

    def coarsest_flat_indices(self) -> np.ndarray:
        """Flat positions (row-major over dims) of the coarsest-level nodes."""
        maps = self.maps_at(0)
        mesh = np.meshgrid(*maps, indexing="ij")
        return np.ravel_multi_index([m.ravel() for m in mesh], self.dims).astype(np.uint64)

    def level_element_counts(self) -> list[int]:
        """Element count owned by each level, coarsest first; sums to the total.

        A node is owned by the coarsest level it appears on; finer levels own
        only their fine-only nodes.
        """
        sizes = [int(np.prod(self.counts_at(l))) for l in range(self.total_levels)]
        owned = [sizes[0]]
        for l in range(1, self.total_levels):
            owned.append(sizes[l] - sizes[l - 1])
        return owned


def build_hierarchy(dims) -> Hierarchy:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ValidationError(f"extents must be >= 1, got {dims}")
    n_coarsenings = 0
    for d in dims:
        n, steps = d, 0
        while n > 2:
            n = coarsen(n)
            steps += 1
        n_coarsenings = max(n_coarsenings, steps)
    total_levels = n_coarsenings + 1

    level_counts: list[list[int]] = []
    index_maps: list[list[np.ndarray]] = []
    for d in dims:
        counts = [d]
        maps = [np.arange(d, dtype=np.int64)]
        for _ in range(n_coarsenings):
            n = counts[-1]
            if n <= 2 and d >= 2:
                counts.append(n)
                maps.append(maps[-1].copy())
                continue
            if d == 1:
                counts.append(1)
                maps.append(maps[-1].copy())
                continue
            nc = coarsen(n)
            sel = np.minimum(2 * np.arange(nc, dtype=np.int64), n - 1)
            counts.append(nc)
            maps.append(maps[-1][sel])
        level_counts.append(counts)
        index_maps.append(maps)
    return Hierarchy(dims, total_levels, level_counts, index_maps)
