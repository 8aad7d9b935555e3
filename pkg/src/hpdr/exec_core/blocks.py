"""Block decomposition with halos for the locality abstraction."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from ..errors import ValidationError


@dataclass(frozen=True)
class Block:
    origin: tuple[int, ...]
    core_extent: tuple[int, ...]
    halo_origin: tuple[int, ...]
    halo_extent: tuple[int, ...]

    def core_slices(self) -> tuple[slice, ...]:
        return tuple(slice(o, o + e) for o, e in zip(self.origin, self.core_extent))

    def halo_slices(self) -> tuple[slice, ...]:
        return tuple(
            slice(o, o + e) for o, e in zip(self.halo_origin, self.halo_extent)
        )


@dataclass
class BlockSet:
    dims: tuple[int, ...]
    block_shape: tuple[int, ...]
    halo: tuple[int, ...]
    blocks: list[Block]

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)


def decompose_blocks(dims, block_shape, halo) -> BlockSet:
    """Tile ``dims`` with ``block_shape`` cores, expanding each by ``halo``.

    Cores partition the index space exactly; halo regions are clamped at the
    domain boundary. Blocks are ordered lexicographically by origin.
    """
    dims = tuple(int(d) for d in dims)
    block_shape = tuple(int(b) for b in block_shape)
    halo = tuple(int(h) for h in halo)
    if not (len(dims) == len(block_shape) == len(halo)):
        raise ValidationError(
            f"rank mismatch: dims {len(dims)}, block {len(block_shape)}, halo {len(halo)}"
        )
    if any(d < 1 for d in dims):
        raise ValidationError(f"zero extent in dims {dims}")
    if any(b < 1 for b in block_shape):
        raise ValidationError(f"block extents must be >= 1, got {block_shape}")
    if any(h < 0 for h in halo):
        raise ValidationError(f"halo must be non-negative, got {halo}")

    per_dim_origins = [range(0, d, b) for d, b in zip(dims, block_shape)]
    blocks = []
    for origin in itertools.product(*per_dim_origins):
        core = tuple(
            min(b, d - o) for o, d, b in zip(origin, dims, block_shape)
        )
        ho = tuple(max(0, o - h) for o, h in zip(origin, halo))
        hi = tuple(
            min(d, o + c + h) for o, c, d, h in zip(origin, core, dims, halo)
        )
        blocks.append(Block(origin, core, ho, tuple(e - s for s, e in zip(ho, hi))))
    return BlockSet(dims, block_shape, halo, blocks)
