"""Context memory cache: persistent reduction buffers keyed by pipeline shape.

Repeated reductions with equal keys reuse the same context and perform no
new allocations, which the context makes observable through an allocation
event counter.
"""
from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ..errors import AllocationError, ValidationError

DEFAULT_CAPACITY = 4


@dataclass(frozen=True)
class ContextKey:
    pipeline_id: str
    dims: tuple[int, ...]
    dtype: str
    params: tuple[tuple[str, Any], ...] = ()

    @classmethod
    def make(cls, pipeline_id: str, dims, dtype, **params) -> "ContextKey":
        canon = tuple(sorted((str(k), _canon(v)) for k, v in params.items()))
        return cls(str(pipeline_id), tuple(int(d) for d in dims), str(dtype), canon)

    @property
    def digest(self) -> int:
        """64-bit hash of the canonical serialization."""
        text = repr((self.pipeline_id, self.dims, self.dtype, self.params))
        h = hashlib.blake2b(text.encode(), digest_size=8)
        return int.from_bytes(h.digest(), "little")


def _canon(v):
    if isinstance(v, (list, tuple)):
        return tuple(_canon(x) for x in v)
    if isinstance(v, float):
        return float(v)
    if isinstance(v, (int, str, bool)) or v is None:
        return v
    return repr(v)


@dataclass
class Context:
    """Named persistent buffers plus derived objects, with allocation counting."""

    key: ContextKey
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    alloc_events: int = 0
    creation_count: int = 1
    last_use: int = 0
    _stash: dict[str, Any] = field(default_factory=dict)

    def buffer(self, name: str, nbytes: int) -> np.ndarray:
        """uint8 scratch of at least ``nbytes``; allocated once per context."""
        buf = self.buffers.get(name)
        if buf is None or buf.nbytes < nbytes:
            try:
                buf = np.empty(int(nbytes), dtype=np.uint8)
            except MemoryError as e:
                raise AllocationError(f"allocating {nbytes} bytes for {name!r}") from e
            self.buffers[name] = buf
            self.alloc_events += 1
        return buf

    def array(self, name: str, shape, dtype) -> np.ndarray:
        """Typed persistent work array; reallocated only if shape/dtype change."""
        arr = self.buffers.get(name)
        shape = tuple(int(s) for s in shape)
        if arr is None or arr.shape != shape or arr.dtype != np.dtype(dtype):
            try:
                arr = np.empty(shape, dtype=dtype)
            except MemoryError as e:
                raise AllocationError(f"allocating array {name!r} {shape}") from e
            self.buffers[name] = arr
            self.alloc_events += 1
        return arr

    def cached(self, name: str, factory: Callable[[], Any]) -> Any:
        """Derived object built once per context (factories count as one event)."""
        if name not in self._stash:
            self._stash[name] = factory()
            self.alloc_events += 1
        return self._stash[name]


class ContextCache:
    """LRU cache of reduction contexts, default capacity 4."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValidationError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._entries: OrderedDict[int, Context] = OrderedDict()
        self._lock = threading.Lock()
        self._clock = 0
        self.evictions = 0
        self._retired_alloc_events = 0

    def acquire(self, key: ContextKey, sizes: Sequence[int] = ()) -> Context:
        """Return the cached context for ``key`` or build one.

        ``sizes`` pre-allocates numbered byte buffers; on a cache hit the
        call performs zero new allocations for the same sizes.
        """
        if any(int(s) <= 0 for s in sizes):
            raise ValidationError("buffer sizes must be > 0")
        digest = key.digest
        with self._lock:
            self._clock += 1
            ctx = self._entries.get(digest)
            if ctx is not None:
                self._entries.move_to_end(digest)
                ctx.last_use = self._clock
                return ctx
            ctx = Context(key=key, last_use=self._clock)
            for i, s in enumerate(sizes):
                ctx.buffer(f"buf{i}", int(s))
            self._entries[digest] = ctx
            while len(self._entries) > self.capacity:
                _, evicted = self._entries.popitem(last=False)
                self._retired_alloc_events += evicted.alloc_events
                self.evictions += 1
            return ctx

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: ContextKey) -> bool:
        return key.digest in self._entries

    @property
    def total_alloc_events(self) -> int:
        """Lifetime allocation events, including those of evicted contexts."""
        with self._lock:
            live = sum(c.alloc_events for c in self._entries.values())
            return self._retired_alloc_events + live
