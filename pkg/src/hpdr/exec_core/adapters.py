"""Device adapters: serial reference semantics and a threaded CPU worker pool."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

# Per-group fast-tier scratch cap. Semantics only; no cache pinning is attempted.
DEFAULT_STAGING_CAPACITY = 64 * 1024 * 1024


class DeviceAdapter:
    """Executes grouped or domain-wide work items.

    The serial adapter is the semantic reference: any adapter must produce
    bit-identical results for work functions that only touch their own
    region and scratch.
    """

    name = "abstract"
    parallelism = 1

    def __init__(self, staging_capacity: int = DEFAULT_STAGING_CAPACITY):
        self.staging_capacity = int(staging_capacity)

    def map_items(self, fn, items) -> list:
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class SerialAdapter(DeviceAdapter):
    name = "serial"
    parallelism = 1

    def map_items(self, fn, items) -> list:
        return [fn(it) for it in items]


class ThreadedCpuAdapter(DeviceAdapter):
    """Worker pool sized by ``workers`` (default: hardware parallelism)."""

    name = "threaded"

    def __init__(self, workers: int | None = None, staging_capacity: int = DEFAULT_STAGING_CAPACITY):
        super().__init__(staging_capacity)
        self.parallelism = int(workers) if workers else (os.cpu_count() or 1)
        if self.parallelism < 1:
            raise ValueError("workers must be >= 1")
        self._pool: ThreadPoolExecutor | None = None

    def _ensure_pool(self) -> ThreadPoolExecutor:
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.parallelism)
        return self._pool

    def map_items(self, fn, items) -> list:
        items = list(items)
        if len(items) <= 1:
            return [fn(it) for it in items]
        # list() drains the iterator so worker exceptions surface here.
        return list(self._ensure_pool().map(fn, items))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None


def default_adapter(threads: int | None = None) -> DeviceAdapter:
    """Adapter from an explicit thread count or the HPDR_THREADS environment var."""
    if threads is None:
        env = os.environ.get("HPDR_THREADS")
        threads = int(env) if env else 1
    if threads <= 1:
        return SerialAdapter()
    return ThreadedCpuAdapter(threads)
