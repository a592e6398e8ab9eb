"""Column-parallel execution with static, dynamic and guided scheduling.

Kernels follow a range protocol: ``kernel(state, start, stop, out)`` fills
columns ``start..stop-1`` of the :class:`~columnbench.grid.SourceBuffer`
``out`` and touches nothing else. Compiled kernels release the GIL, so plain
threads give real parallelism.
"""
from dataclasses import dataclass
from enum import Enum
import heapq
import threading
import time

import numpy as np

from .errors import InvalidArgument, KernelError
from .grid import SourceBuffer


class Schedule(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    GUIDED = "guided"


@dataclass(frozen=True)
class SchedulePolicy:
    """How columns are handed to workers.

    Parameters
    ----------
    kind : Schedule
    chunk : int
        Columns per grab for the dynamic policy.
    min_chunk : int
        Smallest grab the guided policy will shrink to.
    """

    kind: Schedule = Schedule.STATIC
    chunk: int = 16
    min_chunk: int = 4

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", Schedule(self.kind))
        except ValueError:
            raise InvalidArgument(f"unknown schedule {self.kind!r}") from None
        if int(self.chunk) < 1 or int(self.min_chunk) < 1:
            raise InvalidArgument("chunk and min_chunk must be >= 1")

    @classmethod
    def static(cls):
        return cls(Schedule.STATIC)

    @classmethod
    def dynamic(cls, chunk=16):
        return cls(Schedule.DYNAMIC, chunk=chunk)

    @classmethod
    def guided(cls, min_chunk=4):
        return cls(Schedule.GUIDED, min_chunk=min_chunk)


@dataclass
class WorkerTiming:
    worker_id: int
    busy_time: float = 0.0
    columns_processed: int = 0
    grabs: int = 0


@dataclass(frozen=True)
class ImbalanceReport:
    wall_time: float
    max_busy: float
    mean_busy: float
    imbalance_factor: float


def plan_static(n_items, n_workers):
    """Contiguous ranges whose sizes differ by at most one, larger ones first.

    >>> [len(r) for r in plan_static(10, 3)]
    [4, 3, 3]
    """
    if n_workers < 1:
        raise InvalidArgument("n_workers must be >= 1")
    if n_items < 0:
        raise InvalidArgument("n_items must be >= 0")
    base, extra = divmod(n_items, n_workers)
    ranges = []
    start = 0
    for w in range(n_workers):
        size = base + (1 if w < extra else 0)
        ranges.append(range(start, start + size))
        start += size
    return ranges


class _Cursor:
    """The shared work queue: one lock-protected position."""

    def __init__(self, n_items, policy, n_workers):
        self.n_items = n_items
        self.policy = policy
        self.n_workers = n_workers
        self.position = 0
        self.cancelled = False
        self._lock = threading.Lock()

    def grab(self):
        with self._lock:
            if self.cancelled:
                return None
            remaining = self.n_items - self.position
            if remaining <= 0:
                return None
            size = _grab_size(remaining, self.policy, self.n_workers)
            start = self.position
            self.position += size
            return start, start + size

    def cancel(self):
        with self._lock:
            self.cancelled = True


def _grab_size(remaining, policy, n_workers):
    if policy.kind is Schedule.DYNAMIC:
        size = policy.chunk
    else:
        size = max(remaining // (2 * n_workers), policy.min_chunk)
    return min(size, remaining)


def _locate_failure(kernel, state, start, stop, scratch):
    """Replay a failed range one column at a time to find the culprit."""
    for c in range(start, stop):
        try:
            kernel(state, c, c + 1, scratch)
        except Exception as exc:  # noqa: BLE001 - any kernel failure is reported
            return c, exc
    return start, None


def execute(state, kernel, policy=SchedulePolicy(), n_workers=1, component_index=0):
    """Run ``kernel`` over every column of ``state``.

    Returns
    -------
    buffer : SourceBuffer
        Identical bit for bit whatever the policy and worker count.
    timings : list of WorkerTiming
    wall_time : float
        Seconds from first spawn to last join.

    Raises
    ------
    KernelError
        If the kernel fails; ``column`` names the first failing column of the
        failed grab.
    """
    if n_workers < 1:
        raise InvalidArgument("n_workers must be >= 1")
    n = state.grid.n_columns
    out = SourceBuffer.zeros(state, component_index)
    timings = [WorkerTiming(w) for w in range(n_workers)]
    failures = []

    if policy.kind is Schedule.STATIC:
        ranges = plan_static(n, n_workers)
        cursor = None
    else:
        cursor = _Cursor(n, policy, n_workers)

    def run(start, stop, timing):
        t0 = time.perf_counter()
        try:
            kernel(state, start, stop, out)
        except Exception:  # noqa: BLE001
            failures.append((start, stop))
            if cursor is not None:
                cursor.cancel()
            return False
        finally:
            timing.busy_time += time.perf_counter() - t0
        timing.columns_processed += stop - start
        timing.grabs += 1
        return True

    def worker(w):
        timing = timings[w]
        if cursor is None:
            r = ranges[w]
            if len(r):
                run(r.start, r.stop, timing)
            return
        while True:
            grab = cursor.grab()
            if grab is None or not run(grab[0], grab[1], timing):
                return

    t0 = time.perf_counter()
    if n_workers == 1:
        worker(0)
    else:
        threads = [threading.Thread(target=worker, args=(w,), name=f"column-worker-{w}")
                   for w in range(n_workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    wall = time.perf_counter() - t0

    if failures:
        start, stop = min(failures)
        column, cause = _locate_failure(kernel, state, start, stop,
                                        SourceBuffer.zeros(state, component_index))
        raise KernelError(column, cause)
    return out, timings, wall


def imbalance(timings, wall):
    """Summarise busy times; the factor is max over mean (1.0 when all are idle)."""
    busy = [t.busy_time for t in timings]
    if not busy:
        raise InvalidArgument("no timings")
    max_busy = max(busy)
    mean_busy = sum(busy) / len(busy)
    factor = max_busy / mean_busy if mean_busy > 0 else 1.0
    return ImbalanceReport(wall, max_busy, mean_busy, max(factor, 1.0))


def simulate(costs, policy, n_workers, grab_overhead=0.0):
    """Makespan of a policy on known per-column costs, without running anything.

    Workers grab in the order they become free (lowest id first on ties),
    which is what a shared cursor does on an idle machine.

    Returns
    -------
    wall : float
    busy : ndarray
        Per-worker sum of column costs.
    """
    if n_workers < 1:
        raise InvalidArgument("n_workers must be >= 1")
    costs = np.asarray(costs, dtype=np.float64)
    n = costs.size
    prefix = np.concatenate(([0.0], np.cumsum(costs)))
    busy = np.zeros(n_workers)
    if policy.kind is Schedule.STATIC:
        for w, r in enumerate(plan_static(n, n_workers)):
            busy[w] = prefix[r.stop] - prefix[r.start]
        finish = busy + grab_overhead * np.array([len(r) > 0 for r in plan_static(n, n_workers)])
        return float(finish.max(initial=0.0)), busy
    heap = [(0.0, w) for w in range(n_workers)]
    position = 0
    finish = np.zeros(n_workers)
    while position < n:
        free_at, w = heapq.heappop(heap)
        size = _grab_size(n - position, policy, n_workers)
        cost = prefix[position + size] - prefix[position]
        position += size
        busy[w] += cost
        free_at += grab_overhead + cost
        finish[w] = free_at
        heapq.heappush(heap, (free_at, w))
    return float(finish.max(initial=0.0)), busy
