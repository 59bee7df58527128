"""Bounded sample store between streaming clients and the trainer.

The buffer mitigates the three online-training biases (early time steps
arrive first, only a few simulations run concurrently, and memory cannot
hold everything) by mixing samples before they reach the trainer. It is a
bounded store with a capacity ``s``, a one-shot readiness threshold
``s_ready`` gating the first draw, and a floor ``s_min`` that every draw
must leave behind so batch construction stays random.

Two data-management policies are provided:

* ``RandomEvictOnSelect`` — batches are drawn uniformly without replacement
  and erased on selection; a push into a full buffer overwrites a uniformly
  random victim. This is the bias-mitigating policy.
* ``FifoPassThrough`` — arrival order in, arrival order out, no thresholds;
  a push into a full buffer drops the oldest sample. This models plain
  streaming and is the baseline the random policy is compared against.

New policies (reservoir, importance sampling, ...) subclass
``DataManagementPolicy``.

All buffer operations are linearizable under one internal lock; any number
of connection handlers may push while one trainer draws.
"""

from __future__ import annotations

import enum
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch
from .samples import COL_RHO, COL_STATE, ROW_WIDTH


@dataclass(frozen=True)
class BufferConfig:
    """Capacity and thresholds, all in samples."""

    capacity: int
    ready_threshold: int
    min_threshold: int
    batch_size: int

    def __post_init__(self):
        if not (0 <= self.min_threshold <= self.ready_threshold <= self.capacity):
            raise ValueError(f"thresholds must satisfy 0 <= min <= ready <= capacity: {self}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.ready_threshold < self.batch_size:
            raise ValueError("ready_threshold must be at least batch_size")


class PushOutcome(enum.Enum):
    STORED = "stored"
    EVICTED = "evicted"  # stored, after evicting one sample from a full buffer


class DataManagementPolicy(ABC):
    """Storage plus the eviction and selection rules. Not thread-safe itself;
    MemoryBuffer serializes all access."""

    name: str
    uses_thresholds: bool

    @abstractmethod
    def push(self, row: np.ndarray) -> bool:
        """Store one sample; returns True if a stored sample was evicted."""

    @abstractmethod
    def draw(self, k: int) -> np.ndarray:
        """Remove and return k samples per the selection rule (k <= size)."""

    @abstractmethod
    def __len__(self) -> int: ...


class RandomEvictOnSelect(DataManagementPolicy):
    """Uniform random selection with erase-on-selection; random victim when full."""

    name = "random-evict-on-select"
    uses_thresholds = True

    def __init__(self, capacity: int, rng: np.random.Generator | None = None):
        self._storage = np.empty((capacity, ROW_WIDTH))
        self._size = 0
        self._rng = rng if rng is not None else np.random.default_rng()

    def push(self, row: np.ndarray) -> bool:
        if self._size < self._storage.shape[0]:
            self._storage[self._size] = row
            self._size += 1
            return False
        victim = int(self._rng.integers(self._size))
        self._storage[victim] = row
        return True

    def draw(self, k: int) -> np.ndarray:
        idx = self._rng.choice(self._size, size=k, replace=False)
        batch = self._storage[idx].copy()
        # swap-remove, highest index first so earlier swaps stay valid
        for i in np.sort(idx)[::-1]:
            self._size -= 1
            self._storage[i] = self._storage[self._size]
        return batch

    def __len__(self) -> int:
        return self._size


class FifoPassThrough(DataManagementPolicy):
    """Arrival-order ring buffer; drops the oldest sample when full."""

    name = "fifo-pass-through"
    uses_thresholds = False

    def __init__(self, capacity: int):
        self._storage = np.empty((capacity, ROW_WIDTH))
        self._head = 0
        self._size = 0

    def push(self, row: np.ndarray) -> bool:
        cap = self._storage.shape[0]
        evicted = False
        if self._size == cap:
            self._head = (self._head + 1) % cap
            self._size -= 1
            evicted = True
        self._storage[(self._head + self._size) % cap] = row
        self._size += 1
        return evicted

    def draw(self, k: int) -> np.ndarray:
        cap = self._storage.shape[0]
        idx = (self._head + np.arange(k)) % cap
        batch = self._storage[idx].copy()
        self._head = (self._head + k) % cap
        self._size -= k
        return batch

    def __len__(self) -> int:
        return self._size


class MemoryBuffer:
    """Thread-safe bounded store shared by connection handlers and the trainer."""

    def __init__(self, config: BufferConfig, policy: DataManagementPolicy):
        self.config = config
        self.policy = policy
        self._lock = threading.Lock()
        self._data_available = threading.Condition(self._lock)
        self._ready = False
        self._draining = False
        self.total_pushed = 0
        self.total_evicted = 0
        self.blocked_draws = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self.policy)

    @property
    def is_ready(self) -> bool:
        return self._ready

    @property
    def is_draining(self) -> bool:
        return self._draining

    def push(self, row: np.ndarray) -> PushOutcome:
        """Store one sample; never blocks the caller."""
        with self._lock:
            evicted = self.policy.push(row)
            self.total_pushed += 1
            if evicted:
                self.total_evicted += 1
            if not self._ready and len(self.policy) >= self.config.ready_threshold:
                self._ready = True
            self._data_available.notify_all()
            return PushOutcome.EVICTED if evicted else PushOutcome.STORED

    def _drawable(self) -> int:
        """Batch size a draw may take right now, 0 if gated. Caller holds the lock."""
        size = len(self.policy)
        batch = self.config.batch_size
        if self._draining:
            return min(batch, size) if size >= 1 else 0
        if self.policy.uses_thresholds:
            if self._ready and size >= self.config.min_threshold + batch:
                return batch
            return 0
        return batch if size >= batch else 0

    def try_draw(self) -> np.ndarray | None:
        """One batch, or None when gated (thresholds unmet or buffer empty)."""
        with self._lock:
            k = self._drawable()
            if k == 0:
                self.blocked_draws += 1
                return None
            return self.policy.draw(k)

    def draw_wait(self, timeout: float) -> np.ndarray | None:
        """Blocking draw; None after ``timeout`` seconds without a drawable batch
        or immediately once draining finds the buffer empty."""
        deadline = time.monotonic() + timeout
        with self._lock:
            first_check = True
            while True:
                k = self._drawable()
                if k > 0:
                    return self.policy.draw(k)
                if first_check:
                    self.blocked_draws += 1
                    first_check = False
                if self.is_exhausted_locked():
                    return None
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._data_available.wait(remaining)

    def is_exhausted_locked(self) -> bool:
        return self._draining and len(self.policy) == 0

    @property
    def is_exhausted(self) -> bool:
        """True once draining and empty: no batch will ever be drawable again."""
        with self._lock:
            return self.is_exhausted_locked()

    def set_draining(self) -> None:
        """All producers finished: stop gating draws and let the trainer consume
        the residue. Idempotent."""
        with self._lock:
            self._draining = True
            self._data_available.notify_all()

    def metrics(self) -> dict[str, int]:
        with self._lock:
            return {
                "buffer_size": len(self.policy),
                "total_pushed": self.total_pushed,
                "total_evicted": self.total_evicted,
                "blocked_draws": self.blocked_draws,
            }


@dataclass(frozen=True)
class BatchStats:
    """Per-batch mean/std of the raw state coordinates and of rho."""

    rho_mean: float
    rho_std: float
    x_mean: float
    x_std: float
    y_mean: float
    y_std: float
    z_mean: float
    z_std: float


def batch_statistics(rows: np.ndarray) -> BatchStats:
    """Unbiased (n-1) per-component statistics of a raw sample batch."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        raise EmptyBatch("batch statistics need at least one sample")
    rho = rows[:, COL_RHO]
    states = rows[:, COL_STATE]
    if rows.shape[0] == 1:
        stds = np.zeros(4)
    else:
        stds = np.concatenate([[rho.std(ddof=1)], states.std(axis=0, ddof=1)])
    return BatchStats(
        rho_mean=float(rho.mean()),
        rho_std=float(stds[0]),
        x_mean=float(states[:, 0].mean()),
        x_std=float(stds[1]),
        y_mean=float(states[:, 1].mean()),
        y_std=float(stds[2]),
        z_mean=float(states[:, 2].mean()),
        z_std=float(stds[3]),
    )
