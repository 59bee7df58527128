"""Offline dataset generation, cache files, epoch loading, and batch budgets.

Three offline variants mirror the experiment protocol:

* full        : many complete trajectories (the reference arm)
* restricted  : a small fraction of the trajectories (storage-constrained)
* subsampled  : many trajectories but pairs kept only every ``stride`` steps

The restricted and subsampled arms are artificially reduced; batch budgets
are equalized across arms so every training setting sees the same number of
optimization batches.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .lorenz import Standardization, generate_trajectories, sample_initial_states
from .samples import ROW_WIDTH, rows_from_trajectories, samples_per_trajectory

_CACHE_MAGIC = b"DSET"


class OfflineVariant(enum.Enum):
    FULL = "full"
    RESTRICTED = "restricted"
    SUBSAMPLED = "subsampled"


@dataclass(frozen=True)
class DatasetProvenance:
    variant: OfflineVariant
    n_trajectories: int
    n_steps: int
    subsample_stride: int
    seed: int


@dataclass(frozen=True)
class OfflineDataset:
    rows: np.ndarray  # (n, 7)
    provenance: DatasetProvenance

    def __len__(self) -> int:
        return self.rows.shape[0]


def round_robin_rhos(grid, n_trajectories: int) -> np.ndarray:
    """rho per trajectory, cycling through the grid."""
    grid = np.asarray(grid, dtype=np.float64)
    return grid[np.arange(n_trajectories) % len(grid)]


def build_offline(
    variant: OfflineVariant,
    n_trajectories: int,
    n_steps: int,
    dt: float,
    grid,
    rng: np.random.Generator,
    seed: int,
    stride: int = 1,
    substeps: int = 1,
) -> OfflineDataset:
    """Generate a dataset: round-robin rho over the grid, Normal(15, 30) starts.

    Sample count is exactly ``n_trajectories * len(range(0, n_steps - 1,
    stride))``; NonFiniteState from a diverging trajectory propagates.
    """
    rhos = round_robin_rhos(grid, n_trajectories)
    x0s = sample_initial_states(rng, n_trajectories)
    trajectories = generate_trajectories(rhos, x0s, dt, n_steps, substeps=substeps)
    rows = rows_from_trajectories(rhos, trajectories, dt, stride=stride)
    expected = n_trajectories * samples_per_trajectory(n_steps, stride)
    assert rows.shape[0] == expected, f"sample-count invariant broken: {rows.shape[0]} != {expected}"
    return OfflineDataset(
        rows=rows,
        provenance=DatasetProvenance(
            variant=variant,
            n_trajectories=n_trajectories,
            n_steps=n_steps,
            subsample_stride=stride,
            seed=seed,
        ),
    )


def build_validation_rows(
    per_rho: int,
    n_steps: int,
    dt: float,
    grid,
    rng: np.random.Generator,
    substeps: int = 1,
    total: int | None = None,
) -> np.ndarray:
    """Validation samples: ``per_rho`` trajectories per grid value, one seeded
    pass; ``total`` (if set) truncates the round-robin trajectory list."""
    grid = np.asarray(grid, dtype=np.float64)
    rhos = np.repeat(grid, per_rho)
    if total is not None:
        rhos = rhos[:total]
    x0s = sample_initial_states(rng, len(rhos))
    trajectories = generate_trajectories(rhos, x0s, dt, n_steps, substeps=substeps)
    return rows_from_trajectories(rhos, trajectories, dt)


def build_pilot_rows(
    per_rho: int,
    n_steps: int,
    dt: float,
    grid,
    rng: np.random.Generator,
    substeps: int = 1,
) -> np.ndarray:
    """Pilot samples for the standardization statistics (same layout as above)."""
    return build_validation_rows(per_rho, n_steps, dt, grid, rng, substeps=substeps)


@dataclass(frozen=True)
class Batch:
    """One training batch: raw rows plus their standardized views."""

    raw: np.ndarray      # (k, 7)
    inputs: np.ndarray   # (k, 4) standardized (x, y, z, rho)
    targets: np.ndarray  # (k, 3) standardized velocities


def make_batch(rows: np.ndarray, stdz: Standardization) -> Batch:
    inputs, targets = stdz.standardize_rows(rows)
    return Batch(raw=rows, inputs=inputs, targets=targets)


def epoch_batches(
    dataset: OfflineDataset,
    batch_size: int,
    stdz: Standardization,
    rng: np.random.Generator,
) -> Iterator[Batch]:
    """One epoch: a fresh uniform shuffle, full batches only (remainder dropped)."""
    n = len(dataset)
    perm = rng.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        rows = dataset.rows[perm[start : start + batch_size]]
        yield make_batch(rows, stdz)


def epoch_loader(
    dataset: OfflineDataset,
    batch_size: int,
    stdz: Standardization,
    rng: np.random.Generator,
) -> Iterator[Batch]:
    """Endless epoch stream; each epoch reshuffles (the generator state advances
    the rng, so epochs get distinct permutations)."""
    while True:
        yield from epoch_batches(dataset, batch_size, stdz, rng)


def batches_per_epoch(n_samples: int, batch_size: int) -> int:
    return n_samples // batch_size


def offline_budget(n_samples: int, batch_size: int, epochs: int) -> int:
    """Total optimization batches for an offline arm."""
    return batches_per_epoch(n_samples, batch_size) * epochs


# ---------------------------------------------------------------------------
# dataset cache file: magic, version, variant code, counts, seed, then packed
# little-endian float64 rows
# ---------------------------------------------------------------------------

_VARIANT_CODES = {OfflineVariant.FULL: 0, OfflineVariant.RESTRICTED: 1, OfflineVariant.SUBSAMPLED: 2}
_HEADER = struct.Struct("<4sHHIIIqQ")


def save_dataset(dataset: OfflineDataset, path: str | Path) -> None:
    p = dataset.provenance
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _CACHE_MAGIC,
                1,
                _VARIANT_CODES[p.variant],
                p.n_trajectories,
                p.n_steps,
                p.subsample_stride,
                p.seed,
                dataset.rows.shape[0],
            )
        )
        fh.write(np.ascontiguousarray(dataset.rows, dtype="<f8").tobytes())


def load_dataset(path: str | Path) -> OfflineDataset:
    raw = Path(path).read_bytes()
    magic, version, variant_code, n_traj, n_steps, stride, seed, count = _HEADER.unpack_from(raw)
    if magic != _CACHE_MAGIC or version != 1:
        raise ValueError(f"{path} is not a dataset cache file")
    rows = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(count, ROW_WIDTH).copy()
    variant = {v: k for k, v in _VARIANT_CODES.items()}[variant_code]
    return OfflineDataset(
        rows=rows,
        provenance=DatasetProvenance(variant, n_traj, n_steps, stride, seed),
    )
