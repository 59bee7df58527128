"""Training loop shared by the offline and online settings.

Six settings: three offline arms fed by the epoch loader and three online
arms fed by the memory buffer (streaming = FIFO + sorted-rho sweep,
sampling = FIFO + random rho, sampling+buffer = random-evict-on-select +
random rho). The loop itself is identical: draw a batch, one Adam step,
record the loss and the raw batch statistics, validate every
``validation_interval`` batches and at the end.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .buffer import BatchStats, MemoryBuffer, batch_statistics
from .datasets import Batch, make_batch
from .errors import DataStarvation
from .lorenz import Standardization
from .nn import AdamState, MlpModel, adam_step, backward, forward, mse_loss

log = logging.getLogger(__name__)


class Setting(enum.Enum):
    OFFLINE_FULL = "offline-full"
    OFFLINE_RESTRICTED = "offline-restricted"
    OFFLINE_SUBSAMPLED = "offline-subsampled"
    ONLINE_STREAMING = "online-streaming"
    ONLINE_SAMPLING = "online-sampling"
    ONLINE_SAMPLING_BUFFER = "online-sampling-buffer"


OFFLINE_SETTINGS = frozenset(
    {Setting.OFFLINE_FULL, Setting.OFFLINE_RESTRICTED, Setting.OFFLINE_SUBSAMPLED}
)
ONLINE_SETTINGS = frozenset(
    {Setting.ONLINE_STREAMING, Setting.ONLINE_SAMPLING, Setting.ONLINE_SAMPLING_BUFFER}
)


@dataclass
class TrainRecord:
    batch_index: int
    train_loss: float
    stats: BatchStats
    buffer_size: int = -1
    total_pushed: int = -1
    total_evicted: int = -1


@dataclass
class TrainingLog:
    records: list[TrainRecord] = field(default_factory=list)
    validations: list[tuple[int, float]] = field(default_factory=list)

    def record_batch(self, batch_index: int, loss: float, stats: BatchStats, buffer_metrics=None) -> None:
        rec = TrainRecord(batch_index, loss, stats)
        if buffer_metrics is not None:
            rec.buffer_size = buffer_metrics["buffer_size"]
            rec.total_pushed = buffer_metrics["total_pushed"]
            rec.total_evicted = buffer_metrics["total_evicted"]
        if self.records and batch_index <= self.records[-1].batch_index:
            raise ValueError("batch_index must be strictly increasing")
        self.records.append(rec)

    def record_validation(self, batch_index: int, loss: float) -> None:
        self.validations.append((batch_index, loss))

    def final_train_loss(self, window: int = 25) -> float:
        tail = [r.train_loss for r in self.records[-window:]]
        return float(np.mean(tail))

    def final_val_loss(self) -> float:
        return self.validations[-1][1]

    def rho_stds(self) -> np.ndarray:
        return np.array([r.stats.rho_std for r in self.records])

    def write_train_csv(self, path: str | Path) -> None:
        lines = ["batch_index,train_loss,rho_mean,rho_std,x_mean,x_std,y_mean,y_std,z_mean,z_std"]
        for r in self.records:
            s = r.stats
            lines.append(
                f"{r.batch_index},{r.train_loss!r},{s.rho_mean!r},{s.rho_std!r},"
                f"{s.x_mean!r},{s.x_std!r},{s.y_mean!r},{s.y_std!r},{s.z_mean!r},{s.z_std!r}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    def write_val_csv(self, path: str | Path) -> None:
        lines = ["batch_index,val_loss"]
        for idx, loss in self.validations:
            lines.append(f"{idx},{loss!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    def write_buffer_csv(self, path: str | Path) -> None:
        lines = ["batch_index,buffer_size,total_pushed,total_evicted"]
        for r in self.records:
            lines.append(f"{r.batch_index},{r.buffer_size},{r.total_pushed},{r.total_evicted}")
        Path(path).write_text("\n".join(lines) + "\n")


def validate(model: MlpModel, val_inputs: np.ndarray, val_targets: np.ndarray) -> float:
    """MSE over the full standardized validation set; the model is untouched."""
    loss, _ = mse_loss(forward(model, val_inputs), val_targets)
    return loss


def buffer_batches(buffer: MemoryBuffer, stdz: Standardization, timeout: float) -> Iterator[Batch]:
    """Draw batches from the buffer until it is exhausted (drained empty).

    Raises DataStarvation when a draw blocks past ``timeout`` while producers
    are still supposed to be running (the buffer is not draining).
    """
    while True:
        rows = buffer.draw_wait(timeout)
        if rows is None:
            if buffer.is_exhausted:
                return
            raise DataStarvation(
                f"no drawable batch within {timeout}s "
                f"(size={len(buffer)}, ready={buffer.is_ready}, draining={buffer.is_draining})"
            )
        yield make_batch(rows, stdz)


@dataclass
class TrainResult:
    model: MlpModel
    log: TrainingLog
    batches_executed: int
    early_stopped: bool


def run_training(
    model: MlpModel,
    optimizer: AdamState,
    batches: Iterator[Batch],
    budget: int,
    val_inputs: np.ndarray,
    val_targets: np.ndarray,
    validation_interval: int = 100,
    record_interval: int = 1,
    buffer: MemoryBuffer | None = None,
) -> TrainResult:
    """Consume up to ``budget`` batches; online sources may end early once the
    ensemble is drained, which is logged rather than an error."""
    log_ = TrainingLog()
    log_.record_validation(0, validate(model, val_inputs, val_targets))
    executed = 0
    for batch in batches:
        loss, grads = backward(model, batch.inputs, batch.targets)
        adam_step(model, optimizer, grads)
        executed += 1
        if executed % record_interval == 0:
            metrics = buffer.metrics() if buffer is not None else None
            log_.record_batch(executed, loss, batch_statistics(batch.raw), metrics)
        if executed % validation_interval == 0:
            log_.record_validation(executed, validate(model, val_inputs, val_targets))
        if executed >= budget:
            break
    early = executed < budget
    if early:
        log.warning("training stopped early at %d/%d batches (source exhausted)", executed, budget)
    if not log_.validations or log_.validations[-1][0] != executed:
        log_.record_validation(executed, validate(model, val_inputs, val_targets))
    return TrainResult(model=model, log=log_, batches_executed=executed, early_stopped=early)
