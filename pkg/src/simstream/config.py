"""Experiment configuration: defaults, scale presets, YAML load/dump.

The defaults reproduce the reference experiment protocol at ``paper`` scale:
dt = 1e-2, rho grid {0, 20, ..., 100}, 2000-step trajectories, batch 1024,
offline datasets of 100 (full) / 10 (restricted) / 10,000-every-100
(subsampled) trajectories, 10,000 online trajectories, buffer thresholds of
10 / 5 / 3 trajectory-equivalents, and batch budgets equalized at
19,500 / 19,000 / 19,500 / 19,500.

Scale presets only rescale counts (trajectories, steps, batch size, budgets,
thresholds); physics constants and the model shape are never touched, except
that the ``smoke`` preset shrinks the hidden width (flagged in the resolved
snapshot). ``desk`` is calibrated so that every qualitative comparison of
the paper-scale protocol still holds while a full suite runs in minutes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

RHO_GRID = (0.0, 20.0, 40.0, 60.0, 80.0, 100.0)


@dataclass(frozen=True)
class ScalePreset:
    """Every count the scale knob is allowed to change."""

    n_steps: int
    batch_size: int
    full_trajectories: int
    restricted_trajectories: int
    subsampled_trajectories: int
    subsample_stride: int
    online_trajectories: int
    epochs_full: int
    epochs_restricted: int
    epochs_subsampled: int
    online_budget: int
    buffer_capacity: int
    buffer_ready: int
    buffer_min: int
    concurrency: int
    hidden_width: int
    rollout_steps: int
    rollout_warmup: int
    validation_per_rho: int
    substeps: int
    validation_interval: int


# 10/5/3 trajectory-equivalents use the spec'd round numbers at paper scale
# and (n_steps - 1)-pair equivalents at the smaller scales.
PAPER = ScalePreset(
    n_steps=2000,
    batch_size=1024,
    full_trajectories=100,
    restricted_trajectories=10,
    subsampled_trajectories=10_000,
    subsample_stride=100,
    online_trajectories=10_000,
    epochs_full=100,
    epochs_restricted=1000,
    epochs_subsampled=100,
    online_budget=19_500,
    buffer_capacity=20_000,
    buffer_ready=10_000,
    buffer_min=6_000,
    concurrency=8,
    hidden_width=512,
    rollout_steps=2000,
    rollout_warmup=500,
    validation_per_rho=2,
    substeps=10,
    validation_interval=100,
)

DESK = ScalePreset(
    n_steps=1000,
    batch_size=256,
    full_trajectories=50,
    restricted_trajectories=5,
    subsampled_trajectories=5_000,
    subsample_stride=100,
    online_trajectories=1_000,
    epochs_full=8,        # 195 batches/epoch -> 1560
    epochs_restricted=82,  # 19 batches/epoch -> 1558
    epochs_subsampled=8,   # 195 batches/epoch -> 1560
    online_budget=1_560,
    buffer_capacity=9_990,
    buffer_ready=4_995,
    buffer_min=2_997,
    concurrency=8,
    hidden_width=512,
    rollout_steps=2000,
    rollout_warmup=500,
    validation_per_rho=2,
    substeps=10,
    validation_interval=100,
)

SMOKE = ScalePreset(
    n_steps=120,
    batch_size=32,
    full_trajectories=6,
    restricted_trajectories=2,
    subsampled_trajectories=60,
    subsample_stride=24,
    online_trajectories=60,
    epochs_full=7,         # 22 batches/epoch -> 154
    epochs_restricted=22,  # 7 batches/epoch  -> 154
    epochs_subsampled=17,  # 9 batches/epoch  -> 153
    online_budget=154,
    buffer_capacity=1_190,
    buffer_ready=595,
    buffer_min=357,
    concurrency=4,
    hidden_width=64,
    rollout_steps=300,
    rollout_warmup=120,
    validation_per_rho=2,
    substeps=10,
    validation_interval=25,
)

SCALE_PRESETS = {"paper": PAPER, "desk": DESK, "smoke": SMOKE}


@dataclass
class ExperimentConfig:
    """Everything a run needs; serializable to an annotated YAML file."""

    scale: str = "paper"
    seed: int = 1234
    out_dir: str = "runs"
    rho_grid: tuple[float, ...] = RHO_GRID
    dt: float = 1e-2
    sigma: float = 10.0
    beta: float = 8.0 / 3.0
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    client_mode: str = "process"        # "process" or "thread"
    rigid_groups: bool = False
    record_interval: int = 1
    starvation_timeout_s: float = 60.0
    validation_total: int | None = None  # truncate the per-rho validation list
    rollout_rho: float = 28.0
    counts: ScalePreset = field(init=False)
    count_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scale not in SCALE_PRESETS:
            raise ConfigError(f"unknown scale {self.scale!r}; choose from {sorted(SCALE_PRESETS)}")
        if self.client_mode not in ("process", "thread"):
            raise ConfigError(f"client_mode must be 'process' or 'thread', got {self.client_mode!r}")
        preset = SCALE_PRESETS[self.scale]
        if self.count_overrides:
            valid = {f.name for f in dataclasses.fields(ScalePreset)}
            unknown = set(self.count_overrides) - valid
            if unknown:
                raise ConfigError(f"unknown count overrides: {sorted(unknown)}")
            preset = dataclasses.replace(preset, **self.count_overrides)
        self.counts = preset
        self.rho_grid = tuple(float(r) for r in self.rho_grid)

    @property
    def model_dims(self) -> tuple[int, ...]:
        w = self.counts.hidden_width
        return (4, w, w, w, 3)


_TOP_LEVEL_KEYS = {
    f.name for f in dataclasses.fields(ExperimentConfig) if f.init and f.name != "count_overrides"
} | {"counts"}


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a YAML config file, rejecting unknown keys at both levels."""
    raw = yaml.safe_load(Path(path).read_text())
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    counts = raw.pop("counts", {}) or {}
    if not isinstance(counts, dict):
        raise ConfigError("counts must be a mapping of preset overrides")
    if "rho_grid" in raw:
        raw["rho_grid"] = tuple(raw["rho_grid"])
    return ExperimentConfig(**raw, count_overrides=counts)


def dump_config(config: ExperimentConfig, path: str | Path) -> None:
    """Write the fully resolved snapshot (preset expanded into counts)."""
    data = {
        f.name: getattr(config, f.name)
        for f in dataclasses.fields(ExperimentConfig)
        if f.init and f.name != "count_overrides"
    }
    data["rho_grid"] = list(config.rho_grid)
    data["counts"] = dataclasses.asdict(config.counts)
    data["model_dims"] = list(config.model_dims)
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))
