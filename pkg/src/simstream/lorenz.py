"""Lorenz system, explicit-Euler trajectory generation, and standardization.

The dynamical system is the classic Lorenz 1963 model

    dx/dt = sigma * (y - x)
    dy/dt = x * (rho - z) - y
    dz/dt = x * y - beta * z

with sigma = 10 and beta = 8/3 held fixed and rho varying per ensemble
member. States are float64 arrays of shape ``(3,)`` and trajectories arrays
of shape ``(n_steps, 3)``.

Explicit Euler at the data spacing dt = 1e-2 is numerically unstable for
large rho (trajectories overflow to inf even from near-attractor starts),
so trajectory generation supports an internal ``substeps`` refinement:
``substeps`` Euler steps of size dt/substeps per emitted state. The emitted
spacing, and therefore the finite-difference training target, stays dt.
``substeps=1`` is plain single-step Euler.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyPilot, NonFiniteState
from .samples import COL_RHO, COL_STATE, COL_VEL

INIT_STATE_MEAN = 15.0
INIT_STATE_STD = 30.0

STD_FLOOR = 1e-8

# component order of the standardization file and of model inputs
INPUT_NAMES = ("input_x", "input_y", "input_z", "input_rho")
TARGET_NAMES = ("target_vx", "target_vy", "target_vz")


@dataclass(frozen=True)
class LorenzParams:
    """System parameters; sigma and beta default to the fixed values 10 and 8/3."""

    rho: float
    sigma: float = 10.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.beta > 0 and self.rho >= 0):
            raise ValueError(f"invalid Lorenz parameters: {self}")
        if not np.isfinite([self.rho, self.sigma, self.beta]).all():
            raise ValueError(f"non-finite Lorenz parameters: {self}")


@dataclass(frozen=True)
class TrajectorySpec:
    """One ensemble member: parameters, initial state, and integration plan."""

    params: LorenzParams
    initial_state: tuple[float, float, float]
    dt: float
    n_steps: int
    substeps: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))
        if len(self.initial_state) != 3 or not np.isfinite(self.initial_state).all():
            raise ValueError(f"invalid initial state {self.initial_state}")


def lorenz_derivative(params: LorenzParams, state: np.ndarray) -> np.ndarray:
    """Velocity field of the Lorenz system; works on any ``(..., 3)`` array."""
    state = np.asarray(state, dtype=np.float64)
    x, y, z = state[..., 0], state[..., 1], state[..., 2]
    return np.stack(
        [
            params.sigma * (y - x),
            x * (params.rho - z) - y,
            x * y - params.beta * z,
        ],
        axis=-1,
    )


def euler_step(params: LorenzParams, state: np.ndarray, dt: float) -> np.ndarray:
    """One explicit-Euler step ``state + dt * f(state)``."""
    state = np.asarray(state, dtype=np.float64)
    return state + dt * lorenz_derivative(params, state)


def _advance(params: LorenzParams, state: np.ndarray, dt: float, substeps: int) -> np.ndarray:
    if substeps == 1:
        return euler_step(params, state, dt)
    h = dt / substeps
    for _ in range(substeps):
        state = state + h * lorenz_derivative(params, state)
    return state


def generate_trajectory(spec: TrajectorySpec) -> np.ndarray:
    """Integrate one trajectory; returns a ``(n_steps, 3)`` array.

    Raises NonFiniteState as soon as any component stops being finite; the
    exception carries the finite prefix so callers can log partial data.
    """
    out = np.empty((spec.n_steps, 3))
    state = np.asarray(spec.initial_state, dtype=np.float64)
    out[0] = state
    # overflow to inf is the divergence signal; detected below, so not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, spec.n_steps):
            state = _advance(spec.params, state, spec.dt, spec.substeps)
            if not np.isfinite(state).all():
                raise NonFiniteState(
                    f"trajectory diverged at step {t} (rho={spec.params.rho})",
                    partial=out[:t].copy(),
                    step=t,
                )
            out[t] = state
    return out


def generate_trajectories(
    rhos: np.ndarray,
    initial_states: np.ndarray,
    dt: float,
    n_steps: int,
    substeps: int = 1,
    sigma: float = 10.0,
    beta: float = 8.0 / 3.0,
) -> np.ndarray:
    """Integrate an ensemble in lockstep; returns ``(k, n_steps, 3)``.

    Bitwise identical per member to ``generate_trajectory`` (all operations
    are elementwise). Raises NonFiniteState naming the first diverging member.
    """
    rhos = np.asarray(rhos, dtype=np.float64)
    state = np.asarray(initial_states, dtype=np.float64).copy()
    k = state.shape[0]
    out = np.empty((k, n_steps, 3))
    out[:, 0] = state
    h = dt / substeps
    x, y, z = state[:, 0], state[:, 1], state[:, 2]
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, n_steps):
            for _ in range(substeps):
                dx = sigma * (y - x)
                dy = x * (rhos - z) - y
                dz = x * y - beta * z
                x = x + h * dx
                y = y + h * dy
                z = z + h * dz
            finite = np.isfinite(x) & np.isfinite(y) & np.isfinite(z)
            if not finite.all():
                bad = int(np.argmin(finite))
                raise NonFiniteState(
                    f"ensemble member {bad} (rho={rhos[bad]}) diverged at step {t}",
                    partial=out[:, :t].copy(),
                    step=t,
                )
            out[:, t, 0] = x
            out[:, t, 1] = y
            out[:, t, 2] = z
    return out


def sample_initial_state(rng: np.random.Generator) -> np.ndarray:
    """Draw one initial state, each component from Normal(15, 30)."""
    return rng.normal(INIT_STATE_MEAN, INIT_STATE_STD, 3)


def sample_initial_states(rng: np.random.Generator, k: int) -> np.ndarray:
    """Draw ``k`` initial states; same stream layout as ``k`` single draws."""
    return rng.normal(INIT_STATE_MEAN, INIT_STATE_STD, (k, 3))


@dataclass(frozen=True)
class Standardization:
    """Affine rescaling statistics for model inputs (x, y, z, rho) and targets."""

    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    def __post_init__(self):
        for name in ("input_mean", "input_std", "target_mean", "target_std"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.input_mean.shape != (4,) or self.target_mean.shape != (3,):
            raise ValueError("standardization vectors have wrong shape")
        if not ((self.input_std > 0).all() and (self.target_std > 0).all()):
            raise ValueError("standardization stds must be positive")

    def standardize_rows(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split packed sample rows into standardized model inputs and targets."""
        rows = np.asarray(rows, dtype=np.float64)
        inputs = np.empty((rows.shape[0], 4))
        inputs[:, :3] = rows[:, COL_STATE]
        inputs[:, 3] = rows[:, COL_RHO]
        inputs = (inputs - self.input_mean) / self.input_std
        targets = (rows[:, COL_VEL] - self.target_mean) / self.target_std
        return inputs, targets

    def standardize_state(self, state: np.ndarray, rho: float) -> np.ndarray:
        """Standardized ``(1, 4)`` model input for one state."""
        raw = np.empty((1, 4))
        raw[0, :3] = state
        raw[0, 3] = rho
        return (raw - self.input_mean) / self.input_std

    def unstandardize_velocity(self, velocity_std: np.ndarray) -> np.ndarray:
        """Map standardized model outputs back to physical velocities."""
        return velocity_std * self.target_std + self.target_mean


def compute_standardization(pilot_rows: np.ndarray) -> Standardization:
    """Per-component mean/std over a pilot sample set (std clamped at 1e-8).

    Uses population std (ddof=0) so the pilot set itself standardizes to
    exactly unit variance.
    """
    pilot_rows = np.asarray(pilot_rows, dtype=np.float64)
    if pilot_rows.size == 0:
        raise EmptyPilot("standardization needs a non-empty pilot set")
    inputs = np.column_stack([pilot_rows[:, COL_STATE], pilot_rows[:, COL_RHO]])
    targets = pilot_rows[:, COL_VEL]
    return Standardization(
        input_mean=inputs.mean(axis=0),
        input_std=np.maximum(inputs.std(axis=0), STD_FLOOR),
        target_mean=targets.mean(axis=0),
        target_std=np.maximum(targets.std(axis=0), STD_FLOOR),
    )


def save_standardization(stdz: Standardization, path: str | Path) -> None:
    """Write the stats file: one ``name,mean,std`` line per component."""
    lines = []
    for name, m, s in zip(INPUT_NAMES, stdz.input_mean, stdz.input_std):
        lines.append(f"{name},{float(m)!r},{float(s)!r}")
    for name, m, s in zip(TARGET_NAMES, stdz.target_mean, stdz.target_std):
        lines.append(f"{name},{float(m)!r},{float(s)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_standardization(path: str | Path) -> Standardization:
    values: dict[str, tuple[float, float]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        name, mean, std = line.split(",")
        values[name] = (float(mean), float(std))
    missing = [n for n in INPUT_NAMES + TARGET_NAMES if n not in values]
    if missing:
        raise ValueError(f"standardization file {path} is missing {missing}")
    return Standardization(
        input_mean=[values[n][0] for n in INPUT_NAMES],
        input_std=[values[n][1] for n in INPUT_NAMES],
        target_mean=[values[n][0] for n in TARGET_NAMES],
        target_std=[values[n][1] for n in TARGET_NAMES],
    )
