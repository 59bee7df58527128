"""Autoregressive rollout and divergence metrics against a reference trajectory.

The trained network predicts a standardized velocity; a rollout reconstructs
the trajectory by repeated Euler updates with the unstandardized prediction:

    Y_{t+1} = Y_t + dt * unstandardize(model(standardize(Y_t, rho)))

Chaos makes long-horizon pointwise agreement impossible; what the metrics
capture is (a) how long the rollout tracks the reference before drifting
past a divergence threshold and (b) whether it remains inside the
attractor's bounding box for the whole horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import LengthMismatch, NonFiniteState
from .lorenz import Standardization
from .nn import MlpModel, forward

VelocityFn = Callable[[np.ndarray], np.ndarray]  # state (3,) -> velocity (3,)


def model_velocity(model: MlpModel, stdz: Standardization, rho: float) -> VelocityFn:
    """Physical-space velocity field realized by the trained network."""

    def velocity(state: np.ndarray) -> np.ndarray:
        pred = forward(model, stdz.standardize_state(state, rho))
        return stdz.unstandardize_velocity(pred)[0]

    return velocity


def rollout_velocity(velocity: VelocityFn, initial_state, dt: float, n_steps: int) -> np.ndarray:
    """Iterate ``state + dt * velocity(state)``; raises NonFiniteState on blow-up
    (the exception carries the finite prefix)."""
    out = np.empty((n_steps, 3))
    state = np.asarray(initial_state, dtype=np.float64)
    out[0] = state
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, n_steps):
            state = state + dt * velocity(state)
            if not np.isfinite(state).all():
                raise NonFiniteState(
                    f"rollout diverged at step {t}", partial=out[:t].copy(), step=t
                )
            out[t] = state
    return out


def rollout(
    model: MlpModel,
    stdz: Standardization,
    rho: float,
    initial_state,
    dt: float,
    n_steps: int,
) -> np.ndarray:
    """Model-driven trajectory reconstruction from one initial state."""
    return rollout_velocity(model_velocity(model, stdz, rho), initial_state, dt, n_steps)


@dataclass(frozen=True)
class RolloutResult:
    valid_time: int            # first step past the divergence threshold (== length if never)
    max_pointwise_error: float  # max L2 error inside the valid window
    bounded: bool              # stayed inside box_factor x the reference box
    eps_div: float             # the divergence threshold actually used
    length: int


def divergence_metrics(
    predicted: np.ndarray,
    reference: np.ndarray,
    eps_factor: float = 0.1,
    box_factor: float = 1.5,
) -> RolloutResult:
    """Compare a rollout against the reference trajectory.

    valid_time: first t with ||pred_t - ref_t||_2 > eps_factor * RMS(||ref||_2)
    bounded:    every predicted state inside the reference bounding box
                scaled by box_factor about its center
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if predicted.shape != reference.shape:
        raise LengthMismatch(f"predicted {predicted.shape} vs reference {reference.shape}")
    rms = np.sqrt(np.mean(np.sum(reference**2, axis=1)))
    eps_div = eps_factor * rms
    dist = np.sqrt(np.sum((predicted - reference) ** 2, axis=1))
    over = np.nonzero(dist > eps_div)[0]
    valid_time = int(over[0]) if over.size else len(predicted)
    max_err = float(dist[:valid_time].max()) if valid_time > 0 else 0.0
    lo = reference.min(axis=0)
    hi = reference.max(axis=0)
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    bounded = bool(np.all(np.abs(predicted - center) <= box_factor * half))
    return RolloutResult(
        valid_time=valid_time,
        max_pointwise_error=max_err,
        bounded=bounded,
        eps_div=float(eps_div),
        length=len(predicted),
    )


def write_rollout_csv(path: str | Path, predicted: np.ndarray, reference: np.ndarray) -> None:
    if len(predicted) != len(reference):
        raise LengthMismatch(f"{len(predicted)} predicted vs {len(reference)} reference steps")
    lines = ["t,x_pred,y_pred,z_pred,x_ref,y_ref,z_ref"]
    for t, (p, r) in enumerate(zip(predicted, reference)):
        vals = ",".join(repr(float(v)) for v in (*p, *r))
        lines.append(f"{t},{vals}")
    Path(path).write_text("\n".join(lines) + "\n")
