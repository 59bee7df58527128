"""Packed sample rows: the unit of training data flowing through the system.

A sample is one float64 row ``[rho, x, y, z, vx, vy, vz]`` pairing a state
``Y_t`` with its finite-difference velocity target ``(Y_{t+1} - Y_t) / dt``.
Collections of samples are ``(n, 7)`` arrays everywhere (buffer storage,
datasets, batches), which keeps the hot paths vectorized.
"""

from __future__ import annotations

import numpy as np

ROW_WIDTH = 7
COL_RHO = 0
COL_STATE = slice(1, 4)
COL_VEL = slice(4, 7)


def make_sample(rho: float, state, velocity) -> np.ndarray:
    """Pack one (rho, state, velocity target) triple into a row."""
    row = np.empty(ROW_WIDTH)
    row[COL_RHO] = rho
    row[COL_STATE] = state
    row[COL_VEL] = velocity
    return row


def rows_from_trajectory(rho: float, states: np.ndarray, dt: float, stride: int = 1) -> np.ndarray:
    """Convert a ``(n_steps, 3)`` trajectory into sample rows.

    Keeps the consecutive pairs (Y_t, Y_{t+1}) for t in ``range(0, n_steps - 1,
    stride)``; the target is always the one-step finite difference at spacing
    ``dt`` regardless of stride.
    """
    states = np.asarray(states, dtype=np.float64)
    kept = np.arange(0, states.shape[0] - 1, stride)
    cur = states[kept]
    vel = (states[kept + 1] - cur) / dt
    out = np.empty((len(kept), ROW_WIDTH))
    out[:, COL_RHO] = rho
    out[:, COL_STATE] = cur
    out[:, COL_VEL] = vel
    return out


def rows_from_trajectories(rhos: np.ndarray, trajectories: np.ndarray, dt: float, stride: int = 1) -> np.ndarray:
    """Vectorized ``rows_from_trajectory`` over a ``(k, n_steps, 3)`` ensemble."""
    trajectories = np.asarray(trajectories, dtype=np.float64)
    k, n_steps, _ = trajectories.shape
    kept = np.arange(0, n_steps - 1, stride)
    cur = trajectories[:, kept]
    vel = (trajectories[:, kept + 1] - cur) / dt
    out = np.empty((k * len(kept), ROW_WIDTH))
    out[:, COL_RHO] = np.repeat(np.asarray(rhos, dtype=np.float64), len(kept))
    out[:, COL_STATE] = cur.reshape(-1, 3)
    out[:, COL_VEL] = vel.reshape(-1, 3)
    return out


def samples_per_trajectory(n_steps: int, stride: int = 1) -> int:
    """Number of (Y_t, Y_{t+1}) pairs kept from one trajectory."""
    return len(range(0, n_steps - 1, stride))
