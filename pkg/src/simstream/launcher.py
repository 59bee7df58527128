"""Ensemble orchestration: parameter sampling, client supervision, end signal.

The launcher turns an ensemble plan into trajectory specs (streaming sweep:
sorted by rho; random sampling: rho drawn uniformly from the grid), runs at
most ``concurrency`` clients at once, and sends the ensemble-finished
control message after the last client is done.

Clients run either as OS processes (``python -m simstream.client``, the
default for real runs) or as in-process threads (cheap mode for tests and
desk experiments). By default a freed slot is immediately backfilled with
the next planned spec; ``rigid_groups=True`` reproduces strictly sequential
groups of ``concurrency`` simulations instead.
"""

from __future__ import annotations

import enum
import logging
import socket
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .client import run_client
from .errors import ServerUnreachable, SpawnFailure
from .lorenz import LorenzParams, TrajectorySpec, sample_initial_state
from .protocol import CONTROL_SIM_ID, Bye, encode

log = logging.getLogger(__name__)

DEFAULT_RHO_GRID = (0.0, 20.0, 40.0, 60.0, 80.0, 100.0)


class Strategy(enum.Enum):
    STREAMING_SWEEP = "streaming-sweep"
    RANDOM_SAMPLING = "random-sampling"


class ClientStatus(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


@dataclass(frozen=True)
class EnsemblePlan:
    strategy: Strategy
    n_trajectories: int
    concurrency: int
    rho_grid: tuple[float, ...] = DEFAULT_RHO_GRID
    dt: float = 1e-2
    n_steps: int = 2000
    substeps: int = 1
    sigma: float = 10.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        if self.n_trajectories < 1 or self.concurrency < 1:
            raise ValueError("n_trajectories and concurrency must be positive")
        if not self.rho_grid:
            raise ValueError("rho_grid must be non-empty")


@dataclass
class ClientHandle:
    sim_id: int
    spec: TrajectorySpec
    status: ClientStatus = ClientStatus.PENDING
    samples_sent: int = -1  # -1 until known


@dataclass
class EnsembleReport:
    handles: list[ClientHandle]
    peak_concurrency: int = 0

    def count(self, status: ClientStatus) -> int:
        return sum(1 for h in self.handles if h.status is status)

    def write_csv(self, path: str | Path) -> None:
        lines = ["sim_id,rho,status,samples_sent"]
        for h in self.handles:
            lines.append(f"{h.sim_id},{h.spec.params.rho},{h.status.value},{h.samples_sent}")
        Path(path).write_text("\n".join(lines) + "\n")


def plan_parameters(plan: EnsemblePlan, rng: np.random.Generator) -> list[TrajectorySpec]:
    """Ordered trajectory specs for the ensemble.

    Streaming sweep: trajectories split evenly over the grid (remainder going
    to the lowest rho values), sorted ascending so low-rho groups run first.
    Random sampling: each rho drawn uniformly from the grid. Initial states
    are independent Normal(15, 30) draws either way.
    """
    grid = sorted(plan.rho_grid)
    n = plan.n_trajectories
    if plan.strategy is Strategy.STREAMING_SWEEP:
        base, extra = divmod(n, len(grid))
        rhos: list[float] = []
        for i, rho in enumerate(grid):
            rhos.extend([rho] * (base + (1 if i < extra else 0)))
    else:
        rhos = [grid[i] for i in rng.integers(0, len(grid), size=n)]
    specs = []
    for rho in rhos:
        specs.append(
            TrajectorySpec(
                params=LorenzParams(rho=rho, sigma=plan.sigma, beta=plan.beta),
                initial_state=tuple(sample_initial_state(rng)),
                dt=plan.dt,
                n_steps=plan.n_steps,
                substeps=plan.substeps,
            )
        )
    return specs


def check_server(address: tuple[str, int], timeout: float = 5.0) -> None:
    """Probe the ingestion server; raises ServerUnreachable."""
    try:
        socket.create_connection(address, timeout=timeout).close()
    except OSError as err:
        raise ServerUnreachable(f"no ingestion server at {address}: {err}") from err


def send_ensemble_finished(address: tuple[str, int]) -> None:
    """Deliver the end-of-ensemble control message (a bare Bye from the
    reserved sim_id on its own connection)."""
    with socket.create_connection(address, timeout=10.0) as sock:
        sock.sendall(encode(Bye(CONTROL_SIM_ID)))


class _ConcurrencyGauge:
    def __init__(self):
        self._lock = threading.Lock()
        self.live = 0
        self.peak = 0

    def enter(self):
        with self._lock:
            self.live += 1
            self.peak = max(self.peak, self.live)

    def leave(self):
        with self._lock:
            self.live -= 1


def _client_argv(spec: TrajectorySpec, sim_id: int, address: tuple[str, int]) -> list[str]:
    x0 = spec.initial_state
    return [
        sys.executable,
        "-m",
        "simstream.client",
        "--host", address[0],
        "--port", str(address[1]),
        "--sim-id", str(sim_id),
        "--rho", repr(spec.params.rho),
        "--sigma", repr(spec.params.sigma),
        "--beta", repr(spec.params.beta),
        "--x0", repr(x0[0]), repr(x0[1]), repr(x0[2]),
        "--dt", repr(spec.dt),
        "--steps", str(spec.n_steps),
        "--substeps", str(spec.substeps),
    ]


def _run_handle_in_thread(handle: ClientHandle, address, gauge: _ConcurrencyGauge) -> None:
    gauge.enter()
    handle.status = ClientStatus.RUNNING
    try:
        steps = run_client(handle.spec, handle.sim_id, address)
        handle.samples_sent = steps - 1
        handle.status = ClientStatus.DONE
    except Exception as err:  # failure never aborts the ensemble
        log.warning("client %d failed: %s", handle.sim_id, err)
        handle.status = ClientStatus.FAILED
    finally:
        gauge.leave()


def run_ensemble(
    plan: EnsemblePlan,
    address: tuple[str, int],
    rng: np.random.Generator,
    mode: str = "process",
    rigid_groups: bool = False,
    sample_counts: Callable[[], Mapping[int, int]] | None = None,
    specs: Sequence[TrajectorySpec] | None = None,
) -> EnsembleReport:
    """Run the whole ensemble against a live server and return the report.

    Never exceeds ``plan.concurrency`` live clients; client failures are
    reported, not raised. Raises ServerUnreachable before starting anything
    if the server does not accept connections.
    """
    if mode not in ("process", "thread"):
        raise ValueError(f"unknown client mode {mode!r}")
    check_server(address)
    if specs is None:
        specs = plan_parameters(plan, rng)
    handles = [ClientHandle(sim_id=i, spec=spec) for i, spec in enumerate(specs)]
    gauge = _ConcurrencyGauge()

    if mode == "thread":
        _supervise_threads(handles, address, plan.concurrency, rigid_groups, gauge)
    else:
        _supervise_processes(handles, address, plan.concurrency, rigid_groups, gauge)

    send_ensemble_finished(address)
    if sample_counts is not None:
        counts = sample_counts()
        for h in handles:
            if h.sim_id in counts:
                h.samples_sent = counts[h.sim_id]
    report = EnsembleReport(handles=handles, peak_concurrency=gauge.peak)
    failed = report.count(ClientStatus.FAILED)
    if failed:
        log.warning("ensemble finished with %d failed clients", failed)
    return report


def _supervise_threads(handles, address, concurrency, rigid_groups, gauge) -> None:
    if rigid_groups:
        for start in range(0, len(handles), concurrency):
            group = handles[start : start + concurrency]
            threads = [
                threading.Thread(target=_run_handle_in_thread, args=(h, address, gauge), daemon=True)
                for h in group
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        return
    slots = threading.Semaphore(concurrency)
    threads = []

    def run_slot(handle):
        try:
            _run_handle_in_thread(handle, address, gauge)
        finally:
            slots.release()

    for handle in handles:
        slots.acquire()
        t = threading.Thread(target=run_slot, args=(handle,), daemon=True)
        t.start()
        threads.append(t)
    for t in threads:
        t.join()


def _supervise_processes(handles, address, concurrency, rigid_groups, gauge) -> None:
    pending = list(handles)
    running: list[tuple[ClientHandle, subprocess.Popen]] = []

    def start(handle: ClientHandle) -> None:
        try:
            proc = subprocess.Popen(
                _client_argv(handle.spec, handle.sim_id, address),
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
            )
        except OSError as err:
            log.warning("spawn failed for client %d: %s", handle.sim_id, SpawnFailure(str(err)))
            handle.status = ClientStatus.FAILED
            return
        handle.status = ClientStatus.RUNNING
        gauge.enter()
        running.append((handle, proc))

    def reap() -> None:
        for handle, proc in list(running):
            code = proc.poll()
            if code is None:
                continue
            running.remove((handle, proc))
            gauge.leave()
            if code == 0:
                handle.status = ClientStatus.DONE
                handle.samples_sent = handle.spec.n_steps - 1
            else:
                handle.status = ClientStatus.FAILED

    if rigid_groups:
        for start_idx in range(0, len(pending), concurrency):
            for handle in pending[start_idx : start_idx + concurrency]:
                start(handle)
            while running:
                reap()
                if running:
                    time.sleep(0.01)
        return

    while pending or running:
        while pending and len(running) < concurrency:
            start(pending.pop(0))
        reap()
        if running:
            time.sleep(0.01)
