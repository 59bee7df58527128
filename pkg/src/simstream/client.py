"""Simulation client: integrates one trajectory and streams it step by step.

Each client owns one TCP connection. It sends Hello, then one Step per
computed state as soon as the state exists, then Bye. A trajectory that
diverges to non-finite values is abandoned mid-stream (no Bye), which the
server treats as a partial trajectory: already-paired samples stay valid.

``python -m simstream.client`` runs one client as its own OS process; the
launcher uses this entry point in process mode.
"""

from __future__ import annotations

import argparse
import logging
import socket
import sys

import numpy as np

from .errors import NonFiniteState
from .lorenz import LorenzParams, TrajectorySpec, _advance
from .protocol import Bye, Hello, Step, encode

log = logging.getLogger(__name__)


def run_client(spec: TrajectorySpec, sim_id: int, address: tuple[str, int]) -> int:
    """Stream one trajectory; returns the number of Step messages sent.

    Raises NonFiniteState if the integration diverges (after closing the
    connection without Bye) and propagates socket errors to the caller.
    """
    sock = socket.create_connection(address, timeout=60.0)
    try:
        sock.sendall(encode(Hello(sim_id, spec.params.rho, spec.dt, spec.n_steps)))
        state = np.asarray(spec.initial_state, dtype=np.float64)
        sock.sendall(encode(Step(sim_id, 0, state[0], state[1], state[2])))
        steps_sent = 1
        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(1, spec.n_steps):
                state = _advance(spec.params, state, spec.dt, spec.substeps)
                if not np.isfinite(state).all():
                    raise NonFiniteState(
                        f"client {sim_id} diverged at step {t} (rho={spec.params.rho})",
                        step=t,
                    )
                sock.sendall(encode(Step(sim_id, t, state[0], state[1], state[2])))
                steps_sent += 1
        sock.sendall(encode(Bye(sim_id)))
        return steps_sent
    finally:
        sock.close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="run one simulation client")
    parser.add_argument("--host", required=True)
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--sim-id", type=int, required=True)
    parser.add_argument("--rho", type=float, required=True)
    parser.add_argument("--sigma", type=float, default=10.0)
    parser.add_argument("--beta", type=float, default=8.0 / 3.0)
    parser.add_argument("--x0", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    parser.add_argument("--dt", type=float, required=True)
    parser.add_argument("--steps", type=int, required=True)
    parser.add_argument("--substeps", type=int, default=1)
    args = parser.parse_args(argv)

    spec = TrajectorySpec(
        params=LorenzParams(rho=args.rho, sigma=args.sigma, beta=args.beta),
        initial_state=tuple(args.x0),
        dt=args.dt,
        n_steps=args.steps,
        substeps=args.substeps,
    )
    try:
        run_client(spec, args.sim_id, (args.host, args.port))
    except NonFiniteState as err:
        log.error("%s", err)
        return 1
    except OSError as err:
        log.error("client %d connection failed: %s", args.sim_id, err)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
