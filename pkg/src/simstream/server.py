"""TCP ingestion server: decodes client streams and feeds the memory buffer.

One handler thread per connection; each handler owns its pairing state and
pushes completed samples into the shared buffer (which serializes access).
A malformed frame or protocol violation drops that connection and discards
only its single pending state. A Bye from CONTROL_SIM_ID on its own
connection is the ensemble-finished signal: the buffer switches to draining.
"""

from __future__ import annotations

import logging
import socket
import threading

from .buffer import MemoryBuffer
from .errors import MalformedFrame, ProtocolViolation
from .protocol import CONTROL_SIM_ID, Bye, Hello, StepPairer, read_message

log = logging.getLogger(__name__)


class IngestionServer:
    """Accepts simulation clients and streams their samples into a buffer."""

    def __init__(self, buffer: MemoryBuffer, host: str = "127.0.0.1", port: int = 0):
        self.buffer = buffer
        self._listener = socket.create_server((host, port))
        self.address: tuple[str, int] = self._listener.getsockname()[:2]
        self._accept_thread: threading.Thread | None = None
        self._handlers: list[threading.Thread] = []
        self._handlers_lock = threading.Lock()
        self._stopping = threading.Event()
        self.ensemble_finished = threading.Event()
        self._counts_lock = threading.Lock()
        self._sample_counts: dict[int, int] = {}
        self._partial_sims: set[int] = set()

    def start(self) -> None:
        self._accept_thread = threading.Thread(target=self._accept_loop, name="ingest-accept", daemon=True)
        self._accept_thread.start()

    def stop(self) -> None:
        """Stop accepting and wait for live handlers to finish."""
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5.0)
        with self._handlers_lock:
            handlers = list(self._handlers)
        for t in handlers:
            t.join(timeout=5.0)

    def sample_counts(self) -> dict[int, int]:
        """Paired samples ingested per sim_id."""
        with self._counts_lock:
            return dict(self._sample_counts)

    def partial_sims(self) -> set[int]:
        """sim_ids whose connection ended without a clean Bye."""
        with self._counts_lock:
            return set(self._partial_sims)

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, peer = self._listener.accept()
            except OSError:
                break
            handler = threading.Thread(target=self._handle, args=(conn, peer), daemon=True)
            with self._handlers_lock:
                self._handlers = [t for t in self._handlers if t.is_alive()]
                self._handlers.append(handler)
            handler.start()

    def _handle(self, conn: socket.socket, peer) -> None:
        pairer = StepPairer()
        sim_id: int | None = None
        clean = False
        try:
            with conn, conn.makefile("rb") as stream:
                while True:
                    msg = read_message(stream)
                    if msg is None:
                        break
                    if isinstance(msg, Bye) and msg.sim_id == CONTROL_SIM_ID and pairer.hello is None:
                        log.info("ensemble-finished signal received; buffer draining")
                        self.ensemble_finished.set()
                        self.buffer.set_draining()
                        clean = True
                        break
                    if isinstance(msg, Hello):
                        sim_id = msg.sim_id
                    row = pairer.feed(msg)
                    if row is not None:
                        self.buffer.push(row)
                    if pairer.finished:
                        clean = True
                        break
        except (MalformedFrame, ProtocolViolation) as err:
            log.warning("dropping connection %s (sim %s): %s", peer, sim_id, err)
        except OSError as err:
            log.warning("connection %s (sim %s) errored: %s", peer, sim_id, err)
        finally:
            if sim_id is not None:
                with self._counts_lock:
                    self._sample_counts[sim_id] = pairer.samples_emitted
                    if not clean:
                        self._partial_sims.add(sim_id)

    def __enter__(self) -> "IngestionServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
