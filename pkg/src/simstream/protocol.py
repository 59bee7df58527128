"""Binary wire protocol between simulation clients and the training server.

Framing: every message is ``u32 little-endian payload length`` followed by
the payload. Payloads start with a one-byte tag, then the fields in
declaration order, little-endian, f64 as IEEE-754 binary64:

    tag 0  Hello  sim_id:u32  rho:f64  dt:f64  n_steps:u32   (25 bytes)
    tag 1  Step   sim_id:u32  t:u32    x:f64 y:f64 z:f64     (33 bytes)
    tag 2  Bye    sim_id:u32                                  (5 bytes)

Per connection a client sends exactly one Hello, then Steps with
consecutive t starting at 0, then exactly one Bye. A Bye carrying
``CONTROL_SIM_ID`` on its own connection is the launcher's ensemble-finished
signal (see docs/protocol.md).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import MalformedFrame, ProtocolViolation
from .samples import make_sample

TAG_HELLO = 0
TAG_STEP = 1
TAG_BYE = 2

# reserved sim_id: a bare Bye from it signals end-of-ensemble
CONTROL_SIM_ID = 0xFFFFFFFF

_LEN = struct.Struct("<I")
_HELLO = struct.Struct("<BIddI")
_STEP = struct.Struct("<BIIddd")
_BYE = struct.Struct("<BI")


@dataclass(frozen=True)
class Hello:
    sim_id: int
    rho: float
    dt: float
    n_steps: int


@dataclass(frozen=True)
class Step:
    sim_id: int
    t: int
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Bye:
    sim_id: int


Message = Hello | Step | Bye


def encode(msg: Message) -> bytes:
    """Length-prefixed frame for one message; deterministic and bit-exact."""
    if isinstance(msg, Hello):
        payload = _HELLO.pack(TAG_HELLO, msg.sim_id, msg.rho, msg.dt, msg.n_steps)
    elif isinstance(msg, Step):
        payload = _STEP.pack(TAG_STEP, msg.sim_id, msg.t, msg.x, msg.y, msg.z)
    elif isinstance(msg, Bye):
        payload = _BYE.pack(TAG_BYE, msg.sim_id)
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    return _LEN.pack(len(payload)) + payload


def decode_payload(payload: bytes) -> Message:
    """Inverse of the payload part of ``encode``."""
    if not payload:
        raise MalformedFrame("empty payload")
    tag = payload[0]
    if tag == TAG_HELLO:
        if len(payload) != _HELLO.size:
            raise MalformedFrame(f"Hello payload must be {_HELLO.size} bytes, got {len(payload)}")
        _, sim_id, rho, dt, n_steps = _HELLO.unpack(payload)
        return Hello(sim_id, rho, dt, n_steps)
    if tag == TAG_STEP:
        if len(payload) != _STEP.size:
            raise MalformedFrame(f"Step payload must be {_STEP.size} bytes, got {len(payload)}")
        _, sim_id, t, x, y, z = _STEP.unpack(payload)
        return Step(sim_id, t, x, y, z)
    if tag == TAG_BYE:
        if len(payload) != _BYE.size:
            raise MalformedFrame(f"Bye payload must be {_BYE.size} bytes, got {len(payload)}")
        _, sim_id = _BYE.unpack(payload)
        return Bye(sim_id)
    raise MalformedFrame(f"unknown message tag {tag}")


def decode(frame: bytes) -> Message:
    """Decode one complete frame (length prefix + payload)."""
    if len(frame) < _LEN.size:
        raise MalformedFrame("frame shorter than its length prefix")
    (length,) = _LEN.unpack(frame[: _LEN.size])
    payload = frame[_LEN.size :]
    if len(payload) != length:
        raise MalformedFrame(f"declared length {length} but payload has {len(payload)} bytes")
    return decode_payload(payload)


def read_message(stream) -> Message | None:
    """Read one message from a blocking binary stream; None on clean EOF.

    Raises MalformedFrame on truncation mid-frame or an undecodable payload.
    """
    prefix = stream.read(_LEN.size)
    if not prefix:
        return None
    if len(prefix) < _LEN.size:
        raise MalformedFrame("connection closed inside a length prefix")
    (length,) = _LEN.unpack(prefix)
    payload = stream.read(length)
    if len(payload) < length:
        raise MalformedFrame("connection closed inside a payload")
    return decode_payload(payload)


class StepPairer:
    """Per-connection state machine pairing consecutive steps into samples.

    Feeding a protocol-conformant message stream yields one packed sample row
    per consecutive step pair: ``(rho, Y_t, (Y_{t+1} - Y_t) / dt)``. Holds at
    most one pending state, so server memory is O(live connections).
    """

    def __init__(self):
        self.hello: Hello | None = None
        self.finished = False
        self.steps_seen = 0
        self.samples_emitted = 0
        self._pending: np.ndarray | None = None

    def feed(self, msg: Message) -> np.ndarray | None:
        """Advance the state machine; returns a sample row when a pair completes."""
        if self.finished:
            raise ProtocolViolation("message after Bye")
        if isinstance(msg, Hello):
            if self.hello is not None:
                raise ProtocolViolation("duplicate Hello")
            if msg.n_steps < 1 or msg.dt <= 0:
                raise ProtocolViolation(f"invalid Hello: {msg}")
            self.hello = msg
            return None
        if isinstance(msg, Step):
            if self.hello is None:
                raise ProtocolViolation("Step before Hello")
            if msg.sim_id != self.hello.sim_id:
                raise ProtocolViolation(f"sim_id {msg.sim_id} != Hello sim_id {self.hello.sim_id}")
            if msg.t != self.steps_seen:
                raise ProtocolViolation(f"expected step t={self.steps_seen}, got t={msg.t}")
            if msg.t >= self.hello.n_steps:
                raise ProtocolViolation(f"step t={msg.t} beyond announced n_steps={self.hello.n_steps}")
            state = np.array([msg.x, msg.y, msg.z])
            self.steps_seen += 1
            sample = None
            if self._pending is not None:
                velocity = (state - self._pending) / self.hello.dt
                sample = make_sample(self.hello.rho, self._pending, velocity)
                self.samples_emitted += 1
            self._pending = state
            return sample
        if isinstance(msg, Bye):
            if self.hello is None:
                raise ProtocolViolation("Bye before Hello")
            if msg.sim_id != self.hello.sim_id:
                raise ProtocolViolation(f"Bye sim_id {msg.sim_id} != Hello sim_id {self.hello.sim_id}")
            if self.steps_seen != self.hello.n_steps:
                raise ProtocolViolation(
                    f"Bye after {self.steps_seen} steps, Hello announced {self.hello.n_steps}"
                )
            self.finished = True
            self._pending = None
            return None
        raise ProtocolViolation(f"unexpected message {msg!r}")


def pair_steps(messages) -> np.ndarray:
    """Run a whole message sequence through a pairer; returns ``(n, 7)`` samples."""
    pairer = StepPairer()
    rows = []
    for msg in messages:
        row = pairer.feed(msg)
        if row is not None:
            rows.append(row)
    if rows:
        return np.stack(rows)
    return np.empty((0, 7))
