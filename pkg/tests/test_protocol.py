import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from simstream.errors import MalformedFrame, ProtocolViolation
from simstream.lorenz import LorenzParams, TrajectorySpec, generate_trajectory
from simstream.protocol import (
    Bye,
    Hello,
    Step,
    StepPairer,
    decode,
    encode,
    pair_steps,
    read_message,
)
from simstream.samples import rows_from_trajectory


def messages_for_trajectory(sim_id, rho, dt, states):
    yield Hello(sim_id, rho, dt, len(states))
    for t, s in enumerate(states):
        yield Step(sim_id, t, float(s[0]), float(s[1]), float(s[2]))
    yield Bye(sim_id)


def test_bye_encoding_is_byte_exact():
    assert encode(Bye(sim_id=0)) == bytes([5, 0, 0, 0, 2, 0, 0, 0, 0])


def test_step_payload_size_and_tag():
    frame = encode(Step(sim_id=1, t=0, x=0.0, y=0.0, z=0.0))
    length = int.from_bytes(frame[:4], "little")
    payload = frame[4:]
    assert length == len(payload) == 33
    assert payload[0] == 1
    assert payload[9:] == b"\x00" * 24


def test_hello_payload_size():
    assert len(encode(Hello(3, 28.0, 1e-2, 2000))) == 4 + 25


finite_f64 = st.floats(allow_nan=False, allow_infinity=False, width=64)
u32 = st.integers(min_value=0, max_value=2**32 - 1)

message_strategy = st.one_of(
    st.builds(Hello, sim_id=u32, rho=finite_f64, dt=finite_f64, n_steps=u32),
    st.builds(Step, sim_id=u32, t=u32, x=finite_f64, y=finite_f64, z=finite_f64),
    st.builds(Bye, sim_id=u32),
)


@given(message_strategy)
def test_encode_decode_round_trip(msg):
    assert decode(encode(msg)) == msg


def test_decode_rejects_unknown_tag():
    with pytest.raises(MalformedFrame):
        decode(bytes([1, 0, 0, 0, 9]))


def test_decode_rejects_length_mismatch():
    # declared length 3 with a Step tag
    with pytest.raises(MalformedFrame):
        decode(bytes([3, 0, 0, 0, 1, 0, 0]))


def test_decode_rejects_truncation():
    frame = encode(Hello(1, 28.0, 1e-2, 100))
    with pytest.raises(MalformedFrame):
        decode(frame[:-1])


def test_read_message_stream():
    buf = io.BytesIO(encode(Hello(1, 28.0, 1e-2, 2)) + encode(Bye(1)))
    assert read_message(buf) == Hello(1, 28.0, 1e-2, 2)
    assert read_message(buf) == Bye(1)
    assert read_message(buf) is None


def test_read_message_truncated_stream():
    frame = encode(Step(1, 0, 1.0, 2.0, 3.0))
    buf = io.BytesIO(frame[: len(frame) - 5])
    with pytest.raises(MalformedFrame):
        read_message(buf)


def test_pairing_matches_euler_inverse():
    # two steps 0.01 apart recover the derivative that produced them
    states = [(1.0, 1.0, 1.0), (1.0, 1.26, 1.0 + 0.01 * (1.0 - 8.0 / 3.0))]
    rows = pair_steps(messages_for_trajectory(4, 28.0, 0.01, states))
    assert rows.shape == (1, 7)
    np.testing.assert_allclose(rows[0, 4:], [0.0, 26.0, 1.0 - 8.0 / 3.0], atol=1e-12)
    assert rows[0, 0] == 28.0
    np.testing.assert_array_equal(rows[0, 1:4], states[0])


def test_trajectory_yields_n_minus_one_samples():
    spec = TrajectorySpec(LorenzParams(28.0), (1.0, 1.0, 1.0), 1e-2, 2000)
    traj = generate_trajectory(spec)
    rows = pair_steps(messages_for_trajectory(0, 28.0, 1e-2, traj))
    assert rows.shape == (1999, 7)


def test_pairing_reproduces_direct_finite_differences_bitwise():
    spec = TrajectorySpec(LorenzParams(40.0), (2.0, -1.0, 7.0), 1e-2, 400, substeps=10)
    traj = generate_trajectory(spec)
    via_protocol = pair_steps(messages_for_trajectory(0, 40.0, 1e-2, traj))
    direct = rows_from_trajectory(40.0, traj, 1e-2)
    assert np.array_equal(via_protocol, direct)


def test_out_of_order_step_rejected():
    pairer = StepPairer()
    pairer.feed(Hello(0, 28.0, 1e-2, 10))
    for t in range(4):
        pairer.feed(Step(0, t, 0.0, 0.0, 0.0))
    with pytest.raises(ProtocolViolation):
        pairer.feed(Step(0, 5 + 1, 0.0, 0.0, 0.0))


def test_step_before_hello_rejected():
    with pytest.raises(ProtocolViolation):
        StepPairer().feed(Step(0, 0, 0.0, 0.0, 0.0))


def test_duplicate_hello_rejected():
    pairer = StepPairer()
    pairer.feed(Hello(0, 28.0, 1e-2, 10))
    with pytest.raises(ProtocolViolation):
        pairer.feed(Hello(0, 28.0, 1e-2, 10))


def test_bye_with_wrong_step_count_rejected():
    pairer = StepPairer()
    pairer.feed(Hello(0, 28.0, 1e-2, 10))
    pairer.feed(Step(0, 0, 0.0, 0.0, 0.0))
    with pytest.raises(ProtocolViolation):
        pairer.feed(Bye(0))


def test_message_after_bye_rejected():
    pairer = StepPairer()
    pairer.feed(Hello(0, 28.0, 1e-2, 1))
    pairer.feed(Step(0, 0, 0.0, 0.0, 0.0))
    pairer.feed(Bye(0))
    with pytest.raises(ProtocolViolation):
        pairer.feed(Step(0, 1, 0.0, 0.0, 0.0))


def test_pairer_holds_one_pending_state():
    pairer = StepPairer()
    pairer.feed(Hello(0, 28.0, 1e-2, 1000))
    for t in range(500):
        pairer.feed(Step(0, t, float(t), 0.0, 0.0))
    # a single (3,) pending state regardless of how many steps went through
    assert pairer._pending.shape == (3,)
    assert pairer.samples_emitted == 499
