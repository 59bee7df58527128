import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simstream.buffer import (
    BatchStats,
    BufferConfig,
    FifoPassThrough,
    MemoryBuffer,
    PushOutcome,
    RandomEvictOnSelect,
    batch_statistics,
)
from simstream.errors import EmptyBatch


def tagged_row(tag: float) -> np.ndarray:
    # unique id in the rho column; the rest is padding
    return np.array([tag, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def random_buffer(capacity=100, ready=20, minimum=10, batch=5, seed=0) -> MemoryBuffer:
    cfg = BufferConfig(capacity, ready, minimum, batch)
    return MemoryBuffer(cfg, RandomEvictOnSelect(capacity, np.random.default_rng(seed)))


def fifo_buffer(capacity=100, batch=5) -> MemoryBuffer:
    cfg = BufferConfig(capacity, max(batch, 1), 0, batch)
    return MemoryBuffer(cfg, FifoPassThrough(capacity))


def test_config_validation():
    with pytest.raises(ValueError):
        BufferConfig(capacity=10, ready_threshold=20, min_threshold=0, batch_size=1)
    with pytest.raises(ValueError):
        BufferConfig(capacity=10, ready_threshold=5, min_threshold=6, batch_size=1)
    with pytest.raises(ValueError):
        BufferConfig(capacity=10, ready_threshold=5, min_threshold=0, batch_size=6)
    with pytest.raises(ValueError):
        BufferConfig(capacity=10, ready_threshold=5, min_threshold=0, batch_size=0)


def test_push_until_ready():
    buf = random_buffer()
    out = buf.push(tagged_row(0))
    assert out is PushOutcome.STORED
    assert len(buf) == 1 and not buf.is_ready
    for i in range(1, 20):
        buf.push(tagged_row(i))
    assert buf.is_ready


def test_ready_latch_at_paper_scale_thresholds():
    # s_ready = 10,000 samples (5 trajectories of 2000 steps)
    cfg = BufferConfig(20_000, 10_000, 6_000, 1024)
    buf = MemoryBuffer(cfg, RandomEvictOnSelect(20_000, np.random.default_rng(0)))
    row = tagged_row(0.0)
    for _ in range(9_999):
        buf.push(row)
    assert not buf.is_ready
    buf.push(row)
    assert buf.is_ready


def test_push_at_capacity_evicts():
    buf = random_buffer(capacity=50, ready=10, minimum=0, batch=1)
    for i in range(50):
        buf.push(tagged_row(i))
    out = buf.push(tagged_row(999))
    assert out is PushOutcome.EVICTED
    assert len(buf) == 50
    assert buf.total_evicted == 1


def test_draw_respects_thresholds():
    buf = random_buffer(capacity=20_000, ready=10_000, minimum=6_000, batch=1024, seed=1)
    for i in range(10_000):
        buf.push(tagged_row(i))
    batch = buf.try_draw()
    assert batch is not None and batch.shape == (1024, 7)
    assert len(buf) == 10_000 - 1024


def test_draw_blocked_below_min_plus_batch():
    buf = random_buffer(capacity=20_000, ready=6_000, minimum=6_000, batch=1024, seed=1)
    for i in range(6_500):
        buf.push(tagged_row(i))
    assert buf.is_ready
    assert buf.try_draw() is None  # 6500 < 6000 + 1024
    assert buf.blocked_draws == 1


def test_draw_blocked_before_ready():
    buf = random_buffer(capacity=100, ready=90, minimum=0, batch=5)
    for i in range(50):
        buf.push(tagged_row(i))
    assert buf.try_draw() is None


def test_draining_allows_partial_batches():
    buf = random_buffer(capacity=1000, ready=500, minimum=300, batch=400)
    for i in range(300):
        buf.push(tagged_row(i))
    assert buf.try_draw() is None
    buf.set_draining()
    batch = buf.try_draw()
    assert batch.shape == (300, 7)
    assert len(buf) == 0
    assert buf.try_draw() is None
    assert buf.is_exhausted


def test_set_draining_idempotent():
    buf = random_buffer()
    buf.set_draining()
    buf.set_draining()
    assert buf.is_draining


def test_draw_wait_times_out():
    buf = random_buffer()
    assert buf.draw_wait(timeout=0.05) is None


def test_fifo_preserves_arrival_order():
    buf = fifo_buffer(capacity=100, batch=10)
    for i in range(35):
        buf.push(tagged_row(i))
    first = buf.try_draw()
    second = buf.try_draw()
    np.testing.assert_array_equal(first[:, 0], np.arange(10))
    np.testing.assert_array_equal(second[:, 0], np.arange(10, 20))
    assert len(buf) == 15


def test_fifo_evicts_oldest_when_full():
    buf = fifo_buffer(capacity=10, batch=10)
    for i in range(15):
        buf.push(tagged_row(i))
    batch = buf.try_draw()
    np.testing.assert_array_equal(batch[:, 0], np.arange(5, 15))


def test_fifo_has_no_thresholds():
    buf = fifo_buffer(capacity=100, batch=10)
    for i in range(10):
        buf.push(tagged_row(i))
    assert buf.try_draw() is not None


def test_drawn_samples_never_reappear():
    buf = random_buffer(capacity=200, ready=100, minimum=0, batch=20, seed=3)
    for i in range(200):
        buf.push(tagged_row(i))
    seen: set[float] = set()
    while (batch := buf.try_draw()) is not None:
        tags = set(batch[:, 0].tolist())
        assert not (tags & seen)
        seen |= tags
    assert len(seen) == 200  # draining not needed: min=0 lets it empty out


def test_draw_uniformity():
    # every tagged sample should land in the first drawn batch with
    # frequency batch/k within 3 standard errors
    k, batch, trials = 200, 32, 2000
    counts = np.zeros(k)
    for trial in range(trials):
        buf = random_buffer(capacity=k, ready=k, minimum=0, batch=batch, seed=9000 + trial)
        for i in range(k):
            buf.push(tagged_row(i))
        drawn = buf.try_draw()
        counts[drawn[:, 0].astype(int)] += 1
    p = batch / k
    se = np.sqrt(trials * p * (1 - p))
    assert np.all(np.abs(counts - trials * p) <= 3 * se)


ops_strategy = st.lists(
    st.one_of(st.just("push"), st.just("draw"), st.just("drain")),
    min_size=1,
    max_size=300,
)


@settings(max_examples=200, deadline=None)
@given(ops=ops_strategy, seed=st.integers(0, 2**31 - 1))
def test_interleaving_invariants(ops, seed):
    capacity, ready, minimum, batch = 40, 20, 10, 5
    buf = random_buffer(capacity, ready, minimum, batch, seed)
    next_tag = 0
    live: set[int] = set()
    drawn_total = 0
    for op in ops:
        if op == "push":
            out = buf.push(tagged_row(next_tag))
            if out is PushOutcome.STORED:
                live.add(next_tag)
            next_tag += 1
        elif op == "draw":
            was_ready = buf.is_ready
            got = buf.try_draw()
            if got is not None:
                assert was_ready or buf.is_draining
                tags = set(got[:, 0].astype(int).tolist())
                assert tags <= live or buf.is_draining
                drawn_total += got.shape[0]
                if not buf.is_draining:
                    assert len(buf) >= minimum  # post-draw floor
        else:
            buf.set_draining()
        assert len(buf) <= capacity  # capacity bound after every operation
    # conservation: pushes == drawn + evicted + still stored
    assert buf.total_pushed == drawn_total + buf.total_evicted + len(buf)


def test_conservation_under_capacity():
    buf = random_buffer(capacity=1000, ready=10, minimum=0, batch=5, seed=5)
    pushes = 0
    draws = 0
    rng = np.random.default_rng(8)
    for _ in range(500):
        if rng.random() < 0.7:
            buf.push(tagged_row(pushes))
            pushes += 1
        else:
            got = buf.try_draw()
            if got is not None:
                draws += got.shape[0]
    assert buf.total_evicted == 0
    assert pushes - draws == len(buf)


def test_batch_statistics_identical_samples():
    rows = np.tile([28.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0], (16, 1))
    stats = batch_statistics(rows)
    assert stats == BatchStats(28.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0)


def test_batch_statistics_two_point_rho():
    rows = np.zeros((1024, 7))
    rows[:512, 0] = 0.0
    rows[512:, 0] = 100.0
    stats = batch_statistics(rows)
    assert stats.rho_mean == 50.0
    expected_std = np.sqrt(512 * 2 * 50.0**2 / 1023)
    np.testing.assert_allclose(stats.rho_std, expected_std, rtol=1e-12)
    assert abs(stats.rho_std - 50.024) < 1e-3


def test_batch_statistics_single_sample_has_zero_std():
    stats = batch_statistics(np.array([[28.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0]]))
    assert stats.rho_std == 0.0 and stats.x_std == 0.0


def test_batch_statistics_empty_batch():
    with pytest.raises(EmptyBatch):
        batch_statistics(np.empty((0, 7)))


def test_batch_statistics_against_global_fixture_stats():
    # batches drawn uniformly from a fixture: stats within 3 standard errors
    rng = np.random.default_rng(13)
    fixture = np.zeros((20_000, 7))
    fixture[:, 0] = rng.choice([0.0, 20.0, 40.0, 60.0, 80.0, 100.0], 20_000)
    fixture[:, 1:4] = rng.normal(5.0, 12.0, (20_000, 3))
    n = 1024
    batch = fixture[rng.choice(20_000, n, replace=False)]
    stats = batch_statistics(batch)
    for col, (mean_attr, std_attr) in zip(
        (0, 1, 2, 3), (("rho_mean", "rho_std"), ("x_mean", "x_std"), ("y_mean", "y_std"), ("z_mean", "z_std"))
    ):
        global_mean = fixture[:, col].mean()
        global_std = fixture[:, col].std(ddof=1)
        se_mean = global_std / np.sqrt(n)
        assert abs(getattr(stats, mean_attr) - global_mean) <= 3 * se_mean
        se_std = global_std / np.sqrt(2 * (n - 1))
        assert abs(getattr(stats, std_attr) - global_std) <= 3 * se_std
