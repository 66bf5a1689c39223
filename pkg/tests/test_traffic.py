import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wifiboost.traffic import (Direction, FtpSession, Packet, PacketClass, TxQueue, generate_tcp_acks,
                               ipsec_encapsulate, next_reading_time, packets_completed, segment_file)


def brute_force_outer(inner: int) -> int:
    # smallest pad so that inner + 2 trailer bytes + pad fills whole 16 B blocks
    pad = 0
    while (inner + 2 + pad) % 16:
        pad += 1
    return inner + 66 + pad


def test_ipsec_matches_padding_oracle_for_every_size():
    for inner in range(1, 3001):
        assert ipsec_encapsulate(inner) == brute_force_outer(inner), inner


@pytest.mark.parametrize("inner,outer", [(1500, 1568), (46, 112), (100, 176)])
def test_ipsec_examples(inner, outer):
    assert ipsec_encapsulate(inner) == outer


def test_ipsec_rejects_empty_datagram():
    with pytest.raises(ValueError):
        ipsec_encapsulate(0)


def test_segment_file_dl_file():
    sizes = segment_file(500_000)
    assert len(sizes) == 334
    assert sizes.count(1500) == 333 and sizes[-1] == 500


@given(st.integers(0, 2_000_000), st.integers(40, 9000))
def test_segment_file_conserves_bytes(size, mtu):
    sizes = segment_file(size, mtu)
    assert sum(sizes) == size
    assert all(0 < s <= mtu for s in sizes)


def test_tcp_acks_one_per_three():
    assert generate_tcp_acks(3) == 1
    assert generate_tcp_acks(2) == 0
    assert generate_tcp_acks(334) == 111
    assert generate_tcp_acks(334, already_acked=100) == 11


def test_packets_completed_counts_mtu_boundaries():
    assert packets_completed(500_000, 0, 1500) == 1
    assert packets_completed(500_000, 1499, 1501) == 1
    assert packets_completed(500_000, 499_500, 500_000) == 1  # the 500 B tail
    assert packets_completed(500_000, 0, 500_000) == 334


def test_reading_time_mean():
    rng = np.random.default_rng(3)
    xs = rng.exponential(0.1, 1_000_000)
    assert 0.099 <= xs.mean() <= 0.101
    assert next_reading_time(np.random.default_rng(1)) >= 0


def test_ftp_session_cycle():
    s = FtpSession(0, Direction.DL, 3000)
    s.start_file(0)
    with pytest.raises(RuntimeError):
        s.start_file(1)
    assert not s.consume(1000)
    assert s.consume(2000)
    assert s.state == "reading" and s.files_completed == 1
    s.start_file(5)
    with pytest.raises(RuntimeError):
        s.consume(5000)


def test_queue_serves_ctrl_then_acks_then_data():
    q = TxQueue()
    q.push_file(3000)
    q.push_acks(2)
    q.push_ctrl(Packet(20, PacketClass.PROBE, Direction.DL, 0))
    ctrl, acks, segs, used = q.serve(10**9)
    assert [p.cls for p in ctrl] == [PacketClass.PROBE]
    assert acks == 2
    assert sum(n for _, n, _ in segs) == 3000
    assert used == 8 * (20 + 2 * 40 + 3000)
    assert not q


def test_encapsulated_queue_charges_outer_size():
    q = TxQueue(encap=True)
    q.push_file(1500)
    *_, used = q.serve(10**9)
    assert used == 8 * 1568


@settings(max_examples=200)
@given(st.lists(st.integers(1, 20_000), min_size=1, max_size=5), st.integers(0, 200_000),
       st.booleans(), st.booleans())
def test_serve_then_restore_is_identity(files, budget, encap, whole):
    q = TxQueue(encap=encap)
    for f in files:
        q.push_file(f)
    q.push_acks(3)
    before = (q.backlog_air_bits(), q.acks)
    ctrl, acks, segs, used = q.serve(budget, whole)
    # whole-packet service may overrun by one data packet when nothing else fits
    assert used <= budget + 8 * q.air_bytes(1500) or not whole
    q.restore(ctrl, acks, segs)
    assert (q.backlog_air_bits(), q.acks) == before


@given(st.lists(st.integers(1, 50_000), min_size=1, max_size=6), st.integers(1, 400_000))
def test_repeated_service_drains_exact_bytes(files, budget):
    q = TxQueue(encap=True)
    for f in files:
        q.push_file(f)
    delivered = 0
    for _ in range(10_000):
        if not q:
            break
        _, _, segs, used = q.serve(max(budget, 8 * 1568))
        assert used > 0
        delivered += sum(n for _, n, _ in segs)
    assert delivered == sum(files)
