import math

import pytest
from hypothesis import given, settings, strategies as st

from wifiboost.rlm import (Decision, DecisionThresholds, Ewma, GovernorParams, Path, ProbeConfig, ProbeStats,
                           Rcm, SwitchGovernor, Ucm, evaluate_initial_criteria, measure_initial_probes,
                           ucm_rate, updates_to_converge)

THR = DecisionThresholds()


def make_rcm(estimate=math.inf, t_switch=0.5, **probe):
    gov = SwitchGovernor(GovernorParams(t_switch_s=t_switch))
    rcm = Rcm(ProbeConfig(**probe), DecisionThresholds(), gov, 0.25, lambda ue: estimate)
    rcm.add_ue(0, -50.0)
    rcm.on_initial_result(0, ProbeStats(0.0, 0.001, 5.0), 0.0, connecting=True)
    assert rcm.ues[0].path is Path.WIFI
    return rcm


# -- probing configuration ---------------------------------------------------------

def test_initial_probe_train():
    p = ProbeConfig()
    assert p.x_ini == 41
    assert p.ini_spacing_s == pytest.approx(0.0024)


def test_data_probe_overhead():
    p = ProbeConfig()
    assert int(1.0 / p.t_dat_s) == 333
    assert p.s_dat_bits / p.t_dat_s == pytest.approx(53_333.3, abs=0.1)


def test_lossless_initial_train_echoes_offered_rate():
    p = ProbeConfig()
    sent = [i * p.ini_spacing_s for i in range(p.x_ini)]
    recv = {i: t + 0.0004 for i, t in enumerate(sent)}
    s = measure_initial_probes(sent, recv, p.s_ini_bits)
    assert s.probe_lost == 0.0
    assert s.probe_delay == pytest.approx(0.0004)
    assert s.probe_rate == 5.0
    assert evaluate_initial_criteria(s, -60.0, THR) is Path.WIFI


def test_lossy_initial_train():
    sent = [i * 0.0024 for i in range(41)]
    recv = {i: sent[i] + 0.01 for i in range(0, 41, 2)}
    s = measure_initial_probes(sent, recv, 12000)
    assert s.probe_lost == pytest.approx(20 / 41)
    assert s.probe_rate < 5.0
    assert measure_initial_probes(sent, {}, 12000).probe_lost == 1.0
    with pytest.raises(ValueError):
        measure_initial_probes([], {}, 12000)


@pytest.mark.parametrize("stats,rssi,path", [
    (ProbeStats(0.05, 0.01, 4.9), -60.0, Path.LTE),
    (ProbeStats(0.95, 0.001, 5.0), -60.0, Path.LTE),
    (ProbeStats(0.0, 0.6, 5.0), -60.0, Path.LTE),
    (ProbeStats(0.89, 0.4, 5.0), -60.0, Path.WIFI),
    (ProbeStats(0.0, 0.001, 5.0), -83.0, Path.LTE),
    (None, -60.0, Path.LTE),
])
def test_initial_criteria_conjunction(stats, rssi, path):
    assert evaluate_initial_criteria(stats, rssi, THR) is path


def test_ucm_rate_between_probes():
    assert ucm_rate(30_000, 0.003) == pytest.approx(10.0)
    u = Ucm()
    assert u.on_active_probe(0.0) is None
    u.on_data(30_000)
    assert u.on_active_probe(0.003) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        ucm_rate(1, 0)


# -- EWMA ---------------------------------------------------------------------------

@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=200), st.floats(0.01, 1.0))
def test_ewma_stays_within_sample_range(xs, alpha):
    e = Ewma(alpha)
    for i, x in enumerate(xs):
        v = e.update(x)
        seen = xs[: i + 1]
        assert min(seen) - 1e-9 <= v <= max(seen) + 1e-9


@given(st.floats(0.05, 0.95), st.floats(-100, 100), st.floats(-100, 100))
def test_ewma_converges_in_derived_count(alpha, start, target):
    k = updates_to_converge(alpha, 0.01)
    # oracle: the error shrinks by (1 - alpha) per update
    assert (1 - alpha) ** k <= 0.01 < (1 - alpha) ** (k - 1)
    e = Ewma(alpha)
    e.update(start)
    for _ in range(k):
        e.update(target)
    assert abs(e.value - target) <= 0.01 * abs(start - target) + 1e-9


def test_ewma_step_example():
    e = Ewma(0.25)
    e.update(10.0)
    vals = [e.update(2.0) for _ in range(4)]
    assert vals == pytest.approx([8.0, 6.5, 5.375, 4.53125])


# -- governor ---------------------------------------------------------------------

proposal = st.tuples(st.floats(0.0, 1.0), st.sampled_from([Decision.SWITCH_TO_LTE, Decision.SWITCH_TO_WIFI]),
                     st.one_of(st.none(), st.floats(0.0, 10.0)))


@settings(max_examples=300)
@given(st.lists(proposal, max_size=80), st.floats(0.0, 1.0), st.floats(0.0, 5.0))
def test_governor_spacing_and_admission(stream, t_switch, r_switch):
    g = SwitchGovernor(GovernorParams(t_switch_s=t_switch, r_switch_mbps=r_switch))
    now = 0.0
    committed = []
    for dt, d, est in stream:
        now += dt
        if g.govern(d, now, est):
            committed.append(now)
            if d is Decision.SWITCH_TO_LTE and est is not None:
                assert est >= r_switch
    assert all(b - a >= t_switch for a, b in zip(committed, committed[1:]))
    assert [c[0] for c in g.commits] == committed


def test_governor_admits_when_lte_estimate_is_enough():
    g = SwitchGovernor()
    assert g.govern(Decision.SWITCH_TO_LTE, 0.0, 63.0 / 21)
    g2 = SwitchGovernor()
    assert not g2.govern(Decision.SWITCH_TO_LTE, 0.0, 1.9)


# -- stall ------------------------------------------------------------------------

def test_three_missing_acks_switch_on_the_third():
    rcm = make_rcm()
    t = 1.0
    assert rcm.on_probe_ack(0, 20.0, t) is Decision.STAY
    assert rcm.on_missing_ack(0, t + 0.003) is Decision.STAY
    assert rcm.on_missing_ack(0, t + 0.006) is Decision.STAY
    assert rcm.ues[0].path is Path.WIFI
    assert rcm.on_missing_ack(0, t + 0.009) is Decision.SWITCH_TO_LTE
    assert rcm.ues[0].path is Path.LTE
    assert rcm.log[-1].reason == "stall"


@settings(max_examples=300)
@given(st.lists(st.booleans(), max_size=60))
def test_stall_fires_exactly_at_third_consecutive_miss(pattern):
    # True = probe ACK received, False = ACK missing
    rcm = make_rcm(t_switch=0.0)
    run, expected = 0, None
    for i, ok in enumerate(pattern):
        run = 0 if ok else run + 1
        if run == 3:
            expected = i
            break
    got = None
    for i, ok in enumerate(pattern):
        t = 1.0 + 0.003 * i
        d = rcm.on_probe_ack(0, 20.0, t) if ok else rcm.on_missing_ack(0, t)
        if d is Decision.SWITCH_TO_LTE:
            got = i
            break
    assert got == expected


def test_denied_stall_retries_on_next_miss():
    rcm = make_rcm()
    rcm.governor.last_switch_time = 0.9
    for k in range(3):
        d = rcm.on_missing_ack(0, 1.0 + 0.003 * k)
    assert d is Decision.DENIED
    assert rcm.on_missing_ack(0, 1.41) is Decision.SWITCH_TO_LTE


# -- congestion ----------------------------------------------------------------------

def ewma_switch_index(pre: float, post: float, alpha: float, thr: float) -> int:
    """Oracle: number of post-onset samples until the filtered value drops under thr."""
    v, k = pre, 0
    while v >= thr:
        v = (1 - alpha) * v + alpha * post
        k += 1
    return k


@pytest.mark.parametrize("pre,gov_delay", [(20.0, 0.0), (40.0, 0.0), (20.0, 0.1), (8.0, 0.3)])
def test_throttle_to_one_mbps_switches_in_time(pre, gov_delay):
    p = ProbeConfig()
    rcm = make_rcm()
    t = 1.0
    for _ in range(30):
        assert rcm.on_probe_ack(0, pre, t) is Decision.STAY
        t += p.t_dat_s
    onset = t
    if gov_delay:
        rcm.governor.last_switch_time = onset - (0.5 - gov_delay)
    k_oracle = ewma_switch_index(rcm.ues[0].ewma_throughput, 1.0, 0.25, 5.0)
    switched_at, k = None, 0
    while switched_at is None and t < onset + 5:
        t += p.t_dat_s
        k += 1
        if rcm.on_probe_ack(0, 1.0, t) is Decision.SWITCH_TO_LTE:
            switched_at = t
    assert switched_at is not None
    assert rcm.log[-1].reason == "congestion"
    assert switched_at - onset <= 10 * p.t_dat_s + gov_delay + 1e-9
    if not gov_delay:
        assert k == k_oracle


def test_two_mbps_after_ten():
    rcm = make_rcm()
    rcm.on_probe_ack(0, 10.0, 1.0)
    ds = [rcm.on_probe_ack(0, 2.0, 1.0 + 0.003 * i) for i in range(1, 6)]
    assert ds.index(Decision.SWITCH_TO_LTE) == 3  # the 4th post-step update


def test_inactivity_sets_wifi_only_without_governor():
    rcm = make_rcm()
    rcm.governor.last_switch_time = 0.99
    assert rcm.on_probe_ack(0, 0.3, 1.0) is Decision.WIFI_ONLY
    assert rcm.ues[0].path is Path.WIFI_ONLY
    rcm.resume_boost(0)
    assert rcm.ues[0].path is Path.WIFI


def test_reprobe_schedule():
    rcm = make_rcm()
    rcm.on_missing_ack(0, 1.0)
    rcm.on_missing_ack(0, 1.003)
    rcm.on_missing_ack(0, 1.006)
    assert not rcm.reprobe_due(0, 2.0)
    assert rcm.reprobe_due(0, 3.01)
    assert rcm.reprobe_attempts(0.0, 10.0) == 5
    # passing re-probe is a governed switch back
    assert rcm.on_initial_result(0, ProbeStats(0, 0.001, 5.0), 3.1, connecting=False) is Decision.SWITCH_TO_WIFI


def test_connection_respects_lte_admission():
    rcm = make_rcm(estimate=1.0)
    rcm.add_ue(1, -60.0)
    rcm.on_initial_result(1, ProbeStats(1.0, math.inf, 0.0), 0.0, connecting=True)
    assert rcm.ues[1].path is Path.WIFI
    rcm.add_ue(2, -90.0)
    rcm.on_initial_result(2, None, 0.0, connecting=True)
    assert rcm.ues[2].path is Path.LTE


def test_config_validation():
    with pytest.raises(ValueError):
        ProbeConfig(x_stall=0).validate()
    with pytest.raises(ValueError):
        ProbeConfig(s_ini_bits=10**9).validate()
    with pytest.raises(ValueError):
        DecisionThresholds(tph_min_mbps=-1).validate()
