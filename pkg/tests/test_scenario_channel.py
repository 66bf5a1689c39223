import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wifiboost.channel import (LinkRealization, RateTable, dbm_to_mw, fading_gains, free_space_loss,
                               instantaneous_sinr, lte_table, mw_to_dbm, noise_power_dbm, path_loss,
                               rate_from_sinr, rate_trace, wifi_table)
from wifiboost.scenario import (Geometry, InfeasibleGeometry, assign_channels, associate_ue, generate_drop,
                                place_ues)


# -- scenario -------------------------------------------------------------------

def test_placement_inside_area_and_clear_of_aps():
    d = generate_drop(1, 4)
    g = d.geometry
    assert d.ue_positions.shape == (4, 2)
    for p in d.ue_positions:
        assert g.contains(p)
        for ap in g.ap_positions:
            assert math.dist(p, ap) >= 3.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(1, 40))
def test_drop_is_a_function_of_seed(seed, n):
    a, b = generate_drop(seed, n), generate_drop(seed, n)
    assert np.array_equal(a.ue_positions, b.ue_positions)
    assert np.array_equal(a.shadowing_ap, b.shadowing_ap)
    assert a.ue_ap_association == b.ue_ap_association


def test_infeasible_geometry_raises():
    g = Geometry(width=4.0, depth=4.0, bs_position=(2.0, 2.0), ap_positions=[(2.0, 2.0)], min_ap_ue_distance=10.0)
    with pytest.raises(InfeasibleGeometry):
        place_ues(np.random.default_rng(0), 1, g)


def test_two_aps_get_distinct_channels():
    assert assign_channels([(30.0, 25.0), (90.0, 25.0)], 2) == {0: 0, 1: 1}


def test_three_aps_in_a_row_middle_differs():
    # by hand: AP0 -> ch0 (empty), AP1 -> ch1 (empty), AP2 -> least loaded tie,
    # ch1 holds the nearer AP1 so AP2 joins ch0 with the far AP0
    ch = assign_channels([(10.0, 25.0), (60.0, 25.0), (110.0, 25.0)], 2)
    assert ch[1] != ch[0] and ch[1] != ch[2]


@pytest.mark.parametrize("rssi,expected", [([-83.0, -85.0], None), ([-82.0, -90.0], 0), ([-70.0, -60.0], 1),
                                           ([-60.0, -60.0], 0), ([], None)])
def test_association(rssi, expected):
    assert associate_ue(rssi) == expected


# -- channel -----------------------------------------------------------------------

def test_path_loss_examples():
    assert path_loss(10, 5) == pytest.approx(63.68, abs=0.01)
    assert path_loss(1, 5) == pytest.approx(32.8 + 20 * math.log10(5), abs=1e-9)
    assert path_loss(0.1, 5) == path_loss(0.5, 5)


@given(st.floats(0.5, 200), st.floats(0.5, 200))
def test_path_loss_monotone(a, b):
    lo, hi = sorted((a, b))
    assert path_loss(lo, 5) <= path_loss(hi, 5)


def test_path_loss_exponent_is_below_free_space():
    # the indoor LOS slope (16.9 dB/decade) is shallower than free space (20 dB/decade),
    # so at 10 m it sits under the free-space loss; see the ledger
    assert path_loss(10, 5) < free_space_loss(10, 5)


def test_noise_and_conversions():
    assert noise_power_dbm(20, 9) == pytest.approx(-174 + 73.0103 + 9, abs=1e-3)
    assert mw_to_dbm(dbm_to_mw(-37.5)) == pytest.approx(-37.5)
    assert mw_to_dbm(0) == -math.inf


def test_two_equal_interferers_give_minus_three_db():
    link = LinkRealization(path_loss=40.0, shadowing=0.0, carrier_ghz=5.0, bandwidth_mhz=20.0)
    other = LinkRealization(path_loss=40.0, shadowing=0.0, carrier_ghz=5.0, bandwidth_mhz=20.0, tx_power_dbm=20.0)
    sinr = instantaneous_sinr(link, [other, other], tx_power=20.0, noise_figure=9.0, time=0.0)
    assert sinr == pytest.approx(-10 * math.log10(2), abs=1e-3)


def test_fading_has_unit_mean_and_correlation():
    rng = np.random.default_rng(5)
    g = fading_gains(rng, 4, 20_000, doppler=13.9)
    assert g.shape == (4, 20_000)
    assert g.mean() == pytest.approx(1.0, rel=0.05)
    assert (g >= 0).all()
    x = g[0] - g[0].mean()
    rho1 = (x[1:] * x[:-1]).mean() / x.var()
    assert rho1 > 0.9  # 3 km/h is slow fading at 1 ms blocks


def test_rate_lookup_edges():
    t = wifi_table()
    assert rate_from_sinr(-10, t) == 0.0
    assert rate_from_sinr(math.inf, t) == pytest.approx(86.7 * 2)
    assert rate_from_sinr(31.0, t, streams=1) == pytest.approx(86.7)
    assert rate_from_sinr(12.0, t) == pytest.approx(26.0)
    with pytest.raises(ValueError):
        rate_from_sinr(20, t, streams=3)
    with pytest.raises(ValueError):
        RateTable("x", [1.0, 0.0], [1.0, 2.0])


@given(st.lists(st.floats(-20, 60), min_size=1, max_size=50))
def test_vector_rate_lookup_matches_scalar(xs):
    for table in (wifi_table(0.8), lte_table(10, 0.7)):
        vec = rate_trace(np.array(xs), table)
        assert vec.tolist() == pytest.approx([rate_from_sinr(x, table) for x in xs])


@given(st.floats(-20, 60), st.floats(-20, 60))
def test_rate_monotone_in_sinr(a, b):
    lo, hi = sorted((a, b))
    for table in (wifi_table(), lte_table()):
        assert rate_from_sinr(lo, table) <= rate_from_sinr(hi, table)
