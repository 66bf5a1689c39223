import csv
import json
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wifiboost.metrics import (Cdf, DropResult, EmptySampleError, gain, summarize, sum_cell_throughput,
                               ue_throughput, write_manifest, write_samples_csv, write_summary_csv)


def result(mode="lwip", n=2, drop=0, bits=(10_000_000, 5_000_000), active=(1.0, 2.0), switches=()):
    return DropResult(mode=mode, n_ues=n, drop=drop, seed=drop, duration_s=10.0, ue_dl_bits=list(bits),
                      ue_active_s=list(active), cell_dl_bits={"AP0": sum(bits), "AP1": 0, "BS": 0},
                      switch_log=list(switches))


def test_ue_throughput_is_bits_over_active_time():
    r = result()
    assert ue_throughput(r, 0) == pytest.approx(10.0)
    assert ue_throughput(r, 1) == pytest.approx(2.5)
    assert ue_throughput(result(active=(0.0, 1.0)), 0) == 0.0


def test_sum_cell():
    assert sum_cell_throughput(result()) == pytest.approx(1.5)


def test_quantiles_interpolate():
    c = Cdf([1, 2, 3, 4])
    assert c.median == 2.5
    assert c.quantile(0.0) == 1 and c.quantile(1.0) == 4
    assert c.cdf(2) == 0.5
    with pytest.raises(ValueError):
        c.quantile(1.5)
    with pytest.raises(EmptySampleError):
        Cdf([])
    with pytest.raises(ValueError):
        Cdf([1.0, float("nan")])


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=100), st.floats(0, 1), st.floats(0, 1))
def test_quantile_monotone(xs, a, b):
    c = Cdf(xs)
    lo, hi = sorted((a, b))
    assert c.quantile(lo) <= c.quantile(hi)
    assert min(xs) <= c.median <= max(xs)


def test_gain():
    assert gain(Cdf([2, 4]), Cdf([1, 2])) == pytest.approx(2.0)
    assert gain(Cdf([1]), Cdf([0])) == float("inf")


def _many():
    rng = np.random.default_rng(0)
    out = []
    for mode in ("lwip", "boost"):
        for d in range(6):
            bits = rng.integers(1, 10**8, size=3).tolist()
            sw = [(1.0, 0, "switch_to_lte", "stall")] if (mode == "boost" and d % 3 == 0) else []
            out.append(result(mode, 3, d, bits, [1.0, 2.0, 3.0], sw))
    return out


@given(st.randoms())
def test_aggregation_is_order_independent(rnd: random.Random):
    rs = _many()
    shuffled = rs[:]
    rnd.shuffle(shuffled)
    assert summarize(rs) == summarize(shuffled)


def test_switch_fraction_counts_drops():
    rows = {s.mode: s for s in summarize(_many())}
    assert rows["boost"].switch_drop_fraction == pytest.approx(2 / 6)
    assert rows["lwip"].switch_drop_fraction == 0.0


def test_output_files(tmp_path):
    rs = _many()
    write_samples_csv(rs, tmp_path / "s.csv")
    write_summary_csv(rs, tmp_path / "m.csv")
    write_manifest(tmp_path / "x.json", {"a": 1}, {"4/0": 7}, {"extra": True})
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["mode", "n_ues", "drop", "ue", "throughput_mbps"]
    assert len(rows) == 1 + 36
    summ = list(csv.reader(open(tmp_path / "m.csv")))
    assert summ[0] == ["mode", "n_ues", "median", "p10", "p90", "sum_cell_median"]
    assert [r[0] for r in summ[1:]] == ["boost", "lwip"]
    doc = json.loads((tmp_path / "x.json").read_text())
    assert doc["seeds"] == {"4/0": 7} and doc["extra"] is True
    # rewriting gives identical bytes
    first = (tmp_path / "m.csv").read_bytes()
    write_summary_csv(list(reversed(rs)), tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_bytes() == first
