"""Per-drop ledgers, throughput metrics, CDFs and result files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CELLS = ("AP0", "AP1", "BS")


@dataclass
class DropResult:
    mode: str
    n_ues: int
    drop: int
    seed: int
    duration_s: float
    ue_dl_bits: list[int]
    ue_active_s: list[float]
    cell_dl_bits: dict[str, int]
    ue_ul_bits: list[int] = field(default_factory=list)
    # on-air bits that are not application goodput (IPsec framing, probes, TCP ACKs)
    overhead_bits: dict[str, int] = field(default_factory=dict)
    injected_dl_bits: int = 0
    inflight_dl_bits: int = 0
    switch_log: list[tuple[float, int, str, str]] = field(default_factory=list)
    collisions: int = 0
    wifi_ul_ftp_bits: int = 0
    lte_dl_ue_seconds: float = 0.0
    events: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @property
    def data_switches(self) -> list[tuple[float, int, str, str]]:
        """Data-phase Wi-Fi to LTE moves (congestion or stall)."""
        return [e for e in self.switch_log if e[2] == "switch_to_lte" and e[3] in ("congestion", "stall")]


def ue_throughput(result: DropResult, ue: int) -> float:
    """DL goodput of one UE in Mbps while it had a file to receive.

    Bits are application bits only. The divisor is the time the UE had a DL
    file pending; a UE that never had one reports 0.
    """
    active = result.ue_active_s[ue]
    if active <= 0:
        return 0.0
    return result.ue_dl_bits[ue] / active / 1e6


def ue_throughputs(result: DropResult) -> list[float]:
    return [ue_throughput(result, u) for u in range(result.n_ues)]


def sum_cell_throughput(result: DropResult) -> float:
    """Delivered DL application bits over every cell, per second of drop."""
    if result.duration_s <= 0:
        return 0.0
    return sum(result.cell_dl_bits.values()) / result.duration_s / 1e6


class EmptySampleError(ValueError):
    pass


class Cdf:
    """Empirical distribution with linearly interpolated quantiles."""

    def __init__(self, samples):
        xs = np.sort(np.asarray(list(samples), dtype=float))
        if xs.size == 0:
            raise EmptySampleError("cannot build a CDF from no samples")
        if np.isnan(xs).any():
            raise ValueError("samples contain NaN")
        self.samples = xs

    def __len__(self) -> int:
        return self.samples.size

    def quantile(self, q: float) -> float:
        if not 0.0 <= q <= 1.0:
            raise ValueError("quantile must be in [0, 1]")
        return float(np.quantile(self.samples, q, method="linear"))

    @property
    def median(self) -> float:
        return self.quantile(0.5)

    def cdf(self, x: float) -> float:
        return float(np.searchsorted(self.samples, x, side="right")) / self.samples.size


def build_cdf(samples) -> Cdf:
    return Cdf(samples)


def gain(a: Cdf, b: Cdf, quantile: float = 0.5) -> float:
    qb = b.quantile(quantile)
    if qb == 0:
        return math.inf if a.quantile(quantile) > 0 else 1.0
    return a.quantile(quantile) / qb


# -- aggregation ---------------------------------------------------------------

def _key(r: DropResult) -> tuple:
    return (r.mode, r.n_ues, r.drop)


def sort_results(results) -> list[DropResult]:
    """Canonical order, so aggregates do not depend on completion order."""
    return sorted(results, key=_key)


def group(results) -> dict[tuple[str, int], list[DropResult]]:
    out: dict[tuple[str, int], list[DropResult]] = {}
    for r in sort_results(results):
        out.setdefault((r.mode, r.n_ues), []).append(r)
    return out


@dataclass
class CellSummary:
    mode: str
    n_ues: int
    median: float
    p10: float
    p90: float
    sum_cell_median: float
    sum_cell_max: float
    switch_drop_fraction: float
    drops: int


def summarize(results) -> list[CellSummary]:
    rows = []
    for (mode, n), rs in group(results).items():
        ue = Cdf(x for r in rs for x in ue_throughputs(r))
        cell = Cdf(sum_cell_throughput(r) for r in rs)
        switched = sum(1 for r in rs if r.data_switches) / len(rs)
        rows.append(CellSummary(mode, n, ue.median, ue.quantile(0.1), ue.quantile(0.9),
                                cell.median, float(cell.samples[-1]), switched, len(rs)))
    return rows


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_samples_csv(results, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "n_ues", "drop", "ue", "throughput_mbps"])
        for r in sort_results(results):
            for u, x in enumerate(ue_throughputs(r)):
                w.writerow([r.mode, r.n_ues, r.drop, u, _fmt(x)])


def write_summary_csv(results, path: str | Path) -> list[CellSummary]:
    rows = summarize(results)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "n_ues", "median", "p10", "p90", "sum_cell_median"])
        for s in rows:
            w.writerow([s.mode, s.n_ues, _fmt(s.median), _fmt(s.p10), _fmt(s.p90), _fmt(s.sum_cell_median)])
    return rows


def write_manifest(path: str | Path, config: dict, seeds: dict, extra: dict | None = None) -> None:
    doc = {"config": config, "seeds": seeds}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def format_table(rows: list[CellSummary]) -> str:
    head = f"{'mode':<10} {'UEs':>4} {'median':>8} {'p10':>8} {'p90':>8} {'sumcell':>8} {'switch%':>8}"
    lines = [head, "-" * len(head)]
    for s in rows:
        lines.append(f"{s.mode:<10} {s.n_ues:>4} {s.median:>8.2f} {s.p10:>8.2f} {s.p90:>8.2f} "
                     f"{s.sum_cell_median:>8.1f} {100 * s.switch_drop_fraction:>7.0f}%")
    return "\n".join(lines)
