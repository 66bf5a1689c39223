"""Centrally scheduled LTE small cell: round-robin DL TTIs and a UL pool."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class LteMacParams:
    tti_ms: float = 1.0
    dl_bandwidth_mhz: float = 10.0
    overhead_fraction: float = 0.25
    ul_capacity_mbps: float = 30.0

    def validate(self) -> None:
        if not 0.0 <= self.overhead_fraction < 1.0:
            raise ValueError("overhead_fraction must be in [0, 1)")
        if self.tti_ms <= 0:
            raise ValueError("tti must be positive")
        if self.ul_capacity_mbps <= 0:
            raise ValueError("ul capacity must be positive")

    @property
    def tti_ns(self) -> int:
        return int(round(self.tti_ms * 1_000_000))


class RoundRobin:
    """One UE per TTI, rotating over UEs with queued data."""

    def __init__(self):
        self.last = -1
        self.served: dict = {}

    def schedule_tti(self, active_ues: list[int]) -> dict[int, float]:
        if not active_ues:
            return {}
        order = sorted(active_ues)
        pick = next((u for u in order if u > self.last), order[0])
        self.last = pick
        self.served[pick] = self.served.get(pick, 0) + 1
        return {pick: 1.0}


def schedule_tti(active_ues: list[int], rr: RoundRobin) -> dict[int, float]:
    return rr.schedule_tti(active_ues)


def serve_tti(queue_bits: float, allocation: float, rate_mbps: float, params: LteMacParams) -> float:
    """Bits delivered in one TTI: rate x TTI x allocation x (1 - overhead), capped by the queue."""
    if not 0.0 <= allocation <= 1.0:
        raise ValueError("allocation must be within [0, 1]")
    cap = rate_mbps * 1e6 * params.tti_ms * 1e-3 * allocation * (1.0 - params.overhead_fraction)
    return min(cap, queue_bits)


def estimate_post_switch_throughput(existing_rates: list[float], candidate_rate: float) -> list[float]:
    """Round-robin estimate after admitting one more DL UE.

    Every UE keeps its full-allocation rate but gets 1/(N+1) of the TTIs.
    The candidate's estimate is the last element.
    """
    n = len(existing_rates) + 1
    return [r / n for r in existing_rates] + [candidate_rate / n]
