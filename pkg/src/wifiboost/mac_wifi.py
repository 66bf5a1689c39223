"""CSMA/CA (DCF) contention, TXOP aggregation and collision handling.

Times are integer nanoseconds so that slot-aligned backoff expiries compare
exactly; two contenders finishing their countdown on the same slot collide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

US = 1_000
MS = 1_000_000


@dataclass
class WifiMacParams:
    difs_us: float = 34.0
    sifs_us: float = 16.0
    slot_us: float = 9.0
    txop_ms: float = 3.0
    cw_min: int = 15
    cw_max: int = 1023
    mac_ack_us: float = 44.0
    phy_header_us: float = 40.0
    capture: bool = False
    capture_margin_db: float = 10.0

    def validate(self) -> None:
        if not (self.difs_us > self.sifs_us > 0):
            raise ValueError("need difs > sifs > 0")
        if self.txop_ms <= 0 or self.slot_us <= 0:
            raise ValueError("txop and slot must be positive")
        if not (0 < self.cw_min <= self.cw_max):
            raise ValueError("need 0 < cw_min <= cw_max")

    @property
    def difs(self) -> int:
        return int(round(self.difs_us * US))

    @property
    def sifs(self) -> int:
        return int(round(self.sifs_us * US))

    @property
    def slot(self) -> int:
        return int(round(self.slot_us * US))

    @property
    def txop(self) -> int:
        return int(round(self.txop_ms * MS))

    @property
    def ack(self) -> int:
        return int(round(self.mac_ack_us * US))

    @property
    def phy_header(self) -> int:
        return int(round(self.phy_header_us * US))


def airtime_ns(bits: float, rate_mbps: float) -> int:
    """Time to send ``bits`` at ``rate_mbps`` (ns, rounded up)."""
    if rate_mbps <= 0:
        raise ValueError("rate must be positive")
    if not bits:
        return 0
    # bits / Mbps is microseconds; the small epsilon keeps exact products from rounding up
    return math.ceil(bits * 1000.0 / rate_mbps - 1e-6)


@dataclass
class TxopResult:
    payload_bits: int
    ppdu_ns: int
    busy_ns: int


def transmit_txop(queue_bits: int, rate_mbps: float, params: WifiMacParams) -> TxopResult | None:
    """Aggregate up to one TXOP of queued bits into a single PPDU.

    Busy time covers the PPDU, SIFS and the MAC ACK. Returns None when the
    link is in outage (rate 0) so the caller re-contends.
    """
    if rate_mbps <= 0:
        return None
    max_bits = int(rate_mbps * 1e6 * params.txop / 1e9)
    bits = min(queue_bits, max_bits)
    ppdu = params.phy_header + airtime_ns(bits, rate_mbps)
    return TxopResult(bits, ppdu, ppdu + params.sifs + params.ack)


def resolve_collision(
    rx_powers_dbm: list[float], capture: bool = False, margin_db: float = 10.0
) -> list[bool]:
    """Which of the overlapping frames survive.

    Without capture every frame is lost once two or more overlap. With capture
    the strongest frame survives if it beats the sum of the others by the margin.
    """
    n = len(rx_powers_dbm)
    if n <= 1:
        return [True] * n
    if not capture:
        return [False] * n
    mw = [10 ** (p / 10) for p in rx_powers_dbm]
    best = int(np.argmax(mw))
    others = sum(mw) - mw[best]
    ok = 10 * np.log10(mw[best] / others) > margin_db
    return [ok and i == best for i in range(n)]


class Contender:
    """A DCF station: backoff counter, contention window and a queue probe.

    ``has_data`` reports whether anything is queued; the owning engine builds
    the actual TXOP when the contender wins.
    """

    __slots__ = ("node", "channel", "backoff", "cw", "stage", "start", "has_data",
                 "successes", "collisions")

    def __init__(self, node, channel: int, has_data: Callable[[], bool], cw_min: int):
        self.node = node
        self.channel = channel
        self.has_data = has_data
        self.cw = cw_min
        self.stage = 0
        self.backoff: int | None = None
        self.start = 0  # time from which the countdown runs
        self.successes = 0
        self.collisions = 0


def contend(contenders: list[Contender], now: int, slot: int) -> tuple[int, list[Contender]]:
    """Earliest backoff expiry among backlogged contenders.

    Each contender counts down from ``start`` in whole slots. Returns the
    expiry time and every contender reaching zero at that instant (more than
    one means a collision).
    """
    best_t = None
    winners: list[Contender] = []
    for c in contenders:
        if c.backoff is None or not c.has_data():
            continue
        t = max(c.start, now) if c.backoff == 0 else c.start + c.backoff * slot
        if t < now:
            # countdown already expired while the queue was empty: next slot boundary
            t = c.start + -(-(now - c.start) // slot) * slot
        if best_t is None or t < best_t:
            best_t, winners = t, [c]
        elif t == best_t:
            winners.append(c)
    return (best_t if best_t is not None else -1), winners


class WifiChannel:
    """One 20 MHz channel shared by every contender tuned to it.

    Keeps the DCF state (backoff counters, contention windows, busy period).
    The owner asks ``next_access`` for the next winner(s), builds and times
    the frames itself, then calls ``freeze`` and ``end_busy``.
    """

    def __init__(self, index: int, params: WifiMacParams, rng: np.random.Generator):
        self.index = index
        self.params = params
        self.rng = rng
        self.contenders: list[Contender] = []
        self.busy_until = 0
        self.busy_ns = 0
        self.success_ns = 0
        self.collision_ns = 0
        self.collisions = 0
        self.successes = 0
        self.pending_event = None  # (time, token) of the scheduled access
        self.slot = params.slot
        self.difs = params.difs
        self._uniform: list[float] = []

    def _u(self) -> float:
        # uniforms drawn in blocks; one generator call per draw dominated run time
        if not self._uniform:
            self._uniform = self.rng.random(4096).tolist()[::-1]
        return self._uniform.pop()

    def add(self, c: Contender) -> None:
        self.draw(c, reset=True)
        c.start = self.difs
        self.contenders.append(c)

    def draw(self, c: Contender, reset: bool = False) -> None:
        p = self.params
        if reset:
            c.cw, c.stage = p.cw_min, 0
        c.backoff = int(self._u() * (c.cw + 1))

    def collide_backoff(self, c: Contender) -> None:
        p = self.params
        c.stage += 1
        c.cw = min(2 * (c.cw + 1) - 1, p.cw_max)
        c.backoff = int(self._u() * (c.cw + 1))

    def wake(self, c: Contender, now: int) -> None:
        """Contender just became backlogged while the medium may be idle."""
        slot = self.slot
        if now < self.busy_until:
            return
        if c.backoff is None:
            self.draw(c)
        if now > c.start:
            done = (now - c.start) // slot
            c.backoff = max(0, c.backoff - done)
            c.start = c.start + done * slot
            if c.backoff == 0:
                c.start = c.start + -(-(now - c.start) // slot) * slot

    def next_access(self, now: int) -> tuple[int, list[Contender]]:
        t0 = max(now, self.busy_until)
        return contend(self.contenders, t0, self.slot)

    def freeze(self, t: int, winners: list[Contender]) -> None:
        """Decrement the losers' counters by the idle slots elapsed before ``t``."""
        slot = self.slot
        for c in self.contenders:
            if c in winners or c.backoff is None:
                continue
            if t > c.start:
                c.backoff = max(0, c.backoff - (t - c.start) // slot)

    def end_busy(self, t_end: int) -> None:
        self.busy_until = t_end
        start = t_end + self.difs
        for c in self.contenders:
            c.start = start
