"""Wi-Fi Boost radio link management.

The RCM runs at the LTE small cell and decides, per UE, whether downlink data
rides the Wi-Fi path or the LTE path. The UCM runs at the UE, measures the
probes it receives and acknowledges them. Both are plain state machines driven
by explicit method calls, so they can be exercised without the event engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable


class Path(str, Enum):
    WIFI = "wifi"
    LTE = "lte"
    WIFI_ONLY = "wifi_only"


class Phase(str, Enum):
    INITIAL = "initial"
    DATA = "data"


class Decision(str, Enum):
    STAY = "stay"
    SWITCH_TO_LTE = "switch_to_lte"
    SWITCH_TO_WIFI = "switch_to_wifi"
    WIFI_ONLY = "wifi_only_mode"
    DENIED = "denied"


@dataclass
class ProbeConfig:
    s_ini_bits: int = 12000
    t_ini_s: float = 0.1
    r_ini_mbps: float = 5.0
    s_dat_bits: int = 160
    t_dat_s: float = 0.003
    t_ip_s: float = 2.0
    x_stall: int = 3
    ini_ack_timeout_s: float | None = None  # default t_ini + 0.1 s
    dat_ack_timeout_s: float = 0.02

    @property
    def x_ini(self) -> int:
        # small epsilon guards against 0.1*5e6/12000 landing a hair under an integer
        return int(math.floor(self.t_ini_s * self.r_ini_mbps * 1e6 / self.s_ini_bits + 1e-9))

    @property
    def ini_spacing_s(self) -> float:
        return self.s_ini_bits / (self.r_ini_mbps * 1e6)

    @property
    def ini_timeout_s(self) -> float:
        return self.t_ini_s + 0.1 if self.ini_ack_timeout_s is None else self.ini_ack_timeout_s

    def validate(self) -> None:
        for name in ("s_ini_bits", "t_ini_s", "r_ini_mbps", "s_dat_bits", "t_dat_s", "t_ip_s",
                     "dat_ack_timeout_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"rlm.{name} must be positive")
        if self.x_stall < 1:
            raise ValueError("rlm.x_stall must be >= 1")
        if self.x_ini < 1:
            raise ValueError("initial probing sends no probe: t_ini * r_ini < s_ini")


@dataclass
class DecisionThresholds:
    probe_lost_min: float = 0.9
    probe_delay_min_s: float = 0.5
    probe_rate_min_mbps: float = 5.0
    u_min_mbps: float = 0.5
    tph_min_mbps: float = 5.0
    rssi_min_dbm: float = -82.0

    def validate(self) -> None:
        if not 0.0 < self.probe_lost_min <= 1.0:
            raise ValueError("rlm.probe_lost_min must be in (0, 1]")
        for name in ("probe_delay_min_s", "probe_rate_min_mbps", "u_min_mbps", "tph_min_mbps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"rlm.{name} must be positive")


@dataclass(frozen=True)
class ProbeStats:
    probe_lost: float
    probe_delay: float
    probe_rate: float


def measure_initial_probes(sent: list[float], received: dict[int, float], size_bits: int) -> ProbeStats:
    """UCM statistics over one initial test period.

    ``sent`` holds the send time of every probe (probes carry their send
    timestamp), ``received`` maps probe index to arrival time. Delay is the
    mean one-way delay. Rate is the average probe throughput over the test
    period, i.e. received bits over the span the probes were sent in, so a
    lossless path echoes the offered rate.
    """
    n = len(sent)
    if n == 0:
        raise ValueError("no probes were sent")
    lost = 1.0 - len(received) / n
    if not received:
        return ProbeStats(1.0, math.inf, 0.0)
    delays = [received[i] - sent[i] for i in received]
    mean_delay = max(sum(delays) / len(delays), 0.0)
    if n == 1:
        return ProbeStats(lost, mean_delay, math.inf)
    # n probes at a fixed spacing occupy n spacings of the offered rate
    period = (sent[-1] - sent[0]) * n / (n - 1)
    rate = round(len(received) * size_bits / period / 1e6, 9) if period > 0 else math.inf
    return ProbeStats(lost, mean_delay, rate)


def evaluate_initial_criteria(stats: ProbeStats | None, rssi: float, thr: DecisionThresholds) -> Path:
    """Wi-Fi only if the pilot is strong enough and all three probe tests pass."""
    if stats is None or rssi < thr.rssi_min_dbm:
        return Path.LTE
    if (stats.probe_lost < thr.probe_lost_min
            and stats.probe_delay < thr.probe_delay_min_s
            and stats.probe_rate >= thr.probe_rate_min_mbps):
        return Path.WIFI
    return Path.LTE


class Ewma:
    """Exponentially weighted moving average seeded with its first sample."""

    __slots__ = ("alpha", "value")

    def __init__(self, alpha: float = 0.25):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        self.alpha = alpha
        self.value: float | None = None

    def update(self, x: float) -> float:
        self.value = x if self.value is None else (1.0 - self.alpha) * self.value + self.alpha * x
        return self.value

    def reset(self) -> None:
        self.value = None


def updates_to_converge(alpha: float, tolerance: float = 0.01) -> int:
    """EWMA updates needed for a step change to settle within ``tolerance``."""
    return math.ceil(math.log(tolerance) / math.log(1.0 - alpha))


@dataclass
class GovernorParams:
    t_switch_s: float = 0.5
    r_switch_mbps: float = 2.0


class SwitchGovernor:
    """Rate-limits committed switches and protects the existing LTE UEs."""

    def __init__(self, params: GovernorParams | None = None):
        self.params = params or GovernorParams()
        self.last_switch_time: float | None = None
        self.commits: list[tuple[float, int, Decision]] = []

    def govern(self, proposal: Decision, now: float, lte_estimate: float | None = None, ue: int = -1) -> bool:
        p = self.params
        if self.last_switch_time is not None and now - self.last_switch_time < p.t_switch_s:
            return False
        if proposal is Decision.SWITCH_TO_LTE and lte_estimate is not None and lte_estimate < p.r_switch_mbps:
            return False
        self.last_switch_time = now
        self.commits.append((now, ue, proposal))
        return True


class Ucm:
    """UE-side agent: throughput between consecutive active probes."""

    def __init__(self):
        self.last_probe_time: float | None = None
        self.bits_since: int = 0

    def on_data(self, bits: int) -> None:
        self.bits_since += bits

    def reset(self) -> None:
        self.last_probe_time = None
        self.bits_since = 0

    def on_active_probe(self, now: float) -> float | None:
        """Average DL throughput (Mbps) since the previous probe, or None for the first."""
        prev = self.last_probe_time
        bits = self.bits_since
        self.last_probe_time = now
        self.bits_since = 0
        if prev is None:
            return None
        return ucm_rate(bits, now - prev)


def ucm_rate(delivered_bits: float, elapsed: float) -> float:
    if elapsed <= 0:
        raise ValueError("elapsed must be positive")
    return delivered_bits / elapsed / 1e6


@dataclass
class RcmUeState:
    ue: int
    path: Path = Path.LTE
    phase: Phase = Phase.INITIAL
    ewma: Ewma = field(default_factory=Ewma)
    missing_ack_streak: int = 0
    next_probe_time: float | None = None
    last_acked_seq: int = -1
    rssi_dbm: float = -math.inf

    @property
    def ewma_throughput(self) -> float:
        return self.ewma.value or 0.0


@dataclass
class SwitchEvent:
    time: float
    ue: int
    decision: Decision
    reason: str


class Rcm:
    """Controller at the BS. ``lte_estimate(ue)`` gives the round-robin
    per-UE rate the existing LTE UEs would see after admitting ``ue``."""

    def __init__(self, probe: ProbeConfig, thr: DecisionThresholds, governor: SwitchGovernor,
                 alpha: float = 0.25, lte_estimate: Callable[[int], float] | None = None):
        self.probe = probe
        self.thr = thr
        self.governor = governor
        self.alpha = alpha
        self.lte_estimate = lte_estimate or (lambda ue: math.inf)
        self.ues: dict[int, RcmUeState] = {}
        self.log: list[SwitchEvent] = []

    def add_ue(self, ue: int, rssi_dbm: float) -> RcmUeState:
        st = RcmUeState(ue, ewma=Ewma(self.alpha), rssi_dbm=rssi_dbm)
        self.ues[ue] = st
        return st

    def _commit(self, st: RcmUeState, decision: Decision, now: float, reason: str) -> Decision:
        est = self.lte_estimate(st.ue) if decision is Decision.SWITCH_TO_LTE else None
        if not self.governor.govern(decision, now, est, st.ue):
            return Decision.DENIED
        if decision is Decision.SWITCH_TO_LTE:
            st.path = Path.LTE
            st.missing_ack_streak = 0
            st.ewma.reset()
            st.next_probe_time = now + self.probe.t_ip_s
        elif decision is Decision.SWITCH_TO_WIFI:
            st.path = Path.WIFI
            st.phase = Phase.DATA
            st.ewma.reset()
            st.missing_ack_streak = 0
        self.log.append(SwitchEvent(now, st.ue, decision, reason))
        return decision

    # initial phase -------------------------------------------------------
    def on_initial_result(self, ue: int, stats: ProbeStats | None, now: float, connecting: bool) -> Decision:
        """Outcome of one initial probing round.

        At connection setup the UE is simply placed on a path (no switch, so
        the rate limit does not apply, but LTE admission is still checked).
        For a UE already on LTE a pass is a governed switch back to Wi-Fi.
        """
        st = self.ues[ue]
        verdict = evaluate_initial_criteria(stats, st.rssi_dbm, self.thr)
        if connecting:
            st.phase = Phase.DATA
            if verdict is Path.WIFI:
                st.path = Path.WIFI
            elif st.rssi_dbm >= self.thr.rssi_min_dbm and self.lte_estimate(ue) < self.governor.params.r_switch_mbps:
                # LTE cannot take another UE; keep it on the Wi-Fi path
                st.path = Path.WIFI
            else:
                st.path = Path.LTE
                st.next_probe_time = now + self.probe.t_ip_s
            st.ewma.reset()
            return Decision.SWITCH_TO_WIFI if st.path is Path.WIFI else Decision.SWITCH_TO_LTE
        st.next_probe_time = now + self.probe.t_ip_s
        if st.path is not Path.LTE or verdict is not Path.WIFI:
            return Decision.STAY
        return self._commit(st, Decision.SWITCH_TO_WIFI, now, "reprobe")

    def reprobe_due(self, ue: int, now: float) -> bool:
        st = self.ues[ue]
        return st.path is Path.LTE and st.next_probe_time is not None and now >= st.next_probe_time

    # data phase ----------------------------------------------------------
    def on_probe_ack(self, ue: int, u_avg: float | None, now: float, seq: int | None = None) -> Decision:
        st = self.ues[ue]
        if st.path is not Path.WIFI or st.phase is not Phase.DATA:
            return Decision.STAY
        st.missing_ack_streak = 0
        if seq is not None:
            st.last_acked_seq = max(st.last_acked_seq, seq)
        if u_avg is None:
            return Decision.STAY
        filtered = st.ewma.update(u_avg)
        if u_avg < self.thr.u_min_mbps:
            # the DL path does not move, so the switch governor is not consulted
            self.on_wifi_only(ue)
            self.log.append(SwitchEvent(now, ue, Decision.WIFI_ONLY, "inactivity"))
            return Decision.WIFI_ONLY
        if filtered < self.thr.tph_min_mbps:
            return self._commit(st, Decision.SWITCH_TO_LTE, now, "congestion")
        return Decision.STAY

    def on_missing_ack(self, ue: int, now: float) -> Decision:
        st = self.ues[ue]
        if st.path is not Path.WIFI or st.phase is not Phase.DATA:
            return Decision.STAY
        st.missing_ack_streak += 1
        if st.missing_ack_streak >= self.probe.x_stall:
            d = self._commit(st, Decision.SWITCH_TO_LTE, now, "stall")
            if d is Decision.DENIED:
                # keep the streak saturated so the next miss retries
                st.missing_ack_streak = self.probe.x_stall - 1
            return d
        return Decision.STAY

    def on_wifi_only(self, ue: int) -> None:
        """Apply the WIFI_ONLY outcome: probing stops until traffic resumes."""
        st = self.ues[ue]
        st.path = Path.WIFI_ONLY
        st.ewma.reset()
        st.missing_ack_streak = 0

    def resume_boost(self, ue: int) -> None:
        st = self.ues[ue]
        if st.path is Path.WIFI_ONLY:
            st.path = Path.WIFI
            st.phase = Phase.DATA
            st.ewma.reset()

    def reprobe_attempts(self, lte_since: float, lte_until: float) -> int:
        return int((lte_until - lte_since) // self.probe.t_ip_s)
