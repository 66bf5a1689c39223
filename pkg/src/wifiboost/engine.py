"""Discrete-event core: one drop of one system configuration, and campaigns.

Time is kept in integer nanoseconds. Events sit in a heap ordered by
(time, insertion sequence), so simultaneous events run in FIFO order and a
drop is a pure function of its seed and configuration.
"""

from __future__ import annotations

import heapq
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import (doppler_hz, fading_gains, lte_table, noise_power_dbm, path_loss, rate_trace,
                      wifi_table)
from .config import MODES, CampaignConfig, SimConfig
from .mac_lte import RoundRobin, estimate_post_switch_throughput
from .mac_wifi import Contender, WifiChannel, airtime_ns, resolve_collision
from .metrics import DropResult
from .rlm import Decision, Path, Rcm, SwitchGovernor, Ucm, measure_initial_probes
from .scenario import Drop, generate_drop
from .traffic import Direction, FtpSession, Packet, PacketClass, TxQueue, packets_completed

NS = 1_000_000_000

# event kinds
DL_FILE, UL_FILE, WIFI_ACCESS, WIFI_DONE, LTE_TTI, UL_STEP = range(6)
INI_PROBE, INI_TIMEOUT, INI_RESULT, PROBE_ACK, PROBE_DEADLINE, REPROBE = range(6, 12)

# trace names, grouped the way the event taxonomy groups them
KIND_NAMES = {
    DL_FILE: "session_timer", UL_FILE: "session_timer", WIFI_ACCESS: "mac_wakeup",
    WIFI_DONE: "packet_arrival", LTE_TTI: "mac_wakeup", UL_STEP: "mac_wakeup",
    INI_PROBE: "probe_timer", INI_TIMEOUT: "probe_timer", INI_RESULT: "packet_arrival",
    PROBE_ACK: "packet_arrival", PROBE_DEADLINE: "probe_timer", REPROBE: "probe_timer",
}

FULL_BUFFER_BYTES = 10**12


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Event:
    time: int
    sequence: int
    kind: int
    payload: tuple = ()


def route_packet(mode: str, cls: PacketClass, direction: Direction, path: Path | None = None) -> str:
    """Carrier ('wifi' or 'lte') for one packet.

    UL traffic (UL FTP, TCP ACKs for DL data, probe ACKs) rides LTE in the
    aggregated modes; DL traffic rides Wi-Fi unless a Boost UE sits on LTE.
    """
    if mode == "lte_only":
        return "lte"
    if mode == "wifi_only":
        return "wifi"
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if direction is Direction.UL:
        return "lte"
    if mode == "boost" and path is Path.LTE:
        return "lte"
    return "wifi"


def derive_seed(master_seed: int, n_ues: int, drop: int, mode_index: int | None = None) -> int:
    """Stable 63-bit seed from the campaign coordinates."""
    key = [master_seed, n_ues, drop] + ([] if mode_index is None else [1000 + mode_index])
    state = np.random.SeedSequence(key).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


class _File:
    __slots__ = ("ue", "direction", "size", "delivered", "pkts", "acks", "arrival", "released", "acked")

    def __init__(self, ue, direction, size, arrival):
        self.ue = ue
        self.direction = direction
        self.size = size
        self.delivered = 0
        self.pkts = 0
        self.acks = 0
        self.arrival = arrival
        self.released = 0  # bytes handed to the transmit queue
        self.acked = 0  # TCP ACKs that made it back to the sender


class _WifiNode:
    __slots__ = ("name", "is_ap", "index", "channel", "contender", "queues", "order", "rr_last", "rx_dbm")

    def __init__(self, name, is_ap, index, channel):
        self.name = name
        self.is_ap = is_ap
        self.index = index  # AP index, or UE index for a UE station
        self.channel = channel
        self.contender = None
        self.queues: dict[int, TxQueue] = {}
        self.order: list[int] = []
        self.rr_last = -1
        self.rx_dbm = 0.0

    def has_data(self) -> bool:
        for q in self.queues.values():
            if q:
                return True
        return False


class _Burst:
    """Active probing while a UE has DL data queued on Wi-Fi."""

    __slots__ = ("base", "start", "end")

    def __init__(self, base, start):
        self.base = base
        self.start = start
        self.end = None  # first sequence number not emitted once the burst closes


class DropSimulator:
    def __init__(self, drop: Drop, mode: str, cfg: SimConfig, trace: list | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if cfg.duration_s <= 0:
            raise ValueError("duration must be positive")
        self.drop = drop
        self.mode = mode
        self.cfg = cfg
        self.trace = trace
        self.n = n = drop.n_ues
        self.dur = int(round(cfg.duration_s * NS))
        self.warmup = int(round(cfg.warmup_s * NS))
        self.tti = cfg.lte.tti_ns
        self.boost = mode == "boost"
        self.encap = mode in ("lwip", "boost")
        self.uses_wifi = mode != "lte_only"
        self.uses_lte = mode != "wifi_only"

        root = np.random.SeedSequence([drop.seed, 0x0B57])
        fade_seq, traffic_seq, mac_seq = root.spawn(3)
        self._traffic_rngs = [np.random.default_rng(s) for s in traffic_seq.spawn(2 * n)]
        self._mac_rng = np.random.default_rng(mac_seq)
        self._build_links(fade_seq)

        self.q: list = []
        self.seq = 0
        self.now = 0
        self.events = 0

        # ledgers
        self.ue_dl_bits = [0] * n
        self.ue_ul_bits = [0] * n
        self.ue_active = [0] * n
        self.cell_bits = {f"AP{a}": 0 for a in range(len(drop.geometry.ap_positions))}
        self.cell_bits["BS"] = 0
        self.overhead = dict.fromkeys(self.cell_bits, 0)
        self.overhead["WIFI_UL"] = 0
        self.overhead["LTE_UL"] = 0
        self.injected = 0
        self.wifi_ul_ftp_bits = 0
        self.lte_since = [None] * n
        self.lte_ue_ns = 0

        self._build_nodes()

        tp = cfg.traffic
        size_dl = FULL_BUFFER_BYTES if tp.full_buffer else tp.dl_file_bytes
        size_ul = FULL_BUFFER_BYTES if tp.full_buffer else tp.ul_file_bytes
        self.dl_sess = [FtpSession(u, Direction.DL, size_dl, tp.mean_reading_time_s) for u in range(n)]
        self.ul_sess = [FtpSession(u, Direction.UL, size_ul, tp.mean_reading_time_s) for u in range(n)]
        self.dl_file: list[_File | None] = [None] * n
        self.ul_file: list[_File | None] = [None] * n
        for u in range(n):
            # the reading time is drawn even when unused so UL draws do not shift
            t_dl = self._reading(u, Direction.DL)
            t_ul = self._reading(u, Direction.UL)
            if tp.full_buffer:
                t_dl = t_ul = 0
            self._push(t_dl, DL_FILE, (u,))
            if tp.ul_enabled:
                self._push(t_ul, UL_FILE, (u,))

        if self.boost:
            self._init_boost()

    # -- setup ------------------------------------------------------------
    def _build_links(self, fade_seq) -> None:
        cfg, drop, n = self.cfg, self.drop, self.n
        radio, nodes = cfg.radio, drop.nodes
        n_blocks = int(self.dur // 1_000_000) + 2
        wifi_seq, lte_seq = fade_seq.spawn(2)
        self.wifi_dl = [None] * n
        self.wifi_ul = [None] * n
        self.lte_dl = [None] * n
        self.lte_mean = [0.0] * n
        if self.uses_wifi:
            fade = fading_gains(np.random.default_rng(wifi_seq), n, n_blocks,
                                doppler_hz(radio.ue_speed_kmh, radio.wifi_carrier_ghz))
            table = wifi_table(radio.wifi_scale)
            noise_ue = noise_power_dbm(radio.wifi_bandwidth_mhz, radio.ue_noise_figure_db)
            noise_ap = noise_power_dbm(radio.wifi_bandwidth_mhz, radio.node_noise_figure_db)
            fade_db = 10.0 * np.log10(np.maximum(fade, 1e-30))
            for u in range(n):
                a = drop.ue_ap_association[u]
                if a is None:
                    continue
                rssi = float(drop.rssi_dbm[u, a])
                ul_rx = rssi - nodes.ap_tx_power + nodes.ue_tx_power
                self.wifi_dl[u] = rate_trace(rssi - noise_ue + fade_db[u], table).tolist()
                self.wifi_ul[u] = rate_trace(ul_rx - noise_ap + fade_db[u], table).tolist()
        if self.uses_lte:
            fade = fading_gains(np.random.default_rng(lte_seq), n, n_blocks,
                                doppler_hz(radio.ue_speed_kmh, radio.lte_carrier_ghz))
            table = lte_table(radio.lte_bandwidth_mhz, radio.lte_scale)
            noise_ue = noise_power_dbm(radio.lte_bandwidth_mhz, radio.ue_noise_figure_db)
            fade_db = 10.0 * np.log10(np.maximum(fade, 1e-30))
            bs = drop.geometry.bs_position
            for u in range(n):
                d = float(np.hypot(*(drop.ue_positions[u] - np.asarray(bs))))
                rx = (nodes.bs_tx_power + nodes.bs_antenna_gain + nodes.ue_antenna_gain
                      - path_loss(d, radio.lte_carrier_ghz) - float(drop.shadowing_bs[u]))
                tr = rate_trace(rx - noise_ue + fade_db[u], table)
                self.lte_dl[u] = tr.tolist()
                self.lte_mean[u] = float(tr.mean()) * (1.0 - cfg.lte.overhead_fraction)

    def _build_nodes(self) -> None:
        cfg, drop = self.cfg, self.drop
        self.channels = [WifiChannel(c, cfg.wifi, self._mac_rng) for c in range(cfg.wifi_channels)]
        w = cfg.wifi
        self.w_sifs_ack, self.w_txop, self.w_phy = w.sifs + w.ack, w.txop, w.phy_header
        self.ch_busy = [False] * cfg.wifi_channels
        self.ch_token = [0] * cfg.wifi_channels
        self.aps: list[_WifiNode] = []
        self.ue_nodes: dict[int, _WifiNode] = {}
        mtu = cfg.traffic.mtu
        ack = cfg.traffic.tcp_ack_bytes
        self.mtu, self.tcp_acks = mtu, cfg.traffic.tcp_acks
        if self.uses_wifi:
            for a in range(len(drop.geometry.ap_positions)):
                ch = drop.ap_channels[a] % cfg.wifi_channels
                node = _WifiNode(f"AP{a}", True, a, ch)
                node.order = [u for u in range(self.n) if drop.ue_ap_association[u] == a]
                node.queues = {u: TxQueue(self.encap, mtu, ack) for u in node.order}
                self._attach(node)
                self.aps.append(node)
            if self.mode == "wifi_only":
                for u in range(self.n):
                    a = drop.ue_ap_association[u]
                    if a is None:
                        continue
                    node = _WifiNode(f"UE{u}", False, u, self.aps[a].channel)
                    node.queues = {u: TxQueue(False, mtu, ack)}
                    node.order = [u]
                    self._attach(node)
                    self.ue_nodes[u] = node
        self.bs_q = {u: TxQueue(False, mtu, ack) for u in range(self.n)}
        self.ul_on_wifi = route_packet(self.mode, PacketClass.FTP_DATA, Direction.UL) == "wifi"
        self.ul_q = {u: TxQueue(False, mtu, ack) for u in range(self.n)}
        self.rr = RoundRobin()
        self.tti_pending = False
        self.ul_pending = False

    def _attach(self, node: _WifiNode) -> None:
        ch = self.channels[node.channel]
        # a station with one queue can poll it directly
        has_data = next(iter(node.queues.values())).__bool__ if len(node.queues) == 1 else node.has_data
        node.contender = Contender(node, node.channel, has_data, self.cfg.wifi.cw_min)
        ch.add(node.contender)

    def _init_boost(self) -> None:
        r = self.cfg.rlm
        self.rcm = Rcm(r.probe, r.thresholds, SwitchGovernor(r.governor), r.alpha, self._lte_estimate)
        for u in range(self.n):
            a = self.drop.ue_ap_association[u]
            rssi = float(self.drop.rssi_dbm[u, a]) if a is not None else float(np.max(self.drop.rssi_dbm[u]))
            self.rcm.add_ue(u, rssi)
        self.connected = [False] * self.n
        self.ucm = [Ucm() for _ in range(self.n)]
        self.ini_round = [0] * self.n
        self.ini_sent: list[list[int]] = [[] for _ in range(self.n)]
        self.ini_rx: list[dict[int, int]] = [{} for _ in range(self.n)]
        self.ini_connecting = [False] * self.n
        self.ini_open = [False] * self.n
        self.bursts: list[list[_Burst]] = [[] for _ in range(self.n)]
        self.next_seq = [0] * self.n
        self.deadline_live = [False] * self.n
        self.probe_ns = int(round(r.probe.t_dat_s * NS))
        self.probe_bytes = max(1, r.probe.s_dat_bits // 8)
        self.ini_bytes = max(1, r.probe.s_ini_bits // 8)
        self.dat_timeout = int(round(r.probe.dat_ack_timeout_s * NS))
        # every UE attaches when the drop starts
        for u in range(self.n):
            self._connect(u)

    # -- event queue ----------------------------------------------------------
    def _push(self, t: int, kind: int, payload: tuple = ()) -> None:
        self.seq += 1
        heapq.heappush(self.q, (t, self.seq, kind, payload))

    def _log(self, kind: str, node: str, cls: str, size: int, path: str, t: int | None = None) -> None:
        if self.trace is not None:
            self.trace.append(((self.now if t is None else t) / NS, kind, node, cls, size, path))

    def run(self) -> DropResult:
        handlers = {
            DL_FILE: self._on_dl_file, UL_FILE: self._on_ul_file, WIFI_ACCESS: self._on_access,
            WIFI_DONE: self._on_wifi_done, LTE_TTI: self._on_tti, UL_STEP: self._on_ul_step,
            INI_PROBE: self._on_ini_probe, INI_TIMEOUT: self._on_ini_timeout,
            INI_RESULT: self._on_ini_result, PROBE_ACK: self._on_probe_ack,
            PROBE_DEADLINE: self._on_deadline, REPROBE: self._on_reprobe,
        }
        q = self.q
        dur = self.dur
        while q:
            t, _, kind, payload = q[0]
            if t > dur:
                break
            heapq.heappop(q)
            if t < self.now:
                raise SimulationError(f"event at {t} ns scheduled in the past (now {self.now})")
            self.now = t
            self.events += 1
            handlers[kind](*payload)
        else:
            pending = [u for u in range(self.n) if self.dl_sess[u].state == "transferring"]
            if pending and self._deliverable(pending):
                raise SimulationError(f"event queue ran dry at {self.now} ns with active sessions")
        self.now = dur
        return self._result()

    def _deliverable(self, ues) -> bool:
        # a WifiOnly UE without an AP legitimately never drains its file
        return any(self._dl_carrier(u) is not None for u in ues)

    # -- routing ----------------------------------------------------------------
    def _dl_carrier(self, u: int):
        """The queue DL data for ``u`` goes into, with its owning node (None for the BS)."""
        a = self.drop.ue_ap_association[u]
        path = self.rcm.ues[u].path if self.boost else None
        route = route_packet(self.mode, PacketClass.FTP_DATA, Direction.DL, path)
        if route == "wifi":
            if a is None:
                return None if self.mode == "wifi_only" else ("lte", None)
            return ("wifi", self.aps[a])
        return ("lte", None)

    def _dl_queue(self, u: int):
        c = self._dl_carrier(u)
        if c is None:
            return None, None
        if c[0] == "wifi":
            return c[1].queues[u], c[1]
        return self.bs_q[u], None

    def _ul_queue(self, u: int):
        if self.ul_on_wifi:
            node = self.ue_nodes.get(u)
            return (node.queues[u], node) if node else (None, None)
        return self.ul_q[u], None

    def _wake(self, node) -> None:
        if node is None:
            self._wake_lte()
        else:
            ch = self.channels[node.channel]
            ch.wake(node.contender, self.now)
            self._schedule_access(node.channel)

    # -- traffic ----------------------------------------------------------------
    def _reading(self, u: int, direction: Direction) -> int:
        rng = self._traffic_rngs[2 * u + (direction is Direction.UL)]
        return int(rng.exponential(self.cfg.traffic.mean_reading_time_s) * NS)

    def _on_dl_file(self, u: int) -> None:
        sess = self.dl_sess[u]
        sess.start_file(self.now)
        f = _File(u, Direction.DL, sess.file_size, self.now)
        self.dl_file[u] = f
        self.injected += 8 * f.size
        self._log("file_arrival", f"UE{u}", "ftp_data", f.size, "dl")
        if self.boost:
            if self.rcm.ues[u].path is Path.WIFI_ONLY:
                self.rcm.resume_boost(u)
                self._log("resume_boost", f"UE{u}", "", 0, "wifi")
        q, node = self._dl_queue(u)
        if q is None:
            return
        q.push_file(f.size, f)
        if self.boost and node is not None:
            self._start_burst(u)
        self._wake(node)

    def _on_ul_file(self, u: int) -> None:
        sess = self.ul_sess[u]
        sess.start_file(self.now)
        f = _File(u, Direction.UL, sess.file_size, self.now)
        self.ul_file[u] = f
        q, node = self._ul_queue(u)
        if q is None:
            return
        self._release_ul(f, q, node)

    def _release_ul(self, f: _File, q: TxQueue, node) -> None:
        """Hand the UL sender as much of the file as its window allows."""
        w = self.cfg.traffic.ul_window_bytes
        limit = f.size if not w or not self.cfg.traffic.tcp_acks else min(f.size, f.acked * 3 * self.cfg.traffic.mtu + w)
        if limit > f.released:
            q.push_file(limit - f.released, f)
            f.released = limit
            self._wake(node)

    def _on_ul_acks(self, u: int, n: int) -> None:
        """TCP ACKs for UL data reached UE ``u``."""
        f = self.ul_file[u]
        if f is None or not n:
            return
        f.acked += n
        if self.cfg.traffic.ul_window_bytes:
            q, node = self._ul_queue(u)
            if q is not None:
                self._release_ul(f, q, node)

    def _deliver(self, f: _File, nbytes: int, t: int, cell: str) -> None:
        before = f.delivered
        f.delivered += nbytes
        f.pkts += packets_completed(f.size, before, f.delivered, self.mtu)
        new_acks = f.pkts // 3 - f.acks if self.tcp_acks else 0
        u = f.ue
        bits = 8 * nbytes
        if f.direction is Direction.DL:
            if t >= self.warmup:
                self.ue_dl_bits[u] += bits
                self.cell_bits[cell] += bits
            if self.boost and cell != "BS":
                self.ucm[u].on_data(bits)
            if new_acks:
                f.acks += new_acks
                q, node = self._ul_queue(u)
                if q is not None:
                    idle = not q
                    q.push_acks(new_acks)
                    if idle:  # a backlogged queue already has its access or TTI armed
                        self._wake(node)
            if f.delivered >= f.size:
                self._finish_dl(u, f, t)
        else:
            if t >= self.warmup:
                self.ue_ul_bits[u] += bits
            if cell == "WIFI_UL":
                self.wifi_ul_ftp_bits += bits
            if new_acks:
                f.acks += new_acks
                q, node = self._dl_queue(u)
                if q is not None:
                    idle = not q
                    q.push_acks(new_acks)
                    if idle:  # a backlogged queue already has its access or TTI armed
                        self._wake(node)
            if f.delivered >= f.size:
                self.ul_file[u] = None
                self.ul_sess[u].consume(f.size)
                self._push(max(self.now, t + self._reading(u, Direction.UL)), UL_FILE, (u,))

    def _finish_dl(self, u: int, f: _File, t: int) -> None:
        self.dl_sess[u].consume(f.size)
        self.ue_active[u] += max(0, t - max(f.arrival, self.warmup))
        self.dl_file[u] = None
        self._log("file_done", f"UE{u}", "ftp_data", f.size, "dl", t)
        self._push(max(self.now, t + self._reading(u, Direction.DL)), DL_FILE, (u,))

    # -- Wi-Fi ------------------------------------------------------------------
    def _schedule_access(self, c: int) -> None:
        if self.ch_busy[c]:
            return
        ch = self.channels[c]
        t, winners = ch.next_access(self.now)
        if not winners:
            return
        pend = ch.pending_event
        if pend is not None and pend[0] <= t:
            return
        self.ch_token[c] += 1
        ch.pending_event = (t, self.ch_token[c])
        self._push(t, WIFI_ACCESS, (c, self.ch_token[c]))

    def _on_access(self, c: int, token: int) -> None:
        ch = self.channels[c]
        if ch.pending_event is None or ch.pending_event[1] != token:
            return
        ch.pending_event = None
        now = self.now
        t, winners = ch.next_access(now)
        if not winners:
            return
        if t > now:
            self._schedule_access(c)
            return
        ch.freeze(now, winners)
        plans = []
        for w in winners:
            plan = self._build_txop(w.node, now)
            if plan is None:
                # outage: defer with a fresh backoff
                ch.draw(w)
                w.start = now
            else:
                plans.append(plan)
        if not plans:
            for other in ch.contenders:
                other.start = max(other.start, now)
            self._schedule_access(c)
            return
        p = self.cfg.wifi
        if len(plans) > 1:
            ok = resolve_collision([pl[5] for pl in plans], p.capture, p.capture_margin_db)
            ch.collisions += 1
        else:
            ok = [True]
        ppdu_max = max(pl[4] for pl in plans)
        busy = ppdu_max + self.w_sifs_ack
        done = []
        for pl, good in zip(plans, ok):
            node, u, q, served = pl[0], pl[1], pl[2], pl[3]
            cont = node.contender
            if good:
                cont.successes += 1
                ch.successes += 1
                ch.draw(cont, reset=True)
                done.append(pl)
            else:
                cont.collisions += 1
                q.restore(served[0], served[1], served[2])
                ch.collide_backoff(cont)
                self._log("collision", node.name, "", 0, "wifi")
        ch.busy_ns += busy
        if len(plans) > 1:
            ch.collision_ns += busy
        else:
            ch.success_ns += busy
        self.ch_busy[c] = True
        ch.end_busy(now + busy)
        self._push(now + busy, WIFI_DONE, (c, now, done))

    def _build_txop(self, node: _WifiNode, t: int):
        blk = t // 1_000_000
        if node.is_ap:
            order = node.order
            k = len(order)
            start = 0
            for i, u in enumerate(order):
                if u > node.rr_last:
                    start = i
                    break
            for j in range(k):
                u = order[(start + j) % k]
                q = node.queues[u]
                if not q:
                    continue
                rate = self.wifi_dl[u][blk]
                if rate <= 0:
                    continue
                node.rr_last = u
                if self.boost:
                    self._materialize(u, t)
                break
            else:
                return None
        else:
            u = node.index
            q = node.queues[u]
            rate = self.wifi_ul[u][blk]
            if rate <= 0 or not q:
                return None
        budget = rate * self.w_txop / 1000.0
        served = q.serve(budget, True)
        used = served[3]
        if used <= 0:
            return None
        ppdu = self.w_phy + airtime_ns(used, rate)
        return (node, u, q, served, ppdu, node.rx_dbm, used)

    def _on_wifi_done(self, c: int, t0: int, plans: list) -> None:
        self.ch_busy[c] = False
        for node, u, q, served, ppdu, _, used in plans:
            t_rx = t0 + ppdu
            ctrl, acks, segs, _ = served
            cell = node.name if node.is_ap else "WIFI_UL"
            app = 0
            for f, nbytes, _ in segs:
                app += 8 * nbytes
            self.overhead[cell] += int(used) - app
            if self.boost and node.is_ap:
                if q.data_bytes == 0:
                    self._end_burst(u)
                if ctrl:
                    self._ucm_receive(u, ctrl, t_rx)
            for f, nbytes, _ in segs:
                self._deliver(f, nbytes, t_rx, cell)
            if acks and node.is_ap:
                self._on_ul_acks(u, acks)
            if self.trace is not None:
                self._log("tx", node.name, "ftp_data" if segs else "ctrl", int(used) // 8, "wifi", t_rx)
        self._schedule_access(c)

    # -- LTE --------------------------------------------------------------------
    def _wake_lte(self) -> None:
        if not self.tti_pending and any(self.bs_q.values()):
            self.tti_pending = True
            tti = self.tti
            self._push((self.now // tti + 1) * tti, LTE_TTI)
        if not self.ul_pending and any(self.ul_q.values()):
            self.ul_pending = True
            step = self.tti * self.cfg.ul_step_ttis
            self._push((self.now // step + 1) * step, UL_STEP)

    def _on_tti(self) -> None:
        """Serve the TTI that ends now."""
        # tti_pending stays set while serving so deliveries do not re-arm the TTI
        active = [u for u, q in self.bs_q.items() if q]
        if not active:
            self.tti_pending = False
            return
        alloc = self.rr.schedule_tti(active)
        lte = self.cfg.lte
        t_start = self.now - self.tti
        blk = max(t_start, 0) // 1_000_000
        for u, share in alloc.items():
            rate = self.lte_dl[u][blk]
            bits = rate * 1e3 * lte.tti_ms * share * (1.0 - lte.overhead_fraction)
            q = self.bs_q[u]
            ctrl, acks, segs, used = q.serve(bits, False)
            app = sum(8 * nb for _, nb, _ in segs)
            self.overhead["BS"] += int(used) - app
            for f, nbytes, _ in segs:
                self._deliver(f, nbytes, self.now, "BS")
            if acks:
                self._on_ul_acks(u, acks)
        if any(self.bs_q.values()):
            self._push(self.now + self.tti, LTE_TTI)
        else:
            self.tti_pending = False

    def _on_ul_step(self) -> None:
        """Share the UL pool over backlogged UEs for the step that ends now."""
        step_ns = self.tti * self.cfg.ul_step_ttis
        budget = self.cfg.lte.ul_capacity_mbps * step_ns / 1000.0
        active = [u for u, q in self.ul_q.items() if q]
        # water-filling: equal shares, leftovers redistributed
        while active and budget > 1e-9:
            share = budget / len(active)
            nxt = []
            for u in active:
                q = self.ul_q[u]
                ctrl, acks, segs, used = q.serve(share, False)
                budget -= used
                app = sum(8 * nb for _, nb, _ in segs)
                self.overhead["LTE_UL"] += int(used) - app
                for f, nbytes, _ in segs:
                    self._deliver(f, nbytes, self.now, "LTE_UL")
                if q and used >= share - 1e-9:
                    nxt.append(u)
            if len(nxt) == len(active):
                break
            active = nxt
        if any(self.ul_q.values()):
            self._push(self.now + step_ns, UL_STEP)
        else:
            self.ul_pending = False

    def _lte_estimate(self, ue: int) -> float:
        """Round-robin rate the existing LTE DL UEs would keep after admitting ``ue``."""
        existing = [self.lte_mean[u] for u in range(self.n)
                    if u != ue and self.connected[u] and self.rcm.ues[u].path is Path.LTE]
        est = estimate_post_switch_throughput(existing, self.lte_mean[ue])
        return min(est[:-1]) if existing else est[-1]

    # -- Boost: initial probing ---------------------------------------------------
    def _connect(self, u: int) -> None:
        """Attach a UE: DL starts on the Wi-Fi bearer while the initial test runs."""
        self.connected[u] = True
        if self.drop.ue_ap_association[u] is not None:
            self.rcm.ues[u].path = Path.WIFI
        else:
            self.lte_since[u] = self.now
        self._start_initial(u, connecting=True)

    def _start_initial(self, u: int, connecting: bool) -> None:
        if self.drop.ue_ap_association[u] is None:
            # no usable AP: the criteria fail without probing
            self._apply_initial(u, None, connecting)
            return
        pc = self.cfg.rlm.probe
        self.ini_round[u] += 1
        r = self.ini_round[u]
        self.ini_connecting[u] = connecting
        self.ini_open[u] = True
        spacing = int(round(pc.ini_spacing_s * NS))
        self.ini_sent[u] = [self.now + k * spacing for k in range(pc.x_ini)]
        self.ini_rx[u] = {}
        for k, t in enumerate(self.ini_sent[u]):
            self._push(t, INI_PROBE, (u, r, k))
        self._push(self.now + int(round(pc.ini_timeout_s * NS)), INI_TIMEOUT, (u, r))

    def _on_ini_probe(self, u: int, r: int, k: int) -> None:
        if r != self.ini_round[u] or not self.ini_open[u]:
            return
        node = self.aps[self.drop.ue_ap_association[u]]
        pkt = Packet(self.ini_bytes, PacketClass.PROBE, Direction.DL, u, self.now, sequence=k,
                     payload=("ini", r, k))
        node.queues[u].push_ctrl(pkt)
        self._wake(node)

    def _on_ini_timeout(self, u: int, r: int) -> None:
        if r == self.ini_round[u] and self.ini_open[u]:
            self.ini_open[u] = False
            self._drop_probes(u)
            self._apply_initial(u, None, self.ini_connecting[u])

    def _on_ini_result(self, u: int, r: int, stats) -> None:
        if r == self.ini_round[u] and self.ini_open[u]:
            self.ini_open[u] = False
            self._apply_initial(u, stats, self.ini_connecting[u])

    def _apply_initial(self, u: int, stats, connecting: bool) -> None:
        st = self.rcm.ues[u]
        before = st.path
        d = self.rcm.on_initial_result(u, stats, self.now / NS, connecting)
        after = st.path
        if connecting:
            self._log("connect", f"UE{u}", "", 0, after.value)
        if after is not Path.LTE:
            if before is Path.LTE:
                self._move_dl(u, to_wifi=True)
            elif self._dl_queue(u)[0].data_bytes:
                self._start_burst(u)
        else:
            if before is not Path.LTE:
                self._move_dl(u, to_wifi=False)
            self._push(self.now + int(round(self.cfg.rlm.probe.t_ip_s * NS)), REPROBE, (u,))
        if d is Decision.SWITCH_TO_WIFI and not connecting:
            self._log("switch", f"UE{u}", "", 0, "wifi")

    def _on_reprobe(self, u: int) -> None:
        if not self.rcm.reprobe_due(u, self.now / NS):
            return
        if self.ini_open[u]:
            return
        self._start_initial(u, connecting=False)

    def _ucm_receive(self, u: int, ctrl: list[Packet], t_rx: int) -> None:
        """UCM side: record probe arrivals and answer over the LTE UL."""
        ack_at = (t_rx // self.tti + 2) * self.tti
        dat_last = None
        for pkt in ctrl:
            if pkt.cls is not PacketClass.PROBE:
                continue
            kind = pkt.payload[0]
            if kind == "ini":
                _, r, k = pkt.payload
                if r != self.ini_round[u]:
                    continue
                self.ini_rx[u][k] = t_rx
                if k == len(self.ini_sent[u]) - 1:
                    sent = [t / NS for t in self.ini_sent[u]]
                    rx = {i: x / NS for i, x in self.ini_rx[u].items()}
                    stats = measure_initial_probes(sent, rx, self.cfg.rlm.probe.s_ini_bits)
                    self._push(ack_at, INI_RESULT, (u, r, stats))
            else:
                _, first, last, fresh = pkt.payload
                if fresh:
                    self.ucm[u].reset()
                dat_last = last
        if dat_last is not None:
            u_avg = self.ucm[u].on_active_probe(t_rx / NS)
            self._push(ack_at, PROBE_ACK, (u, dat_last, u_avg))

    def _drop_probes(self, u: int) -> None:
        a = self.drop.ue_ap_association[u]
        if a is None:
            return
        q = self.aps[a].queues[u]
        keep = [p for p in q.take_ctrl() if p.cls is not PacketClass.PROBE]
        for p in keep:
            q.push_ctrl(p)

    # -- Boost: data-phase probing ------------------------------------------------
    def _probing(self, u: int) -> bool:
        st = self.rcm.ues[u]
        return self.connected[u] and st.path is Path.WIFI and st.phase.value == "data"

    def _start_burst(self, u: int) -> None:
        if not self._probing(u):
            return
        bl = self.bursts[u]
        if bl and bl[-1].end is None:
            return
        b = _Burst(self.next_seq[u], self.now)
        bl.append(b)
        if len(bl) > 8:
            del bl[0]
        if not self.deadline_live[u]:
            self.deadline_live[u] = True
            self._push(self.now + self.dat_timeout, PROBE_DEADLINE, (u, b.base))

    def _end_burst(self, u: int) -> None:
        bl = self.bursts[u]
        if bl and bl[-1].end is None:
            bl[-1].end = self.next_seq[u]

    def _probe_time(self, u: int, s: int) -> int | None:
        """Insertion time of probe ``s`` (None if it was never and will never be sent)."""
        for b in reversed(self.bursts[u]):
            if s >= b.base:
                if b.end is not None and s >= b.end:
                    return None
                return b.start + (s - b.base) * self.probe_ns
        return None

    def _materialize(self, u: int, t: int) -> None:
        """Enqueue the active probes that became due up to ``t`` as one batch."""
        bl = self.bursts[u]
        if not bl or bl[-1].end is not None or not self._probing(u):
            return
        b = bl[-1]
        due = (t - b.start) // self.probe_ns + 1 - (self.next_seq[u] - b.base)
        if due <= 0:
            return
        first = self.next_seq[u]
        self.next_seq[u] += due
        pkt = Packet(self.probe_bytes, PacketClass.PROBE, Direction.DL, u, t, sequence=first,
                     payload=("dat", first, first + due - 1, first == b.base), count=due)
        q = self.aps[self.drop.ue_ap_association[u]].queues[u]
        q.ctrl.appendleft(pkt)
        q.ctrl_bits += 8 * due * q.air_bytes(pkt.size)

    def _on_probe_ack(self, u: int, seq: int, u_avg) -> None:
        self._log("probe_ack", f"UE{u}", "probe_ack", 0, "lte")
        if not self._probing(u):
            return
        d = self.rcm.on_probe_ack(u, u_avg, self.now / NS, seq)
        self._handle_data_decision(u, d)

    def _on_deadline(self, u: int, s: int) -> None:
        self.deadline_live[u] = False
        if not self._probing(u):
            return
        st = self.rcm.ues[u]
        if s <= st.last_acked_seq:
            nxt = st.last_acked_seq + 1
        else:
            self._log("probe_missing", f"UE{u}", "probe_ack", 0, "lte")
            d = self.rcm.on_missing_ack(u, self.now / NS)
            self._handle_data_decision(u, d)
            if not self._probing(u):
                return
            nxt = s + 1
        t = self._probe_time(u, nxt)
        if t is None and nxt < self.next_seq[u]:
            t = self.now
        if t is not None:
            self.deadline_live[u] = True
            self._push(max(self.now, t + self.dat_timeout), PROBE_DEADLINE, (u, nxt))

    def _handle_data_decision(self, u: int, d: Decision) -> None:
        if d is Decision.SWITCH_TO_LTE:
            self._log("switch", f"UE{u}", "", 0, "lte")
            self._end_burst(u)
            self._move_dl(u, to_wifi=False)
            self._push(self.now + int(round(self.cfg.rlm.probe.t_ip_s * NS)), REPROBE, (u,))
        elif d is Decision.WIFI_ONLY:
            self._log("wifi_only", f"UE{u}", "", 0, "wifi")
            self._end_burst(u)

    def _move_dl(self, u: int, to_wifi: bool) -> None:
        """Carry pending DL data and DL TCP ACKs over to the other path."""
        a = self.drop.ue_ap_association[u]
        if a is None:
            return
        node = self.aps[a]
        wq, lq = node.queues[u], self.bs_q[u]
        src, dst = (lq, wq) if to_wifi else (wq, lq)
        for rem, tag in src.take_files():
            dst.push_file(rem, tag)
        dst.push_acks(src.acks)
        src.acks = 0
        if not to_wifi:
            self._drop_probes(u)
            if self.lte_since[u] is None:
                self.lte_since[u] = self.now
            self._wake_lte()
        else:
            if self.lte_since[u] is not None:
                self.lte_ue_ns += self.now - self.lte_since[u]
                self.lte_since[u] = None
            if wq.data_bytes:
                self._start_burst(u)
            self._wake(node)

    # -- result -----------------------------------------------------------------
    def _result(self) -> DropResult:
        end = self.dur
        active = list(self.ue_active)
        inflight = 0
        for u in range(self.n):
            f = self.dl_file[u]
            if f is not None:
                active[u] += max(0, end - max(f.arrival, self.warmup))
                inflight += 8 * (f.size - f.delivered)
        lte_ns = self.lte_ue_ns
        if self.boost:
            for u in range(self.n):
                if self.lte_since[u] is not None:
                    lte_ns += end - self.lte_since[u]
        log = [(e.time, e.ue, e.decision.value, e.reason) for e in self.rcm.log] if self.boost else []
        collisions = sum(ch.collisions for ch in self.channels)
        return DropResult(
            mode=self.mode, n_ues=self.n, drop=-1, seed=self.drop.seed, duration_s=self.cfg.duration_s,
            ue_dl_bits=list(self.ue_dl_bits), ue_active_s=[a / NS for a in active],
            cell_dl_bits=dict(self.cell_bits), ue_ul_bits=list(self.ue_ul_bits),
            overhead_bits=dict(self.overhead), injected_dl_bits=self.injected,
            inflight_dl_bits=inflight, switch_log=log, collisions=collisions,
            wifi_ul_ftp_bits=self.wifi_ul_ftp_bits, lte_dl_ue_seconds=lte_ns / NS,
            events=self.events,
        )


def run_drop(drop: Drop, mode: str, cfg: SimConfig, trace: list | None = None) -> DropResult:
    cfg.validate()
    return DropSimulator(drop, mode, cfg, trace).run()


def make_drop(seed: int, n_ues: int, cfg: SimConfig) -> Drop:
    return generate_drop(seed, n_ues, cfg.geometry, cfg.nodes, cfg.wifi_channels,
                         cfg.radio.shadowing_sigma_db, cfg.radio.wifi_carrier_ghz)


# -- campaigns ------------------------------------------------------------------

@dataclass(frozen=True)
class DropTask:
    mode: str
    n_ues: int
    drop: int
    seed: int


def campaign_tasks(cc: CampaignConfig) -> list[DropTask]:
    """Every (mode, n_ues, drop) cell of the matrix with its derived seed.

    The drop seed does not depend on the mode, so all configurations see the
    same placement, shadowing, fading and traffic realisations.
    """
    return [DropTask(m, n, d, derive_seed(cc.master_seed, n, d))
            for m in cc.modes for n in cc.ue_counts for d in range(cc.drops)]


def _run_task(args) -> DropResult:
    task, cfg = args
    drop = make_drop(task.seed, task.n_ues, cfg)
    res = DropSimulator(drop, task.mode, cfg).run()
    res.drop = task.drop
    return res


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("BOOSTSIM_WORKERS")
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ValueError(f"BOOSTSIM_WORKERS must be an integer, got {env!r}") from None
    if workers is None:
        workers = 1
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def run_campaign(cc: CampaignConfig, workers: int | None = None, progress=None) -> list[DropResult]:
    """Run the whole matrix; results come back in canonical (mode, n_ues, drop) order."""
    cc.validate()
    tasks = campaign_tasks(cc)
    workers = resolve_workers(workers)
    args = [(t, cc.sim) for t in tasks]
    if workers == 1:
        out = []
        for i, a in enumerate(args):
            out.append(_run_task(a))
            if progress:
                progress(i + 1, len(args))
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = []
            for i, r in enumerate(ex.map(_run_task, args, chunksize=max(1, len(args) // (4 * workers)))):
                out.append(r)
                if progress:
                    progress(i + 1, len(args))
    key = {m: i for i, m in enumerate(MODES)}
    return sorted(out, key=lambda r: (key[r.mode], r.n_ues, r.drop))


def calibration_drop(mode: str, cfg: SimConfig, seed: int = 1) -> DropResult:
    """Single UE, saturated DL source with no UL sessions and no TCP feedback."""
    c = _clone(cfg)
    c.traffic.full_buffer = True
    c.traffic.ul_enabled = False
    c.traffic.tcp_acks = False
    drop = make_drop(seed, 1, c)
    return run_drop(drop, mode, c)


def calibrate(cfg: SimConfig, lte_target: float = 63.0, wifi_target: float = 140.0,
              seed: int = 1, iterations: int = 4, duration_s: float | None = None) -> tuple[float, float]:
    """Fit the LTE and Wi-Fi rate-table scales to the single-UE goodput targets."""
    from .metrics import ue_throughput

    c = _clone(cfg)
    if duration_s is not None:
        c.duration_s = duration_s
    c.warmup_s = 0.0
    for _ in range(iterations):
        lte = ue_throughput(calibration_drop("lte_only", c, seed), 0)
        wifi = ue_throughput(calibration_drop("wifi_only", c, seed), 0)
        if lte <= 0 or wifi <= 0:
            raise SimulationError("calibration drop delivered nothing")
        c.radio.lte_scale *= lte_target / lte
        c.radio.wifi_scale *= wifi_target / wifi
    return c.radio.lte_scale, c.radio.wifi_scale


def _clone(cfg: SimConfig) -> SimConfig:
    import copy

    return copy.deepcopy(cfg)
