"""FTP model 2 traffic, TCP ACK coupling and IPsec framing."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

MTU = 1500
TCP_ACK_BYTES = 40
IPSEC_OVERHEAD = 66
IPSEC_TRAILER = 2
IPSEC_BLOCK = 16
DATA_PER_TCP_ACK = 3


class PacketClass(str, Enum):
    FTP_DATA = "ftp_data"
    TCP_ACK = "tcp_ack"
    PROBE = "probe"
    PROBE_ACK = "probe_ack"


class Direction(str, Enum):
    DL = "dl"
    UL = "ul"


@dataclass
class Packet:
    size: int
    cls: PacketClass
    direction: Direction
    ue: int
    created_at: int = 0  # ns
    delivered_at: int | None = None
    sequence: int = 0
    path: str = ""
    payload: object = None
    count: int = 1  # identical packets sent back to back (probe batches)


def segment_file(file_size: int, mtu: int = MTU) -> list[int]:
    """Split a file into IP packet sizes: full MTU packets then the remainder."""
    if mtu <= 0:
        raise ValueError("mtu must be positive")
    if file_size <= 0:
        return []
    full, rest = divmod(file_size, mtu)
    sizes = [mtu] * full
    if rest:
        sizes.append(rest)
    return sizes


def ipsec_padding(inner_size: int) -> int:
    return (IPSEC_BLOCK - (inner_size + IPSEC_TRAILER) % IPSEC_BLOCK) % IPSEC_BLOCK


def ipsec_encapsulate(inner_size: int) -> int:
    """Outer size of an IPsec tunnelled datagram (66 B header plus block padding)."""
    if inner_size < 1:
        raise ValueError("inner_size must be >= 1")
    return inner_size + IPSEC_OVERHEAD + ipsec_padding(inner_size)


def generate_tcp_acks(delivered_data_packets: int, already_acked: int = 0) -> int:
    """Number of new cumulative ACKs owed after ``delivered_data_packets`` in total.

    One ACK per three data packets; ``already_acked`` ACKs were sent earlier.
    """
    return delivered_data_packets // DATA_PER_TCP_ACK - already_acked


def next_reading_time(rng: np.random.Generator, mean: float = 0.1) -> float:
    return float(rng.exponential(mean))


@dataclass
class FtpSession:
    """One direction of an FTP model 2 session: file, read, file, read..."""

    ue: int
    direction: Direction
    file_size: int
    mean_reading_time: float = 0.1
    state: str = "reading"
    bytes_remaining: int = 0
    files_started: int = 0
    files_completed: int = 0
    active_since: int | None = None

    def start_file(self, now: int) -> None:
        if self.state == "transferring":
            raise RuntimeError("new file before previous completed")
        self.state = "transferring"
        self.bytes_remaining = self.file_size
        self.files_started += 1
        self.active_since = now

    def consume(self, nbytes: int) -> bool:
        """Account for delivered bytes; True when the file just completed."""
        self.bytes_remaining -= nbytes
        if self.bytes_remaining < 0:
            raise RuntimeError("delivered more than the file holds")
        if self.bytes_remaining == 0:
            self.state = "reading"
            self.files_completed += 1
            return True
        return False


class TxQueue:
    """Per-destination transmit queue: control packets first, then file data.

    File data is held as byte counts and cut into MTU packets on service, so a
    500 kB file costs one deque entry instead of 334 packet objects.
    ``encap`` applies IPsec framing to every packet on the air.
    """

    __slots__ = ("ctrl", "files", "encap", "mtu", "data_bytes", "_full_air", "ctrl_bits",
                 "acks", "ack_size", "_ack_air")

    def __init__(self, encap: bool = False, mtu: int = MTU, ack_size: int = TCP_ACK_BYTES):
        self.ctrl: deque[Packet] = deque()
        # TCP ACKs are pure load: only their count and air size matter
        self.acks = 0
        self.ack_size = ack_size
        self.files: deque[list] = deque()  # [remaining_bytes, session_tag]
        self.encap = encap
        self.mtu = mtu
        self.data_bytes = 0
        self.ctrl_bits = 0
        self._full_air = self.air_bytes(mtu)
        self._ack_air = self.air_bytes(ack_size)

    def air_bytes(self, size: int) -> int:
        return ipsec_encapsulate(size) if self.encap else size

    def set_encap(self, encap: bool) -> None:
        self.encap = encap
        self._full_air = self.air_bytes(self.mtu)
        self._ack_air = self.air_bytes(self.ack_size)

    def __bool__(self) -> bool:
        return self.data_bytes > 0 or self.acks > 0 or len(self.ctrl) > 0

    def push_acks(self, n: int) -> None:
        self.acks += n

    def push_ctrl(self, pkt: Packet) -> None:
        self.ctrl.append(pkt)
        self.ctrl_bits += 8 * pkt.count * self.air_bytes(pkt.size)

    def push_file(self, nbytes: int, tag=None) -> None:
        self.files.append([nbytes, tag])
        self.data_bytes += nbytes

    def backlog_air_bits(self) -> int:
        """On-air bits needed to drain the queue (overhead included)."""
        bits = self.ctrl_bits + 8 * self.acks * self._ack_air
        for rem, _ in self.files:
            full, rest = divmod(rem, self.mtu)
            bits += 8 * full * self._full_air
            if rest:
                bits += 8 * self.air_bytes(rest)
        return bits

    def take_files(self) -> list[list]:
        """Remove all pending file data (used when a UE changes path)."""
        files = list(self.files)
        self.files.clear()
        self.data_bytes = 0
        return files

    def take_ctrl(self) -> list[Packet]:
        pkts = list(self.ctrl)
        self.ctrl.clear()
        self.ctrl_bits = 0
        return pkts

    def serve(self, budget_bits: float, whole_packets: bool = True):
        """Send as much as fits in ``budget_bits`` of air capacity.

        Returns (ctrl_packets, acks_sent, data_segments, air_bits_used) where
        data_segments is a list of (tag, bytes, completed).
        With ``whole_packets`` False a partial packet may be carried as a
        fluid remainder (LTE RLC segmentation). With ``whole_packets`` at
        least one data packet goes out whenever file data is queued.
        """
        sent_ctrl = []
        used = 0
        ctrl = self.ctrl
        while ctrl:
            bits = 8 * ctrl[0].count * self.air_bytes(ctrl[0].size)
            if used + bits > budget_bits:
                break
            sent_ctrl.append(ctrl.popleft())
            used += bits
            self.ctrl_bits -= bits
        acks_sent = 0
        if self.acks:
            ack_bits = 8 * self._ack_air
            acks_sent = min(self.acks, int((budget_bits - used) // ack_bits))
            self.acks -= acks_sent
            used += acks_sent * ack_bits
        segments = []
        mtu = self.mtu
        full_bits = 8 * self._full_air
        while self.files and used < budget_bits:
            entry = self.files[0]
            rem = entry[0]
            room = budget_bits - used
            full, rest = divmod(rem, mtu)
            n_full = min(full, int(room // full_bits))
            nbytes = n_full * mtu
            used += n_full * full_bits
            if n_full == full:
                # only the remainder (or nothing) is left in this file
                if rest:
                    rbits = 8 * self.air_bytes(rest)
                    if used + rbits <= budget_bits:
                        nbytes += rest
                        used += rbits
                    elif not whole_packets:
                        frac = int((budget_bits - used) / rbits * rest)
                        nbytes += frac
                        used = budget_bits
            elif not whole_packets:
                frac_bits = budget_bits - used
                frac = int(frac_bits / full_bits * mtu)
                nbytes += frac
                used = budget_bits
            if nbytes == 0:
                break
            entry[0] -= nbytes
            self.data_bytes -= nbytes
            done = entry[0] == 0
            segments.append((entry[1], nbytes, done))
            if done:
                self.files.popleft()
            else:
                break
        if whole_packets and not segments and self.files:
            # a single MPDU may overrun the TXOP limit, so data always progresses
            entry = self.files[0]
            nbytes = min(entry[0], mtu)
            used += 8 * self.air_bytes(nbytes)
            entry[0] -= nbytes
            self.data_bytes -= nbytes
            done = entry[0] == 0
            segments.append((entry[1], nbytes, done))
            if done:
                self.files.popleft()
        return sent_ctrl, acks_sent, segments, used

    def restore(self, sent_ctrl, acks_sent, segments) -> None:
        """Put back what ``serve`` removed (the frame was lost in a collision)."""
        for tag, nbytes, done in reversed(segments):
            if done:
                self.files.appendleft([nbytes, tag])
            else:
                self.files[0][0] += nbytes
            self.data_bytes += nbytes
        self.acks += acks_sent
        for pkt in reversed(sent_ctrl):
            self.ctrl.appendleft(pkt)
            self.ctrl_bits += 8 * pkt.count * self.air_bytes(pkt.size)


def packets_completed(file_size: int, delivered_before: int, delivered_after: int, mtu: int = MTU) -> int:
    """Whole packets finished when a file's delivered byte count advances."""
    last = -(-file_size // mtu)
    after = last if delivered_after >= file_size else delivered_after // mtu
    before = last if delivered_before >= file_size else delivered_before // mtu
    return after - before
