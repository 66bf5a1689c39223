"""Drop generation: UE placement, AP channel selection, shadowing, association."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import dbm_to_mw, path_loss

RSSI_MIN_DBM = -82.0
MAX_PLACEMENT_ATTEMPTS = 10_000


class InfeasibleGeometry(RuntimeError):
    pass


@dataclass
class Geometry:
    width: float = 120.0
    depth: float = 50.0
    bs_position: tuple[float, float] = (60.0, 25.0)
    ap_positions: list[tuple[float, float]] = field(default_factory=lambda: [(30.0, 25.0), (90.0, 25.0)])
    min_ap_ue_distance: float = 3.0

    def validate(self) -> None:
        if self.width <= 0 or self.depth <= 0:
            raise ValueError("geometry needs positive width and depth")
        for p in [self.bs_position, *self.ap_positions]:
            if not self.contains(p):
                raise ValueError(f"node position {p} outside the {self.width}x{self.depth} area")
        if self.min_ap_ue_distance < 0:
            raise ValueError("min_ap_ue_distance must be >= 0")

    def contains(self, p) -> bool:
        return 0.0 <= p[0] <= self.width and 0.0 <= p[1] <= self.depth


@dataclass
class NodeConfig:
    ap_tx_power: float = 24.0
    ue_tx_power: float = 18.0
    bs_tx_power: float = 24.0
    ap_antenna_gain: float = 5.0
    ue_antenna_gain: float = 0.0
    bs_antenna_gain: float = 5.0
    antennas_per_node: int = 2


@dataclass
class Drop:
    seed: int
    ue_positions: np.ndarray  # (n_ues, 2)
    ue_ap_association: list[int | None]
    ap_channels: dict[int, int]
    shadowing_ap: np.ndarray  # (n_ues, n_aps) dB
    shadowing_bs: np.ndarray  # (n_ues,) dB
    rssi_dbm: np.ndarray  # (n_ues, n_aps) AP pilot at UE
    geometry: Geometry
    nodes: NodeConfig

    @property
    def n_ues(self) -> int:
        return len(self.ue_positions)


def place_ues(rng: np.random.Generator, n_ues: int, geometry: Geometry) -> np.ndarray:
    """Uniform placement, re-sampling each UE until it clears every AP."""
    if n_ues < 1:
        raise ValueError("n_ues must be >= 1")
    aps = np.asarray(geometry.ap_positions, dtype=float).reshape(-1, 2)
    out = np.empty((n_ues, 2))
    for u in range(n_ues):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            p = rng.uniform((0.0, 0.0), (geometry.width, geometry.depth))
            if len(aps) == 0 or np.min(np.hypot(*(aps - p).T)) >= geometry.min_ap_ue_distance:
                out[u] = p
                break
        else:
            raise InfeasibleGeometry(
                f"could not place UE {u} {geometry.min_ap_ue_distance} m away from all APs "
                f"after {MAX_PLACEMENT_ATTEMPTS} attempts"
            )
    return out


def assign_channels(
    aps: list[tuple[float, float]],
    channels: int,
    tx_power: float = 24.0,
    antenna_gain: float = 5.0,
    freq_ghz: float = 5.0,
) -> dict[int, int]:
    """Greedy sequential selection: least load, then least received interference.

    Load is the number of APs already on a channel; interference is the summed
    power those APs put at the deciding AP. Ties go to the lowest channel.
    """
    if channels < 1:
        raise ValueError("channels must be >= 1")
    chosen: dict[int, int] = {}
    for i, p in enumerate(aps):
        best = None
        for ch in range(channels):
            users = [j for j, c in chosen.items() if c == ch]
            interf = 0.0
            for j in users:
                d = float(np.hypot(p[0] - aps[j][0], p[1] - aps[j][1]))
                interf += dbm_to_mw(tx_power + 2 * antenna_gain - path_loss(d, freq_ghz))
            key = (len(users), interf, ch)
            if best is None or key < best:
                best = key
        chosen[i] = best[2]
    return chosen


def associate_ue(rssi: list[float] | np.ndarray, threshold: float = RSSI_MIN_DBM) -> int | None:
    """Strongest pilot wins if it reaches the threshold (inclusive); lowest index on ties."""
    if len(rssi) == 0:
        return None
    best = int(np.argmax(rssi))  # argmax returns the first maximum
    return best if rssi[best] >= threshold else None


def generate_drop(
    seed: int,
    n_ues: int,
    geometry: Geometry | None = None,
    nodes: NodeConfig | None = None,
    channels: int = 2,
    shadowing_sigma: float = 3.0,
    wifi_freq_ghz: float = 5.0,
) -> Drop:
    geometry = geometry or Geometry()
    nodes = nodes or NodeConfig()
    geometry.validate()
    ss = np.random.SeedSequence(seed)
    place_seq, shadow_seq = ss.spawn(2)
    pos = place_ues(np.random.default_rng(place_seq), n_ues, geometry)
    srng = np.random.default_rng(shadow_seq)
    n_aps = len(geometry.ap_positions)
    shadow_ap = srng.normal(0.0, shadowing_sigma, size=(n_ues, n_aps))
    shadow_bs = srng.normal(0.0, shadowing_sigma, size=n_ues)
    rssi = np.empty((n_ues, n_aps))
    for u in range(n_ues):
        for a, ap in enumerate(geometry.ap_positions):
            d = float(np.hypot(pos[u, 0] - ap[0], pos[u, 1] - ap[1]))
            rssi[u, a] = (nodes.ap_tx_power + nodes.ap_antenna_gain + nodes.ue_antenna_gain
                          - path_loss(d, wifi_freq_ghz) - shadow_ap[u, a])
    assoc = [associate_ue(rssi[u]) for u in range(n_ues)]
    ap_channels = assign_channels(list(geometry.ap_positions), channels, nodes.ap_tx_power,
                                  nodes.ap_antenna_gain, wifi_freq_ghz)
    return Drop(seed, pos, assoc, ap_channels, shadow_ap, shadow_bs, rssi, geometry, nodes)
