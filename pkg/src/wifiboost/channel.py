"""Link budget, fading and SINR-to-rate mapping for the LTE and Wi-Fi radios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.special import j0

MIN_DISTANCE = 0.5
THERMAL_NOISE_DBM_HZ = -174.0
SPEED_OF_LIGHT = 299_792_458.0
FADING_BLOCK_S = 1e-3
MIMO_STREAM_SINR_DB = 15.0


def path_loss(distance: float, freq_ghz: float) -> float:
    """Indoor-hotspot LOS path loss in dB, distance clamped at 0.5 m."""
    d = max(float(distance), MIN_DISTANCE)
    return 16.9 * math.log10(d) + 32.8 + 20.0 * math.log10(freq_ghz)


def free_space_loss(distance: float, freq_ghz: float) -> float:
    d = max(float(distance), MIN_DISTANCE)
    return 20.0 * math.log10(4.0 * math.pi * d * freq_ghz * 1e9 / SPEED_OF_LIGHT)


def noise_power_dbm(bandwidth_mhz: float, noise_figure_db: float) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_mhz * 1e6) + noise_figure_db


def dbm_to_mw(x: float) -> float:
    return 10.0 ** (x / 10.0)


def mw_to_dbm(x: float) -> float:
    if x <= 0.0:
        return -math.inf
    return 10.0 * math.log10(x)


def doppler_hz(speed_kmh: float, freq_ghz: float) -> float:
    return speed_kmh / 3.6 * freq_ghz * 1e9 / SPEED_OF_LIGHT


def fading_gains(
    rng: np.random.Generator,
    n_links: int,
    n_blocks: int,
    doppler: float,
    antenna_pairs: int = 4,
    block_s: float = FADING_BLOCK_S,
) -> np.ndarray:
    """Block Rayleigh fading power gains, shape (n_links, n_blocks).

    Each antenna pair follows a first-order Gauss-Markov process whose lag-one
    correlation is the Jakes value J0(2*pi*fd*T); the returned gain is the
    mean |h|^2 over the pairs, so it has unit mean.
    """
    rho = float(j0(2.0 * math.pi * doppler * block_s))
    rho = min(max(rho, 0.0), 1.0 - 1e-12)
    shape = (n_links * antenna_pairs, n_blocks)
    w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    scale = math.sqrt(1.0 - rho * rho)
    w[:, 1:] *= scale
    # w[:, 0] stays unit variance so the process starts stationary
    h = lfilter([1.0], [1.0, -rho], w, axis=1)
    power = (h.real**2 + h.imag**2).reshape(n_links, antenna_pairs, n_blocks)
    return power.mean(axis=1)


@dataclass
class LinkRealization:
    """Static part of one transmitter/receiver link plus its fading trace."""

    path_loss: float
    shadowing: float
    carrier_ghz: float
    bandwidth_mhz: float
    tx_power_dbm: float = 0.0
    antenna_gain_db: float = 0.0
    fading: np.ndarray | None = None

    def mean_rx_dbm(self, tx_power_dbm: float | None = None) -> float:
        p = self.tx_power_dbm if tx_power_dbm is None else tx_power_dbm
        return p + self.antenna_gain_db - self.path_loss - self.shadowing

    def fading_at(self, t_s: float) -> float:
        if self.fading is None:
            return 1.0
        i = int(t_s / FADING_BLOCK_S)
        if i >= len(self.fading):
            i = len(self.fading) - 1
        return float(self.fading[i])

    def rx_mw(self, t_s: float, tx_power_dbm: float | None = None) -> float:
        return dbm_to_mw(self.mean_rx_dbm(tx_power_dbm)) * self.fading_at(t_s)


def instantaneous_sinr(
    link: LinkRealization,
    interferers: list[LinkRealization],
    tx_power: float,
    noise_figure: float,
    time: float,
) -> float:
    """SINR in dB at ``time``; every interferer is taken as transmitting."""
    signal = link.rx_mw(time, tx_power)
    noise = dbm_to_mw(noise_power_dbm(link.bandwidth_mhz, noise_figure))
    interference = sum(i.rx_mw(time) for i in interferers)
    return mw_to_dbm(signal) - mw_to_dbm(noise + interference)


@dataclass
class RateTable:
    technology: str
    thresholds_db: list[float]
    rates_mbps: list[float]  # per spatial stream
    calibration_scale: float = 1.0

    def __post_init__(self):
        if len(self.thresholds_db) != len(self.rates_mbps) or not self.rates_mbps:
            raise ValueError("rate table needs matching non-empty columns")
        if any(b < a for a, b in zip(self.thresholds_db, self.thresholds_db[1:])):
            raise ValueError("thresholds must be non-decreasing")
        if any(b < a for a, b in zip(self.rates_mbps, self.rates_mbps[1:])):
            raise ValueError("rates must be non-decreasing")

    @property
    def peak_mbps(self) -> float:
        return self.rates_mbps[-1] * 2 * self.calibration_scale


def stream_count(sinr_db: float, max_streams: int = 2) -> int:
    return max_streams if sinr_db >= MIMO_STREAM_SINR_DB else 1


def rate_from_sinr(sinr: float, table: RateTable, streams: int | None = None) -> float:
    """PHY rate in Mbps: best table entry at or below ``sinr``, times streams and scale."""
    th = table.thresholds_db
    if sinr < th[0]:
        return 0.0
    if streams is None:
        streams = stream_count(sinr)
    if streams not in (1, 2):
        raise ValueError("streams must be 1 or 2")
    lo, hi = 0, len(th) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if th[mid] <= sinr:
            lo = mid
        else:
            hi = mid - 1
    return table.rates_mbps[lo] * streams * table.calibration_scale


# 15-level CQI ladder capped at 64QAM; spectral efficiency x 10 MHz.
_LTE_EFF = [0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141,
            2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547]
_LTE_SINR = [-6.7, -4.7, -2.3, 0.2, 2.4, 4.3, 5.9, 8.1, 10.3, 11.7, 14.1, 16.3, 18.7, 21.0, 22.7]
# 802.11ac 20 MHz, 800 ns GI, single stream, MCS0..9 (MCS9 capped at 256QAM 5/6).
_WIFI_RATE = [6.5, 13.0, 19.5, 26.0, 39.0, 52.0, 58.5, 65.0, 78.0, 86.7]
_WIFI_SINR = [2.0, 5.0, 9.0, 11.0, 15.0, 18.0, 20.0, 25.0, 29.0, 31.0]


def lte_table(bandwidth_mhz: float = 10.0, scale: float = 1.0) -> RateTable:
    return RateTable("LTE", list(_LTE_SINR), [e * bandwidth_mhz for e in _LTE_EFF], scale)


def wifi_table(scale: float = 1.0) -> RateTable:
    return RateTable("WiFi", list(_WIFI_SINR), list(_WIFI_RATE), scale)


@dataclass
class RadioParams:
    lte_carrier_ghz: float = 2.0
    lte_bandwidth_mhz: float = 10.0
    wifi_carrier_ghz: float = 5.0
    wifi_bandwidth_mhz: float = 20.0
    shadowing_sigma_db: float = 3.0
    ue_noise_figure_db: float = 9.0
    node_noise_figure_db: float = 5.0
    ue_speed_kmh: float = 3.0
    lte_scale: float = 1.0
    wifi_scale: float = 1.0
    extra: dict = field(default_factory=dict)


def rate_trace(sinr_db: np.ndarray, table: RateTable, max_streams: int = 2) -> np.ndarray:
    """Vectorised ``rate_from_sinr`` over an array of SINR samples."""
    sinr_db = np.asarray(sinr_db, dtype=float)
    th = np.asarray(table.thresholds_db)
    rates = np.asarray(table.rates_mbps) * table.calibration_scale
    idx = np.searchsorted(th, sinr_db, side="right") - 1
    out = np.where(idx < 0, 0.0, rates[np.clip(idx, 0, None)])
    streams = np.where(sinr_db >= MIMO_STREAM_SINR_DB, max_streams, 1)
    return out * streams
