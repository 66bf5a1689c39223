"""Campaign configuration: dataclasses, defaults and the dotted-key file format.

The file format is line based::

    # comment
    [rlm]
    tph_min_mbps = 5
    campaign.ue_counts = 4, 20, 32

A ``[section]`` header prefixes the keys that follow it; keys may also be
written fully dotted. Values are parsed as int, float, bool or
comma-separated lists, falling back to a bare string.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channel import RadioParams
from .mac_lte import LteMacParams
from .mac_wifi import WifiMacParams
from .rlm import DecisionThresholds, GovernorParams, ProbeConfig
from .scenario import Geometry, NodeConfig

MODES = ("lte_only", "wifi_only", "lwip", "boost")

# Fitted with `wifiboost calibrate` so single-UE full-buffer goodput lands on
# 63 Mbps (LTE) and 140 Mbps (Wi-Fi).
DEFAULT_LTE_SCALE = 0.756128
DEFAULT_WIFI_SCALE = 0.862159


class ConfigError(ValueError):
    pass


@dataclass
class TrafficParams:
    dl_file_bytes: int = 500_000
    ul_file_bytes: int = 250_000
    mean_reading_time_s: float = 0.1
    mtu: int = 1500
    tcp_ack_bytes: int = 40
    full_buffer: bool = False
    ul_enabled: bool = True
    tcp_acks: bool = True
    # unacknowledged UL bytes a UE may have outstanding (0 = unlimited)
    ul_window_bytes: int = 49152

    def validate(self) -> None:
        if self.dl_file_bytes <= 0 or self.ul_file_bytes <= 0:
            raise ConfigError("traffic file sizes must be positive")
        if self.mean_reading_time_s < 0:
            raise ConfigError("traffic.mean_reading_time_s must be >= 0")
        if self.ul_window_bytes < 0:
            raise ConfigError("traffic.ul_window_bytes must be >= 0")
        if self.mtu <= 0 or self.tcp_ack_bytes <= 0:
            raise ConfigError("traffic.mtu and traffic.tcp_ack_bytes must be positive")


@dataclass
class RlmParams:
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    thresholds: DecisionThresholds = field(default_factory=DecisionThresholds)
    governor: GovernorParams = field(default_factory=GovernorParams)
    alpha: float = 0.25

    def validate(self) -> None:
        self.probe.validate()
        self.thresholds.validate()
        if not 0 < self.alpha <= 1:
            raise ConfigError("rlm.alpha must be in (0, 1]")
        if self.governor.t_switch_s < 0 or self.governor.r_switch_mbps < 0:
            raise ConfigError("rlm governor values must be >= 0")


@dataclass
class SimConfig:
    geometry: Geometry = field(default_factory=Geometry)
    nodes: NodeConfig = field(default_factory=NodeConfig)
    radio: RadioParams = field(default_factory=lambda: RadioParams(
        lte_scale=DEFAULT_LTE_SCALE, wifi_scale=DEFAULT_WIFI_SCALE))
    wifi: WifiMacParams = field(default_factory=WifiMacParams)
    lte: LteMacParams = field(default_factory=LteMacParams)
    traffic: TrafficParams = field(default_factory=TrafficParams)
    rlm: RlmParams = field(default_factory=RlmParams)
    wifi_channels: int = 2
    duration_s: float = 10.0
    warmup_s: float = 0.0
    ul_step_ttis: int = 10

    def validate(self) -> None:
        try:
            self.geometry.validate()
            self.wifi.validate()
            self.lte.validate()
            self.rlm.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        self.traffic.validate()
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if not 0 <= self.warmup_s < self.duration_s:
            raise ConfigError("warmup_s must be in [0, duration_s)")
        if self.wifi_channels < 1:
            raise ConfigError("wifi_channels must be >= 1")
        if self.ul_step_ttis < 1:
            raise ConfigError("ul_step_ttis must be >= 1")
        for name in ("lte_scale", "wifi_scale"):
            if getattr(self.radio, name) <= 0:
                raise ConfigError(f"radio.{name} must be positive")


@dataclass
class CampaignConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    modes: list[str] = field(default_factory=lambda: list(MODES))
    ue_counts: list[int] = field(default_factory=lambda: [4, 20, 32])
    drops: int = 100
    master_seed: int = 1
    output: str = "results"

    def validate(self) -> None:
        self.sim.validate()
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            raise ConfigError(f"campaign.modes: unknown mode(s) {bad}; choose from {list(MODES)}")
        if not self.ue_counts or any(n < 1 for n in self.ue_counts):
            raise ConfigError("campaign.ue_counts must be positive integers")
        if self.drops < 1:
            raise ConfigError("campaign.drops must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# dotted prefix -> attribute path inside CampaignConfig
_SECTIONS = {
    "scenario": ("sim", "geometry"),
    "nodes": ("sim", "nodes"),
    "channel": ("sim", "radio"),
    "wifi": ("sim", "wifi"),
    "lte": ("sim", "lte"),
    "traffic": ("sim", "traffic"),
    "rlm": ("sim", "rlm"),
    "rlm.probe": ("sim", "rlm", "probe"),
    "rlm.thresholds": ("sim", "rlm", "thresholds"),
    "rlm.governor": ("sim", "rlm", "governor"),
    "sim": ("sim",),
    "campaign": (),
}


def _parse_value(text: str):
    t = text.strip()
    if "," in t:
        return [_parse_value(p) for p in t.split(",") if p.strip()]
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t.strip('"').strip("'")


_UNIT_SUFFIXES = ("", "_mbps", "_s", "_bits", "_db", "_dbm", "_us", "_ms", "_bytes", "_ghz", "_mhz", "_kmh")


def _field_names(obj) -> set[str]:
    return {f.name for f in dataclasses.fields(obj)}


def _match(obj, attr: str) -> str | None:
    """Field name for ``attr``, allowing the unit suffix to be left off."""
    names = _field_names(obj)
    for suffix in _UNIT_SUFFIXES:
        name = attr + suffix
        if name in names and not dataclasses.is_dataclass(getattr(obj, name)):
            return name
    return None


def _resolve(cfg: CampaignConfig, key: str):
    """Find (object, attribute) for a dotted key, searching nested rlm blocks."""
    prefix, _, attr = key.rpartition(".")
    if prefix in _SECTIONS:
        obj = cfg
        for a in _SECTIONS[prefix]:
            obj = getattr(obj, a)
        name = _match(obj, attr)
        if name:
            return obj, name
        # rlm.<field> may live in one of the nested rlm blocks
        if prefix == "rlm":
            for sub in ("probe", "thresholds", "governor"):
                o = getattr(cfg.sim.rlm, sub)
                name = _match(o, attr)
                if name:
                    return o, name
    raise ConfigError(f"unknown configuration key '{key}'")


def _coerce(obj, attr: str, value, key: str):
    current = getattr(obj, attr)
    try:
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(current, int) and not isinstance(current, bool):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(current, float) or current is None:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if isinstance(current, list):
            vals = value if isinstance(value, list) else [value]
            if key.endswith("ap_positions"):
                if len(vals) % 2:
                    raise TypeError
                return [(float(vals[i]), float(vals[i + 1])) for i in range(0, len(vals), 2)]
            return vals
        if isinstance(current, tuple):
            vals = value if isinstance(value, list) else [value]
            return tuple(float(v) for v in vals)
        if isinstance(current, str):
            return str(value)
    except (TypeError, ValueError):
        pass
    else:
        return value
    raise ConfigError(f"bad value for '{key}': {value!r}")


def apply_overrides(cfg: CampaignConfig, items: dict[str, object]) -> CampaignConfig:
    for key, value in items.items():
        obj, attr = _resolve(cfg, key)
        setattr(obj, attr, _coerce(obj, attr, value, key))
    return cfg


def parse_text(text: str, source: str = "<config>") -> CampaignConfig:
    cfg = CampaignConfig()
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{source}:{lineno}:1: malformed section header")
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"{source}:{lineno}:2: unknown section '{section}'")
            continue
        if "=" not in line:
            col = len(raw) - len(raw.lstrip()) + 1
            raise ConfigError(f"{source}:{lineno}:{col}: expected 'key = value'")
        k, v = line.split("=", 1)
        k = k.strip()
        key = k if (not section or k.rpartition(".")[0] in _SECTIONS) else f"{section}.{k}"
        if not v.strip():
            raise ConfigError(f"{source}:{lineno}:{raw.index('=') + 2}: missing value for '{k}'")
        try:
            apply_overrides(cfg, {key: _parse_value(v)})
        except ConfigError as e:
            raise ConfigError(f"{source}:{lineno}: {e}") from None
    cfg.validate()
    return cfg


def parse_config(path: str | Path | None) -> CampaignConfig:
    """Read and validate a campaign file; ``None`` gives the defaults."""
    if path is None:
        cfg = CampaignConfig()
        cfg.validate()
        return cfg
    p = Path(path)
    return parse_text(p.read_text(), str(p))


def dumps(cfg: CampaignConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True, default=str)
