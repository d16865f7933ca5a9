"""Simulation parameters and their validation."""
from dataclasses import dataclass, field, fields, asdict
import enum
import math


class AttackKind(str, enum.Enum):
    NONE = "none"
    SINKHOLE = "sinkhole"
    BLACKHOLE = "blackhole"
    FLOODING = "flooding"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        if text in ("", "null", "no", "attack-free"):
            text = "none"
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown attack kind {value!r}") from None


ATTACKER_RATIOS = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)


class ConfigError(ValueError):
    """Invalid configuration; ``violations`` lists every offending field."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class SimConfig:
    """One network simulation. Defaults are the full-scale network set-up (50 UAVs, 1800 s)."""

    area_x: float = 12000.0
    area_y: float = 12000.0
    area_z: float = 300.0
    duration_s: float = 1800.0
    uav_count: int = 50
    avg_speed_mps: float = 100.0
    tx_range_m: float = 250.0
    bandwidth_bps: float = 11e6
    traffic_connections: int = 10
    packet_size_bytes: int = 512
    packet_rate_hz: float = 1.0
    alpha_range: tuple = (0.25, 0.7)
    attacker_ratio: float = 0.0
    attack_kind: AttackKind = AttackKind.NONE
    seed: int = 1

    # protocol and mobility knobs with no fixed reference value
    mobility_dt_s: float = 1.0
    window_s: float = 5.0
    noise_scale: float = 0.3
    route_lifetime_s: float = 10.0
    discovery_timeout_s: float = 2.0
    buffer_size: int = 64
    seq_boost: int = 100
    flood_period_s: float = 3.0
    flood_burst: int = 10
    control_packet_bytes: int = 64
    label_mode: str = "contact"

    def __post_init__(self):
        object.__setattr__(self, "attack_kind", AttackKind.parse(self.attack_kind))
        object.__setattr__(self, "alpha_range", tuple(float(a) for a in self.alpha_range))
        problems = self.violations()
        if problems:
            raise ConfigError(problems)

    @property
    def node_count(self):
        """UAVs plus the ground base station (id 0)."""
        return self.uav_count + 1

    @property
    def bounds(self):
        return (0.0, 0.0, 0.0), (self.area_x, self.area_y, self.area_z)

    @property
    def n_windows(self):
        return int(round(self.duration_s / self.window_s))

    def violations(self):
        out = []
        positive = ("area_x", "area_y", "area_z", "duration_s", "avg_speed_mps", "tx_range_m",
                    "bandwidth_bps", "packet_size_bytes", "packet_rate_hz", "mobility_dt_s",
                    "window_s", "route_lifetime_s", "discovery_timeout_s", "buffer_size",
                    "flood_period_s", "flood_burst", "control_packet_bytes")
        for name in positive:
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0 (got {getattr(self, name)!r})")
        if self.noise_scale < 0:
            out.append("noise_scale must be >= 0")
        if self.seq_boost < 1:
            out.append("seq_boost must be >= 1")
        if self.traffic_connections < 0:
            out.append("traffic_connections must be >= 0")
        if self.uav_count < 2:
            out.append("uav_count must be >= 2")
        if len(self.alpha_range) != 2 or not (0 < self.alpha_range[0] <= self.alpha_range[1] < 1):
            out.append(f"alpha_range must be a sub-interval of (0, 1) (got {self.alpha_range!r})")
        if not 0.0 <= self.attacker_ratio <= 0.25:
            out.append(f"attacker_ratio must lie in [0, 0.25] (got {self.attacker_ratio!r})")
        if self.attack_kind is AttackKind.NONE and self.attacker_ratio > 0:
            out.append("attacker_ratio > 0 requires an attack_kind")
        if self.label_mode not in ("contact", "attacker-node"):
            out.append(f"label_mode must be 'contact' or 'attacker-node' (got {self.label_mode!r})")
        if self.window_s > 0 and self.mobility_dt_s > 0:
            steps = self.window_s / self.mobility_dt_s
            if abs(steps - round(steps)) > 1e-9:
                out.append("window_s must be a multiple of mobility_dt_s")
        if self.duration_s > 0 and self.window_s > 0:
            n = self.duration_s / self.window_s
            if abs(n - round(n)) > 1e-9:
                out.append("duration_s must be a multiple of window_s")
        n_pairs = self.uav_count * (self.uav_count - 1)
        if self.traffic_connections > n_pairs:
            out.append("more traffic connections than ordered UAV pairs")
        return out

    def replace(self, **changes):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return SimConfig(**data)

    def to_dict(self):
        d = asdict(self)
        d["attack_kind"] = self.attack_kind.value
        d["alpha_range"] = list(self.alpha_range)
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in unknown])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError([str(exc)]) from None


def attacker_count(ratio, uav_count):
    """Number of attackers for a ratio, rounding half up (0.05 * 50 -> 3)."""
    return int(math.floor(ratio * uav_count + 0.5 + 1e-9))
