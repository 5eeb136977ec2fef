"""Run configuration: flat key=value config files and their defaults.

A config file is a plain-text document of ``key=value`` lines (``#`` starts a
comment).  Keys mirror the ``NetworkConfig`` field names exactly, plus
``scheduling_period`` and the ``safety.*`` gate keys.  Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

CARRIER_BANDWIDTH_HZ = 20e6


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    import math

    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class NetworkConfig:
    """Parameters of the multi-cell downlink simulator.

    Defaults are the reference scenario shipped in ``configs/reference.cfg``.
    ``rbg_bandwidth_hz=0`` means "divide the 20 MHz carrier evenly across the
    RBGs of an O-RU".
    """

    num_orus: int = 4
    rbgs_per_oru: int = 12
    num_users: int = 16
    inter_site_distance_m: float = 900.0
    rbg_bandwidth_hz: float = 0.0
    noise_power_mw: float = dbm_to_mw(-114.0)
    p_min_mw: float = dbm_to_mw(1.0)
    p_max_mw: float = dbm_to_mw(38.0)
    power_levels: int = 10
    pathloss_intercept_db: float = 120.9
    pathloss_slope_db: float = 37.6
    shadowing_std_db: float = 8.0
    slot_duration_s: float = 0.1
    slots_per_episode: int = 50
    direction_change_prob: float = 0.3
    speed_min_mps: float = 1.0
    speed_max_mps: float = 50.0
    arrival_rate_set_bps: tuple[float, ...] = (3e6, 5e6, 7e6, 9e6)
    mean_speed_set_mps: tuple[float, ...] = (10.0, 20.0, 30.0, 40.0)
    initial_distance_min_m: float = 150.0
    initial_distance_max_m: float = 450.0
    csi_clamp: float = 30.0
    fast_fading: bool = False

    def validate(self) -> "NetworkConfig":
        if self.num_orus < 1:
            raise ConfigError("num_orus must be >= 1")
        if self.rbgs_per_oru < 1:
            raise ConfigError("rbgs_per_oru must be >= 1")
        if self.num_users < 1 or self.num_users % self.num_orus != 0:
            raise ConfigError("num_users must be a positive multiple of num_orus")
        if not 0.0 < self.p_min_mw <= self.p_max_mw:
            raise ConfigError("power bounds must satisfy 0 < p_min_mw <= p_max_mw")
        if self.power_levels < 2:
            raise ConfigError("power_levels must be >= 2")
        if not 0.0 <= self.direction_change_prob <= 1.0:
            raise ConfigError("direction_change_prob must be in [0, 1]")
        if self.slot_duration_s <= 0.0:
            raise ConfigError("slot_duration_s must be positive")
        if self.slots_per_episode < 1:
            raise ConfigError("slots_per_episode must be >= 1")
        if self.noise_power_mw <= 0.0:
            raise ConfigError("noise_power_mw must be positive")
        if self.rbg_bandwidth_hz < 0.0:
            raise ConfigError("rbg_bandwidth_hz must be >= 0 (0 = auto)")
        if not 0.0 < self.speed_min_mps <= self.speed_max_mps:
            raise ConfigError("speed range must satisfy 0 < speed_min_mps <= speed_max_mps")
        if not self.arrival_rate_set_bps or min(self.arrival_rate_set_bps) <= 0.0:
            raise ConfigError("arrival_rate_set_bps must be non-empty and positive")
        if not self.mean_speed_set_mps or min(self.mean_speed_set_mps) <= 0.0:
            raise ConfigError("mean_speed_set_mps must be non-empty and positive")
        if not 0.0 < self.initial_distance_min_m <= self.initial_distance_max_m:
            raise ConfigError("initial distance bounds must satisfy 0 < min <= max")
        if self.csi_clamp <= 0.0:
            raise ConfigError("csi_clamp must be positive")
        return self

    @property
    def users_per_oru(self) -> int:
        return self.num_users // self.num_orus

    @property
    def bandwidth_per_rbg_hz(self) -> float:
        if self.rbg_bandwidth_hz > 0.0:
            return self.rbg_bandwidth_hz
        return CARRIER_BANDWIDTH_HZ / self.rbgs_per_oru

    @property
    def max_arrival_rate_bps(self) -> float:
        return max(self.arrival_rate_set_bps)


@dataclass(frozen=True)
class SafetyConfig:
    """Confidence-gate settings (``safety.*`` config keys)."""

    enabled: bool = False
    beta: float = 0.05
    z_threshold: float = -2.0
    t_back: int = 3
    fallback: str = "equal"
    warmup: int = 20

    def validate(self) -> "SafetyConfig":
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("safety.beta must be in (0, 1]")
        if self.t_back < 1:
            raise ConfigError("safety.t_back must be >= 1")
        if self.fallback not in ("equal", "power", "rbg"):
            raise ConfigError("safety.fallback must be one of equal|power|rbg")
        if self.warmup < 0:
            raise ConfigError("safety.warmup must be >= 0")
        return self


@dataclass(frozen=True)
class RunConfig:
    network: NetworkConfig = NetworkConfig()
    scheduling_period: int = 10
    safety: SafetyConfig = SafetyConfig()

    def validate(self) -> "RunConfig":
        self.network.validate()
        self.safety.validate()
        if self.scheduling_period < 1:
            raise ConfigError("scheduling_period must be >= 1")
        if self.network.slots_per_episode % self.scheduling_period != 0:
            raise ConfigError("scheduling_period must divide slots_per_episode")
        return self


def desk_config() -> RunConfig:
    """Reduced configuration used for desk-scale experiments and acceptance runs.

    Simulates 6 RBGs of the reference carrier, so the per-RBG bandwidth stays
    at the reference 20 MHz / 12 value and capacity still binds at the high
    arrival rates.
    """
    return RunConfig(
        network=NetworkConfig(num_orus=2, num_users=8, rbgs_per_oru=6,
                              power_levels=6,
                              rbg_bandwidth_hz=CARRIER_BANDWIDTH_HZ / 12)
    ).validate()


def desk_training_hyper(component: str = "power"):
    """Training hyperparameters for the desk-scale protocol.

    The reference defaults (learning rate 1e-4, clip 1.0, full-return
    advantages) are sized for the full-scale training budget; at desk scale a
    3e-4 rate with a tighter 0.5 clip converges within the 20k-episode budget
    without the policy collapses the looser clip shows.  The RBG allocator
    additionally needs the bootstrapped one-step advantage: its per-head
    credit signal is far smaller than the episode-level return noise, and the
    full-return estimator leaves it flat at the desk budget.
    """
    from .a2c import A2CHyper

    if component == "rbg":
        return A2CHyper(learning_rate=3e-4, clip_norm=0.5, advantage_mode="one-step")
    if component in ("power", "scheduler"):
        return A2CHyper(learning_rate=3e-4, clip_norm=0.5)
    raise ConfigError(f"unknown training component {component!r}")


_TUPLE_FIELDS = {"arrival_rate_set_bps", "mean_speed_set_mps"}


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _coerce(key: str, raw: str, typ) -> object:
    try:
        if typ is bool:
            return _parse_bool(key, raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    raise ConfigError(f"{key}: unsupported field type {typ}")


def parse_config(text: str) -> RunConfig:
    net_fields = {f.name: f for f in dataclasses.fields(NetworkConfig)}
    safety_fields = {f.name: f for f in dataclasses.fields(SafetyConfig)}
    net_values: dict = {}
    safety_values: dict = {}
    scheduling_period = RunConfig().scheduling_period

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key == "scheduling_period":
            scheduling_period = int(_coerce(key, raw, int))
        elif key.startswith("safety."):
            name = key[len("safety."):]
            if name not in safety_fields:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            typ = safety_fields[name].type
            if name == "fallback":
                safety_values[name] = raw
            else:
                safety_values[name] = _coerce(key, raw, {"enabled": bool, "beta": float,
                                                         "z_threshold": float, "t_back": int,
                                                         "warmup": int}[name])
        elif key in net_fields:
            if key in _TUPLE_FIELDS:
                try:
                    net_values[key] = tuple(float(part) for part in raw.split(",") if part.strip())
                except ValueError as exc:
                    raise ConfigError(f"{key}: {exc}") from exc
            else:
                default = getattr(NetworkConfig(), key)
                net_values[key] = _coerce(key, raw, type(default))
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")

    cfg = RunConfig(
        network=NetworkConfig(**net_values),
        scheduling_period=scheduling_period,
        safety=SafetyConfig(**safety_values),
    )
    return cfg.validate()


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)


def render_config(cfg: RunConfig) -> str:
    """Canonical text rendering; parses back to an equal RunConfig."""
    lines = []
    for f in dataclasses.fields(NetworkConfig):
        value = getattr(cfg.network, f.name)
        if f.name in _TUPLE_FIELDS:
            rendered = ",".join(repr(v) for v in value)
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        else:
            rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name}={rendered}")
    lines.append(f"scheduling_period={cfg.scheduling_period}")
    for f in dataclasses.fields(SafetyConfig):
        value = getattr(cfg.safety, f.name)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"safety.{f.name}={rendered}")
    return "\n".join(lines) + "\n"


def config_sha256(cfg: RunConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode("utf-8")).hexdigest()
