"""Shared domain model: sensor samples, alerts, actuator commands, configuration.

All timestamps are integer milliseconds on a virtual clock, so every run of the
same input is reproducible without wall-clock sleeps.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field, fields
from enum import Enum, IntEnum
from pathlib import Path

SMS_MAX_CHARS = 160
PHONE_PATTERN = re.compile(r"^\+?[0-9]{7,15}$")

# MiCS-5524 detection ranges: ethanol is only readable between 10 and 500 ppm,
# LPG-class gases only from about 1000 ppm upward.
ETHANOL_SENSOR_MAX_PPM = 500.0


class ContractViolation(ValueError):
    """An argument or state violated a documented precondition or invariant."""


class ValidationError(ValueError):
    """Configuration rejected; carries every violation, not just the first."""

    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = violations
        super().__init__("; ".join(f"{name}: {reason}" for name, reason in violations))


class ConfigError(ValueError):
    """A config file could not be parsed."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class VirtualClock:
    """Monotonic millisecond clock advanced explicitly by the harness."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance(self, ms: int) -> None:
        if ms < 0:
            raise ContractViolation("clock cannot move backwards")
        self._now += ms

    def advance_to(self, t_ms: int) -> None:
        # clamped, not strict: SMS drain may have pushed the clock past the
        # next event timestamp while waiting out modem timeouts
        self._now = max(self._now, t_ms)


class AlertKind(str, Enum):
    COLLISION = "collision"
    VEHICLE_PROXIMITY = "vehicle_proximity"
    ROAD_HAZARD = "road_hazard"
    ALCOHOL_LOCKOUT = "alcohol_lockout"
    GAS_LEAK = "gas_leak"
    OVERSPEED = "overspeed"
    CRASH = "crash"
    OVERTAKE_UNSAFE = "overtake_unsafe"
    THEFT = "theft"
    BEACON = "beacon"
    UNDERVOLTAGE = "undervoltage"


class Severity(IntEnum):
    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @property
    def label(self) -> str:
        return self.name.lower()


_SEVERITY_TABLE = {
    AlertKind.CRASH: Severity.HIGH,
    AlertKind.COLLISION: Severity.HIGH,
    AlertKind.THEFT: Severity.HIGH,
    AlertKind.ALCOHOL_LOCKOUT: Severity.HIGH,
    AlertKind.GAS_LEAK: Severity.HIGH,
    AlertKind.OVERSPEED: Severity.MEDIUM,
    AlertKind.VEHICLE_PROXIMITY: Severity.MEDIUM,
    AlertKind.OVERTAKE_UNSAFE: Severity.MEDIUM,
    AlertKind.ROAD_HAZARD: Severity.LOW,
    AlertKind.BEACON: Severity.LOW,
    AlertKind.UNDERVOLTAGE: Severity.LOW,
}


def severity_of(kind: AlertKind) -> Severity:
    """Fixed kind-to-severity mapping; see README for the rationale."""
    return _SEVERITY_TABLE[kind]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ContractViolation(msg)


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        _require(_finite(self.lat_deg) and -90.0 <= self.lat_deg <= 90.0,
                 f"lat_deg out of range: {self.lat_deg!r}")
        _require(_finite(self.lon_deg) and -180.0 <= self.lon_deg <= 180.0,
                 f"lon_deg out of range: {self.lon_deg!r}")


@dataclass(frozen=True)
class LidarRange:
    range_m: float

    def __post_init__(self):
        _require(_finite(self.range_m) and self.range_m >= 0.0,
                 f"range_m must be >= 0: {self.range_m!r}")


@dataclass(frozen=True)
class MagField:
    """Ambient magnetic field magnitude in microtesla."""

    b_ut: float

    def __post_init__(self):
        _require(_finite(self.b_ut) and self.b_ut >= 0.0, f"b_ut must be >= 0: {self.b_ut!r}")


@dataclass(frozen=True)
class PirMotion:
    detected: bool

    def __post_init__(self):
        _require(isinstance(self.detected, bool), "detected must be a bool")


@dataclass(frozen=True)
class GasReading:
    ethanol_ppm: float
    co_ppm: float
    lpg_ppm: float

    def __post_init__(self):
        for name in ("ethanol_ppm", "co_ppm", "lpg_ppm"):
            v = getattr(self, name)
            _require(_finite(v) and v >= 0.0, f"{name} must be >= 0: {v!r}")


@dataclass(frozen=True)
class Tilt:
    angle_deg: float

    def __post_init__(self):
        _require(_finite(self.angle_deg) and 0.0 <= self.angle_deg <= 180.0,
                 f"angle_deg out of range: {self.angle_deg!r}")


@dataclass(frozen=True)
class GpsFix:
    point: GeoPoint
    speed_kph: float
    valid: bool

    def __post_init__(self):
        _require(isinstance(self.point, GeoPoint), "point must be a GeoPoint")
        _require(_finite(self.speed_kph) and self.speed_kph >= 0.0,
                 f"speed_kph must be >= 0: {self.speed_kph!r}")
        _require(isinstance(self.valid, bool), "valid must be a bool")


@dataclass(frozen=True)
class Ignition:
    on: bool

    def __post_init__(self):
        _require(isinstance(self.on, bool), "on must be a bool")


@dataclass(frozen=True)
class Auth:
    authorized: bool

    def __post_init__(self):
        _require(isinstance(self.authorized, bool), "authorized must be a bool")


@dataclass(frozen=True)
class SupplyVoltage:
    volts: float

    def __post_init__(self):
        _require(_finite(self.volts) and self.volts >= 0.0, f"volts must be >= 0: {self.volts!r}")


Payload = (LidarRange | MagField | PirMotion | GasReading | Tilt | GpsFix
           | Ignition | Auth | SupplyVoltage)


@dataclass(frozen=True)
class SensorEvent:
    t_ms: int
    payload: Payload

    def __post_init__(self):
        _require(isinstance(self.t_ms, int) and not isinstance(self.t_ms, bool)
                 and self.t_ms >= 0, f"t_ms must be a non-negative int: {self.t_ms!r}")


@dataclass(frozen=True)
class Alert:
    t_ms: int
    kind: AlertKind
    severity: Severity
    message: str

    def __post_init__(self):
        _require(isinstance(self.t_ms, int) and self.t_ms >= 0, "t_ms must be >= 0")


def truncate_sms(body: str) -> str:
    """Clip oversize message bodies to the 160-char SMS budget, marking the cut."""
    if len(body) <= SMS_MAX_CHARS:
        return body
    return body[: SMS_MAX_CHARS - 3] + "..."


@dataclass(frozen=True)
class Buzzer:
    on: bool


@dataclass(frozen=True)
class IgnitionInhibit:
    on: bool


@dataclass(frozen=True)
class SolenoidLock:
    engaged: bool


@dataclass(frozen=True)
class SmsSend:
    to: str
    body: str

    def __post_init__(self):
        _require(PHONE_PATTERN.match(self.to) is not None, f"bad phone number: {self.to!r}")
        # normalizing here, rather than validating, keeps every construction
        # path inside the length budget
        object.__setattr__(self, "body", truncate_sms(self.body))


Action = Buzzer | IgnitionInhibit | SolenoidLock | SmsSend


@dataclass(frozen=True)
class ActuatorCommand:
    t_ms: int
    action: Action

    def __post_init__(self):
        _require(isinstance(self.t_ms, int) and self.t_ms >= 0, "t_ms must be >= 0")


# --- sensor event serialization -------------------------------------------

_SENSOR_TAGS: dict[str, type] = {
    "lidar": LidarRange,
    "mag": MagField,
    "pir": PirMotion,
    "gas": GasReading,
    "tilt": Tilt,
    "gps": GpsFix,
    "ignition": Ignition,
    "auth": Auth,
    "supply": SupplyVoltage,
}
_TAG_OF_TYPE = {cls: tag for tag, cls in _SENSOR_TAGS.items()}


def event_to_record(ev: SensorEvent) -> dict:
    """Flatten an event to the line-record shape used by scenario files."""
    rec: dict = {"t_ms": ev.t_ms, "sensor": _TAG_OF_TYPE[type(ev.payload)]}
    if isinstance(ev.payload, GpsFix):
        rec["lat_deg"] = ev.payload.point.lat_deg
        rec["lon_deg"] = ev.payload.point.lon_deg
        rec["speed_kph"] = ev.payload.speed_kph
        rec["valid"] = ev.payload.valid
    else:
        for f in fields(ev.payload):
            rec[f.name] = getattr(ev.payload, f.name)
    return rec


def event_from_record(rec: dict) -> SensorEvent:
    """Inverse of event_to_record; raises ContractViolation on bad shapes."""
    _require(isinstance(rec, dict), "record must be an object")
    extra = dict(rec)
    t_ms = extra.pop("t_ms", None)
    tag = extra.pop("sensor", None)
    _require(tag in _SENSOR_TAGS, f"unknown sensor tag: {tag!r}")
    cls = _SENSOR_TAGS[tag]
    if cls is GpsFix:
        wanted = ["lat_deg", "lon_deg", "speed_kph", "valid"]
    else:
        wanted = [f.name for f in fields(cls)]
    missing = [name for name in wanted if name not in extra]
    _require(not missing, f"missing fields: {', '.join(missing)}")
    unexpected = sorted(set(extra) - set(wanted))
    _require(not unexpected, f"unexpected fields: {', '.join(unexpected)}")
    if cls is GpsFix:
        payload: Payload = GpsFix(point=GeoPoint(extra["lat_deg"], extra["lon_deg"]),
                                  speed_kph=extra["speed_kph"], valid=extra["valid"])
    else:
        payload = cls(**extra)
    return SensorEvent(t_ms=t_ms, payload=payload)


# --- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class ControllerConfig:
    ttc_warn_s: float = 2.0
    mag_deviation_ut: float = 5.0
    mag_persist_samples: int = 3
    mag_calib_samples: int = 20
    pir_speed_gate_kph: float = 10.0
    ethanol_lockout_ppm: float = 150.0
    lpg_leak_ppm: float = 1000.0
    speed_limit_kph: float = 80.0
    speed_hysteresis_kph: float = 5.0
    crash_tilt_deg: float = 60.0
    crash_hold_ms: int = 3000
    crash_speed_max_kph: float = 5.0
    geofence_radius_m: float = 15.0
    beacon_period_ms: int = 3_600_000
    preride_window_ms: int = 2000
    sms_cooldown_ms: int = 30_000
    undervoltage_v: float = 20.0
    owner_number: str = "+639171234567"
    police_number: str = "+639171117117"


DEFAULT_CONFIG = ControllerConfig()

_INT_FIELDS = {"mag_persist_samples", "mag_calib_samples", "crash_hold_ms",
               "beacon_period_ms", "preride_window_ms", "sms_cooldown_ms"}
_PHONE_FIELDS = {"owner_number", "police_number"}
_FLOAT_FIELDS = {f.name for f in fields(ControllerConfig)} - _INT_FIELDS - _PHONE_FIELDS


def validate_config(cfg: ControllerConfig) -> list[tuple[str, str]]:
    """Return every violated constraint as (field, reason); empty means valid."""
    bad: list[tuple[str, str]] = []
    for name in sorted(_FLOAT_FIELDS):
        v = getattr(cfg, name)
        if not _finite(v):
            bad.append((name, "must be a finite number"))
        elif v <= 0:
            bad.append((name, "must be > 0"))
    for name in sorted(_INT_FIELDS):
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool):
            bad.append((name, "must be an integer"))
        elif name == "beacon_period_ms":
            if v < 60_000:
                bad.append((name, "must be >= 60000"))
        elif v <= 0:
            bad.append((name, "must be > 0"))
    if _finite(cfg.ethanol_lockout_ppm) and cfg.ethanol_lockout_ppm > ETHANOL_SENSOR_MAX_PPM:
        bad.append(("ethanol_lockout_ppm", "exceeds sensor range 500 ppm"))
    if _finite(cfg.crash_tilt_deg) and cfg.crash_tilt_deg > 180.0:
        bad.append(("crash_tilt_deg", "must be <= 180"))
    for name in sorted(_PHONE_FIELDS):
        v = getattr(cfg, name)
        if not isinstance(v, str) or PHONE_PATTERN.match(v) is None:
            bad.append((name, "must match +?[0-9]{7,15}"))
    return bad


def require_valid_config(cfg: ControllerConfig) -> ControllerConfig:
    violations = validate_config(cfg)
    if violations:
        raise ValidationError(violations)
    return cfg


def apply_overrides(cfg: ControllerConfig, overrides: dict) -> ControllerConfig:
    """Overlay a key-value mapping onto cfg; unknown keys are a hard error."""
    known = {f.name for f in fields(ControllerConfig)}
    coerced: dict = {}
    for key, value in overrides.items():
        if key not in known:
            raise ValidationError([(key, "unknown config key")])
        if key in _PHONE_FIELDS:
            if not isinstance(value, str):
                raise ValidationError([(key, "must be a string")])
            coerced[key] = value
        elif key in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError([(key, "must be an integer")])
            coerced[key] = value
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError([(key, "must be a number")])
            coerced[key] = float(value)
    return dataclasses.replace(cfg, **coerced)


def parse_config_text(text: str) -> dict:
    """Parse flat key=value lines ('#' starts a comment) into an override map."""
    overrides: dict = {}
    known = {f.name for f in fields(ControllerConfig)}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(line_no, f"expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ConfigError(line_no, f"unknown key {key!r}")
        if key in _PHONE_FIELDS:
            overrides[key] = value
        elif key in _INT_FIELDS:
            try:
                overrides[key] = int(value)
            except ValueError:
                raise ConfigError(line_no, f"{key} must be an integer, got {value!r}") from None
        else:
            try:
                overrides[key] = float(value)
            except ValueError:
                raise ConfigError(line_no, f"{key} must be a number, got {value!r}") from None
    return overrides


def load_config_file(path: str | Path) -> ControllerConfig:
    """Read a key=value config file and return defaults overlaid with it."""
    text = Path(path).read_text(encoding="utf-8")
    return apply_overrides(DEFAULT_CONFIG, parse_config_text(text))
