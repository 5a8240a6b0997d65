"""Scenario configuration: a versioned YAML schema with strict validation.

Unknown keys are errors (typos must not silently become defaults), and every
validation failure names the offending field path.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .fec import FIELD_SIZE

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass
class GridConfig:
    rows: int = 2
    cols: int = 3
    spacing_m: float = 500.0


@dataclass
class RadioConfig:
    p_base: float = 0.05
    r_reliable_m: float = 300.0
    d_max_m: float = 700.0
    channel_capacity_bps: float = 10_000_000.0
    channels: list = field(default_factory=lambda: [0, 1])
    downlink_latency_ms: float = 1.0
    tx_queue_limit_ms: float = 100.0


@dataclass
class UplinkConfig:
    latency_ms: float = 5.0
    loss: float = 0.0


@dataclass
class FecConfig:
    k: int = 8
    r: int = 2


@dataclass
class VideoConfig:
    mtu_bytes: int = 1400
    fps: int = 30
    bitrate_min_bps: float = 1_000_000.0
    bitrate_max_bps: float = 10_000_000.0
    bitrate_initial_bps: float = 4_000_000.0
    beta: float = 0.85
    alpha: float = 0.3
    ack_timeout_ms: float = 500.0


@dataclass
class PlayoutConfig:
    budget_ms: float = 200.0
    uplink_margin_ms: float = 20.0


@dataclass
class FlightConfig:
    max_speed_mps: float = 10.0
    max_yaw_rate_dps: float = 90.0
    max_gimbal_rate_dps: float = 120.0
    altitude_m: float = 50.0
    home: list | None = None  # [x, y, z]; default is the grid centre at altitude_m


@dataclass
class ViewConfig:
    captured_fov_h_deg: float = 110.0
    captured_fov_v_deg: float = 90.0
    display_fov_h_deg: float = 90.0
    display_fov_v_deg: float = 70.0


@dataclass
class ControlConfig:
    position_gain: float = 10.0
    rate_hz: int = 50
    head_rate_hz: int = 30
    snapshot_hz: int = 20
    tracking_half_m: float = 2.3


@dataclass
class Scenario:
    version: int = SCHEMA_VERSION
    seed: int = 0
    duration_s: float = 30.0
    grid: GridConfig = field(default_factory=GridConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    uplink: UplinkConfig = field(default_factory=UplinkConfig)
    fec: FecConfig = field(default_factory=FecConfig)
    video: VideoConfig = field(default_factory=VideoConfig)
    playout: PlayoutConfig = field(default_factory=PlayoutConfig)
    flight: FlightConfig = field(default_factory=FlightConfig)
    view: ViewConfig = field(default_factory=ViewConfig)
    control: ControlConfig = field(default_factory=ControlConfig)

    def receiver_positions(self) -> dict[int, tuple[float, float]]:
        s = self.grid.spacing_m
        return {
            row * self.grid.cols + col: (col * s, row * s)
            for row in range(self.grid.rows)
            for col in range(self.grid.cols)
        }

    def home_position(self) -> tuple[float, float, float]:
        if self.flight.home is not None:
            x, y, z = self.flight.home
            return (float(x), float(y), float(z))
        s = self.grid.spacing_m
        return (
            (self.grid.cols - 1) * s / 2.0,
            (self.grid.rows - 1) * s / 2.0,
            self.flight.altitude_m,
        )

    @property
    def duration_us(self) -> int:
        return round(self.duration_s * 1_000_000)

    @property
    def overdue_budget_us(self) -> int:
        return round((self.playout.budget_ms - self.playout.uplink_margin_ms) * 1000)


_SECTIONS = {
    "grid": GridConfig,
    "radio": RadioConfig,
    "uplink": UplinkConfig,
    "fec": FecConfig,
    "video": VideoConfig,
    "playout": PlayoutConfig,
    "flight": FlightConfig,
    "view": ViewConfig,
    "control": ControlConfig,
}

_NUMERIC = (int, float)


def _coerce(field: dataclasses.Field, value, path: str):
    """Type-check a scalar against its default; float fields also accept the
    exponent spellings PyYAML leaves as strings (e.g. ``4.0e6``)."""
    default = field.default
    if default is dataclasses.MISSING or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ScenarioError(f"{path}: must be a boolean")
        return value
    if isinstance(default, float):
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ScenarioError(f"{path}: must be a number") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"{path}: must be a number")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(f"{path}: must be an integer")
        return value
    return value


def _build_section(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ScenarioError(f"{path}.{key}: unknown key")
        kwargs[key] = _coerce(names[key], value, f"{path}.{key}")
    return cls(**kwargs)


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario: expected a mapping at the top level")
    top = dict(data)
    kwargs = {}
    scenario_fields = {f.name: f for f in dataclasses.fields(Scenario)}
    for name, cls in _SECTIONS.items():
        if name in top:
            kwargs[name] = _build_section(cls, top.pop(name), name)
    for scalar in ("version", "seed", "duration_s"):
        if scalar in top:
            kwargs[scalar] = _coerce(scenario_fields[scalar], top.pop(scalar), scalar)
    if top:
        raise ScenarioError(f"{sorted(top)[0]}: unknown key")
    scenario = Scenario(**kwargs)
    validate_scenario(scenario)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario file {path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    return scenario_from_dict(data)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ScenarioError(message)


def validate_scenario(sc: Scenario) -> None:
    _require(sc.version == SCHEMA_VERSION, f"version: unsupported schema version {sc.version}")
    _require(isinstance(sc.seed, int), "seed: must be an integer")
    _require(isinstance(sc.duration_s, _NUMERIC) and sc.duration_s > 0, "duration_s: must be > 0")

    g = sc.grid
    _require(isinstance(g.rows, int) and g.rows >= 1, "grid.rows: must be an integer >= 1")
    _require(isinstance(g.cols, int) and g.cols >= 1, "grid.cols: must be an integer >= 1")
    _require(
        isinstance(g.spacing_m, _NUMERIC) and g.spacing_m > 0,
        "grid.spacing_m: must be > 0",
    )

    r = sc.radio
    _require(0.0 <= r.p_base <= 1.0, "radio.p_base: must be within [0, 1]")
    _require(
        0 < r.r_reliable_m < r.d_max_m,
        "radio.r_reliable_m: must satisfy 0 < r_reliable_m < d_max_m",
    )
    _require(r.channel_capacity_bps > 0, "radio.channel_capacity_bps: must be > 0")
    _require(
        isinstance(r.channels, list) and len(r.channels) > 0,
        "radio.channels: must be a non-empty list",
    )
    _require(
        all(isinstance(c, int) for c in r.channels), "radio.channels: entries must be integers"
    )
    _require(len(set(r.channels)) == len(r.channels), "radio.channels: entries must be unique")
    _require(r.downlink_latency_ms >= 0, "radio.downlink_latency_ms: must be >= 0")
    _require(r.tx_queue_limit_ms >= 0, "radio.tx_queue_limit_ms: must be >= 0")

    u = sc.uplink
    _require(u.latency_ms >= 0, "uplink.latency_ms: must be >= 0")
    _require(0.0 <= u.loss <= 1.0, "uplink.loss: must be within [0, 1]")

    f = sc.fec
    _require(isinstance(f.k, int) and f.k >= 1, "fec.k: must be an integer >= 1")
    _require(isinstance(f.r, int) and f.r >= 0, "fec.r: must be an integer >= 0")
    _require(f.k + f.r <= FIELD_SIZE, f"fec.k: k + r must not exceed {FIELD_SIZE}")

    v = sc.video
    _require(isinstance(v.mtu_bytes, int) and v.mtu_bytes > 0, "video.mtu_bytes: must be > 0")
    _require(isinstance(v.fps, int) and v.fps > 0, "video.fps: must be a positive integer")
    _require(v.bitrate_min_bps > 0, "video.bitrate_min_bps: must be > 0")
    _require(
        v.bitrate_min_bps <= v.bitrate_max_bps,
        "video.bitrate_min_bps: must not exceed bitrate_max_bps",
    )
    _require(
        v.bitrate_min_bps <= v.bitrate_initial_bps <= v.bitrate_max_bps,
        "video.bitrate_initial_bps: must lie within [bitrate_min_bps, bitrate_max_bps]",
    )
    _require(0 < v.beta <= 1.0, "video.beta: must be within (0, 1]")
    _require(0 < v.alpha <= 1.0, "video.alpha: must be within (0, 1]")
    _require(v.ack_timeout_ms > 0, "video.ack_timeout_ms: must be > 0")

    p = sc.playout
    _require(p.uplink_margin_ms >= 0, "playout.uplink_margin_ms: must be >= 0")
    _require(
        p.budget_ms > p.uplink_margin_ms,
        "playout.budget_ms: must exceed uplink_margin_ms",
    )

    fl = sc.flight
    _require(fl.max_speed_mps >= 0, "flight.max_speed_mps: must be >= 0")
    _require(fl.max_yaw_rate_dps >= 0, "flight.max_yaw_rate_dps: must be >= 0")
    _require(fl.max_gimbal_rate_dps >= 0, "flight.max_gimbal_rate_dps: must be >= 0")
    if fl.home is not None:
        _require(
            isinstance(fl.home, list)
            and len(fl.home) == 3
            and all(isinstance(c, _NUMERIC) for c in fl.home),
            "flight.home: must be [x, y, z]",
        )

    w = sc.view
    _require(
        w.display_fov_h_deg <= w.captured_fov_h_deg,
        "view.display_fov_h_deg: must not exceed captured_fov_h_deg",
    )
    _require(
        w.display_fov_v_deg <= w.captured_fov_v_deg,
        "view.display_fov_v_deg: must not exceed captured_fov_v_deg",
    )

    c = sc.control
    _require(isinstance(c.rate_hz, int) and c.rate_hz >= 1, "control.rate_hz: must be >= 1")
    _require(
        isinstance(c.head_rate_hz, int) and c.head_rate_hz >= 1,
        "control.head_rate_hz: must be >= 1",
    )
    _require(
        isinstance(c.snapshot_hz, int) and c.snapshot_hz >= 1,
        "control.snapshot_hz: must be >= 1",
    )
    _require(c.tracking_half_m > 0, "control.tracking_half_m: must be > 0")


def scenario_to_dict(sc: Scenario) -> dict:
    return dataclasses.asdict(sc)
