"""
Scenario definition: the sectioned scenario file, piecewise-linear time profiles, standard steering manoeuvres,
the ISO 3888-1 double-lane-change corridor and waypoint files.

Scenario files are strict: unknown sections and keys are errors that name the offending line.
"""
import configparser
import logging
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.lcv_auto.comms import DEFAULT_CAN_MAPPING_FILE, CanMapping, ChannelParams
from src.lcv_auto.exceptions import ConfigurationError, LcvError, ScenarioError
from src.lcv_auto.guidance import LongitudinalGains, ObstacleAvoidanceConfig, PathFollowerGains
from src.lcv_auto.parameters import DATA_DIR, NOMINAL_VEHICLE_FILE, VehicleSetup, load_vehicle_file
from src.lcv_auto.projection import LocalTangentPlane
from src.lcv_auto.sensing import NoiseModelParams, WorldObject

logger = logging.getLogger(__name__)

ISO3888_1 = "iso3888-1"
DEFAULT_CORRIDOR_FILE = DATA_DIR / "tracks" / "iso3888_1.csv"


class ScenarioKind(str, Enum):
    DOUBLE_LANE_CHANGE = "double-lane-change"
    CACC_FOLLOW = "cacc-follow"
    WAYPOINT_FOLLOW = "waypoint-follow"
    OPEN_LOOP_REPLAY = "open-loop-replay"


class LongitudinalMode(str, Enum):
    CC = "cc"
    ACC = "acc"
    CACC = "cacc"


# ---------------------------------------------------------------------------------------------------------- #
# Profiles
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class Profile:
    """
    Piecewise-linear time series, held at its first and last value outside the breakpoints.
    """

    times: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

        if len(self.times) == 0 or len(self.times) != len(self.values):
            raise ConfigurationError("A profile needs equally many (>= 1) times and values.")

        if not all(math.isfinite(v) for v in self.times + self.values):
            raise ConfigurationError("Profile breakpoints must be finite.")

        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigurationError("Profile times must be strictly increasing.")

    @classmethod
    def constant(cls, value: float):
        return cls((0.0,), (value,))

    @classmethod
    def parse(cls, text: str):
        """
        Parse ``t:value, t:value, ...``.
        """
        times, values = [], []
        for item in text.replace(";", ",").split(","):
            if not item.strip():
                continue
            t, sep, v = item.partition(":")
            if not sep:
                raise ConfigurationError(f"Profile breakpoint {item.strip()!r} is not of the form t:value.")
            try:
                times.append(float(t))
                values.append(float(v))
            except ValueError:
                raise ConfigurationError(f"Profile breakpoint {item.strip()!r} is not numeric.") from None

        return cls(tuple(times), tuple(values))

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def slope(self, t: float) -> float:
        """
        Slope of the segment containing ``t``; zero outside the breakpoints. At a breakpoint the following segment
        counts.
        """
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0 or i >= len(self.times) - 1:
            return 0.0

        return (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])

    @property
    def end(self) -> float:
        return self.times[-1]


def steering_pattern(kind: str, amplitude: float, start: float = 1.0, rate: float = 500.0,
                     frequency: float = 0.7, dwell: float = 0.5, samples_per_period: int = 100) -> Profile:
    """
    Steering-wheel angle profile of a standard open-loop manoeuvre.

    - ``constant``: reach ``amplitude`` at ``rate`` from ``start`` on and hold it (constant-radius turn)
    - ``ramp``: like ``constant`` with the slow ``rate`` of a ramp-steer test
    - ``sine-with-dwell``: one sine period of ``frequency`` that pauses at its second peak for ``dwell`` seconds

    :param amplitude: peak steering-wheel angle (deg); its sign gives the initial direction
    :param start: manoeuvre start (s)
    :param rate: steering-wheel rate of the constant and ramp patterns (deg/s)
    :return: Profile of steering-wheel angle in degrees
    """
    if kind in ("constant", "ramp"):
        if not rate > 0:
            raise ConfigurationError("Steering rate must be positive.")
        if amplitude == 0.0:
            return Profile.constant(0.0)
        return Profile((0.0, start, start + abs(amplitude) / rate), (0.0, 0.0, amplitude))

    if kind == "sine-with-dwell":
        if not (frequency > 0 and dwell >= 0):
            raise ConfigurationError("Sine-with-dwell needs a positive frequency and a non-negative dwell.")

        period = 1.0 / frequency
        n = samples_per_period

        first = np.linspace(0.0, 0.75 * period, int(0.75 * n) + 1)
        last = np.linspace(0.75 * period, period, int(0.25 * n) + 1)

        times = [0.0] + list(start + first)
        values = [0.0] + list(amplitude * np.sin(2.0 * np.pi * frequency * first))
        if dwell > 0:
            times.append(start + 0.75 * period + dwell)
            values.append(-amplitude)
        times += list(start + dwell + last[1:])
        values += list(amplitude * np.sin(2.0 * np.pi * frequency * last[1:]))

        values[-1] = 0.0
        if start == 0.0:
            times, values = times[1:], values[1:]

        return Profile(tuple(times), tuple(values))

    raise ConfigurationError(f"Unknown steering pattern {kind!r}.")


# ---------------------------------------------------------------------------------------------------------- #
# Double lane change corridor
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class DlcCorridor:
    """
    Lateral bounds that are constant over each longitudinal section. Sections are contiguous and adjacent sections
    overlap laterally, so the corridor is connected.

    :param start: section start stations (m)
    :param end: section end stations (m)
    :param lower: right-hand bound per section (m)
    :param upper: left-hand bound per section (m)
    """

    start: np.ndarray
    end: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        for name in ("start", "end", "lower", "upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

        self.validate()

    def validate(self):
        n = len(self.start)
        if n == 0 or not all(len(a) == n for a in (self.end, self.lower, self.upper)):
            raise ConfigurationError("Corridor sections need a start, end, lower and upper value each.")

        if not np.all(np.isfinite(np.concatenate([self.start, self.end, self.lower, self.upper]))):
            raise ConfigurationError("Corridor bounds must be finite.")

        if np.any(self.end <= self.start) or np.any(self.upper <= self.lower):
            raise ConfigurationError("Corridor sections must have positive length and width.")

        if np.any(self.start[1:] != self.end[:-1]):
            raise ConfigurationError("Corridor sections must be contiguous.")

        if np.any(np.maximum(self.lower[1:], self.lower[:-1]) >= np.minimum(self.upper[1:], self.upper[:-1])):
            raise ConfigurationError("Adjacent corridor sections do not overlap; the corridor is not connected.")

    @classmethod
    def iso3888_1(cls, vehicle_width: float, offset: float = 3.5):
        """
        ISO 3888-1 cone geometry for a vehicle of the given width. Entry and exit lanes are centred on y = 0;
        the right-hand edge of the offset lane lies ``offset`` metres left of the entry lane's right-hand edge.
        Sections between cone lanes take the union of their neighbours.
        """
        if not vehicle_width > 0:
            raise ConfigurationError("Vehicle width must be positive.")

        entry = 1.1 * vehicle_width + 0.25
        middle = vehicle_width + 1.0
        exit_ = min(1.3 * vehicle_width + 0.25, 3.0)

        entry_lane = (-entry / 2, entry / 2)
        offset_lane = (-entry / 2 + offset, -entry / 2 + offset + middle)
        exit_lane = (-exit_ / 2, exit_ / 2)

        lanes = [entry_lane, (min(entry_lane[0], offset_lane[0]), max(entry_lane[1], offset_lane[1])), offset_lane,
                 (min(exit_lane[0], offset_lane[0]), max(exit_lane[1], offset_lane[1])), exit_lane]
        stations = [0.0, 15.0, 45.0, 70.0, 95.0, 110.0]

        return cls(start=stations[:-1], end=stations[1:], lower=[lo for lo, _ in lanes], upper=[hi for _, hi in lanes])

    @classmethod
    def from_file(cls, path):
        """
        Read a ``start,end,lower,upper`` table.
        """
        try:
            frame = pd.read_csv(path, comment="#", skipinitialspace=True)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ConfigurationError(f"Cannot read corridor file {path}: {e}") from e

        columns = ["start", "end", "lower", "upper"]
        if list(frame.columns) != columns:
            raise ConfigurationError(f"Corridor file {path} must have the columns {','.join(columns)}.")

        try:
            values = frame.astype(float)
        except ValueError as e:
            raise ConfigurationError(f"Corridor file {path} is not numeric: {e}") from e

        return cls(*(values[c].to_numpy() for c in columns))

    @property
    def station_range(self) -> Tuple[float, float]:
        return float(self.start[0]), float(self.end[-1])

    def bounds(self, stations):
        """
        Lateral bounds at the given stations; NaN outside the corridor.

        :return: (lower, upper) arrays shaped like ``stations``
        """
        stations = np.asarray(stations, dtype=float)
        index = np.searchsorted(self.end, stations, side="left")
        inside = (stations >= self.start[0]) & (stations <= self.end[-1])
        index = np.clip(index, 0, len(self.end) - 1)

        lower = np.where(inside, self.lower[index], np.nan)
        upper = np.where(inside, self.upper[index], np.nan)
        return lower, upper


# ---------------------------------------------------------------------------------------------------------- #
# Waypoints
# ---------------------------------------------------------------------------------------------------------- #
def load_waypoints(path, fmt: str = "local") -> Tuple[np.ndarray, Optional[LocalTangentPlane]]:
    """
    Read a waypoint file: one waypoint per line, two numeric fields separated by commas, semicolons or whitespace,
    ``#`` comments.

    :param fmt: ``local`` for x/y metres, ``latlon`` for latitude/longitude degrees projected about the first waypoint
    :return: (N x 2 local points, tangent plane or None)
    """
    if fmt not in ("local", "latlon"):
        raise ConfigurationError(f"Unknown waypoint format {fmt!r}; use 'local' or 'latlon'.")

    try:
        frame = pd.read_csv(path, sep=r"[,;\s]+", engine="python", header=None, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigurationError(f"Cannot read waypoint file {path}: {e}") from e

    frame = frame.dropna(axis=1, how="all")
    if frame.shape[1] != 2:
        raise ConfigurationError(f"Waypoint file {path} must have exactly two fields per line.")

    try:
        points = frame.to_numpy(dtype=float)
    except ValueError as e:
        raise ConfigurationError(f"Waypoint file {path} is not numeric: {e}") from e

    if len(points) < 2:
        raise ConfigurationError(f"Waypoint file {path} holds fewer than two waypoints.")

    if fmt == "local":
        return points, None

    try:
        plane = LocalTangentPlane(points[0, 0], points[0, 1])
    except LcvError as e:
        raise ConfigurationError(f"Waypoint file {path}: {e}") from e

    x, y = plane.to_local(points[:, 0], points[:, 1])
    return np.column_stack([x, y]), plane


# ---------------------------------------------------------------------------------------------------------- #
# Scenario
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class EgoConfig:
    setup: VehicleSetup
    speed: float = 0.0
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    driver_pedal: Optional[Profile] = None


@dataclass(frozen=True, eq=False)
class LeadConfig:
    """
    :param gap: initial bumper-to-bumper distance (m); None for the desired spacing at the initial speed
    """

    setup: VehicleSetup
    speed_profile: Profile
    gap: Optional[float] = None
    sender_id: int = 1


@dataclass(frozen=True, eq=False)
class LongitudinalConfig:
    mode: LongitudinalMode
    speed_profile: Profile
    gains: LongitudinalGains = LongitudinalGains()


@dataclass(frozen=True, eq=False)
class PathConfig:
    points: np.ndarray
    source: Optional[Path] = None
    plane: Optional[LocalTangentPlane] = None
    switch_radius: float = 3.0
    gains: PathFollowerGains = PathFollowerGains()
    stop_on_complete: bool = True


@dataclass(frozen=True)
class OutputOptions:
    csv: bool = True
    metrics: bool = True
    plots: bool = True


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    A fully validated scenario. Vehicle setups, waypoints, corridor and CAN mapping are already loaded.
    """

    kind: ScenarioKind
    name: str
    duration: float
    seed: int
    ego: EgoConfig
    longitudinal: LongitudinalConfig
    dt_plant: float = 0.001
    dt_control: float = 0.01
    lead: Optional[LeadConfig] = None
    path: Optional[PathConfig] = None
    obstacles: Tuple[WorldObject, ...] = ()
    avoidance: ObstacleAvoidanceConfig = ObstacleAvoidanceConfig()
    noise: NoiseModelParams = NoiseModelParams()
    channel: ChannelParams = ChannelParams()
    can_mapping: CanMapping = field(default_factory=CanMapping.default)
    grade: float = 0.0
    replay: Optional[Profile] = None
    corridor: Optional[DlcCorridor] = None
    plane: LocalTangentPlane = LocalTangentPlane(0.0, 0.0)
    output: OutputOptions = OutputOptions()
    source: Optional[Path] = None

    def __post_init__(self):
        self.validate()

    @property
    def steps_per_control(self) -> int:
        return int(round(self.dt_control / self.dt_plant))

    @property
    def control_steps(self) -> int:
        return int(round(self.duration / self.dt_control))

    def validate(self):
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ConfigurationError(f"Duration must be positive, got {self.duration}.")

        if not 0 < self.dt_plant <= 0.01:
            raise ConfigurationError(f"Plant step {self.dt_plant} s outside (0, 0.01].")

        ratio = self.dt_control / self.dt_plant
        if not (self.dt_control >= self.dt_plant and abs(ratio - round(ratio)) < 1e-9):
            raise ConfigurationError("The control period must be a whole number of plant steps.")

        if self.control_steps < 1:
            raise ConfigurationError("Duration is shorter than one control period.")

        if self.seed < 0:
            raise ConfigurationError("Seed must be non-negative.")

        if self.kind is ScenarioKind.CACC_FOLLOW and self.lead is None:
            raise ConfigurationError("A cacc-follow scenario needs a [lead] section.")

        if self.lead is not None and self.kind is not ScenarioKind.CACC_FOLLOW:
            raise ConfigurationError("Only cacc-follow scenarios simulate a lead vehicle.")

        if self.longitudinal.mode is not LongitudinalMode.CC and self.lead is None:
            raise ConfigurationError(f"Longitudinal mode {self.longitudinal.mode.value} needs a lead vehicle.")

        if self.kind in (ScenarioKind.WAYPOINT_FOLLOW, ScenarioKind.DOUBLE_LANE_CHANGE) and self.path is None:
            raise ConfigurationError(f"A {self.kind.value} scenario needs [path] waypoints.")

        if self.kind is ScenarioKind.DOUBLE_LANE_CHANGE and self.corridor is None:
            raise ConfigurationError("A double-lane-change scenario needs a corridor.")

        if self.kind is ScenarioKind.OPEN_LOOP_REPLAY and self.replay is None:
            raise ConfigurationError("An open-loop-replay scenario needs a [replay] steering profile.")

        if abs(self.grade) >= math.pi / 2:
            raise ConfigurationError(f"Road grade {self.grade} rad is not a road.")


# ---------------------------------------------------------------------------------------------------------- #
# Scenario file
# ---------------------------------------------------------------------------------------------------------- #
def _boolean(text: str) -> bool:
    value = configparser.ConfigParser.BOOLEAN_STATES.get(text.strip().lower())
    if value is None:
        raise ValueError(f"not a boolean: {text!r}")
    return value


def _pairs(text: str) -> Tuple[Tuple[float, float], ...]:
    pairs = []
    for item in text.split(";"):
        if not item.strip():
            continue
        fields = item.replace(",", " ").split()
        if len(fields) != 2:
            raise ValueError(f"expected 'x y', got {item.strip()!r}")
        pairs.append((float(fields[0]), float(fields[1])))
    return tuple(pairs)


_FLOAT, _INT, _BOOL, _STR, _PATH, _PROFILE, _PAIRS = float, int, _boolean, str, "path", "profile", "pairs"

_GAIN_KEYS = ("cc_kp", "cc_ki", "acc_kp", "acc_kd", "standstill_distance", "time_headway", "k_ff", "a_min", "a_max",
              "v2v_timeout")
_AVOIDANCE_KEYS = ("speed_threshold", "corridor_length", "corridor_half_width", "side_length", "side_width", "gain",
                   "max_correction", "steer_limit")
_NOISE_KEYS = ("gps_bound", "gps_correlation_time", "gps_heading_sigma", "gps_speed_sigma", "compass_bias",
               "compass_sigma", "compass_burst_probability", "compass_burst_magnitude", "compass_burst_duration",
               "radar_range_sigma", "radar_rate_sigma", "radar_max_range", "radar_fov", "lidar_range", "lidar_fov",
               "lidar_sigma", "gps_rate", "compass_rate", "radar_rate", "lidar_rate")

SCHEMA: Dict[str, Dict[str, object]] = {
    "scenario": {"kind": _STR, "name": _STR, "duration": _FLOAT, "seed": _INT, "dt_plant": _FLOAT,
                 "dt_control": _FLOAT, "origin_lat": _FLOAT, "origin_lon": _FLOAT},
    "ego": {"vehicle": _PATH, "speed": _FLOAT, "x": _FLOAT, "y": _FLOAT, "heading": _FLOAT, "driver_pedal": _PROFILE},
    "lead": {"vehicle": _PATH, "speed_profile": _PROFILE, "gap": _FLOAT, "sender_id": _INT},
    "longitudinal": {"mode": _STR, "speed_profile": _PROFILE, **{k: _FLOAT for k in _GAIN_KEYS}},
    "path": {"waypoints": _PATH, "format": _STR, "switch_radius": _FLOAT, "kp": _FLOAT, "ki": _FLOAT, "kd": _FLOAT,
             "steer_limit": _FLOAT, "stop_on_complete": _BOOL},
    "obstacles": {"positions": _PAIRS, **{k: _FLOAT for k in _AVOIDANCE_KEYS}},
    "sensing": {k: _FLOAT for k in _NOISE_KEYS},
    "channel": {"latency": _FLOAT, "jitter": _FLOAT, "loss": _FLOAT},
    "comms": {"can_mapping": _PATH},
    "road": {"grade": _FLOAT},
    "replay": {"pattern": _STR, "amplitude": _FLOAT, "start": _FLOAT, "rate": _FLOAT, "frequency": _FLOAT,
               "dwell": _FLOAT, "profile": _PROFILE},
    "dlc": {"corridor": _STR, "speed": _FLOAT},
    "output": {"csv": _BOOL, "metrics": _BOOL, "plots": _BOOL},
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^([^\s#;=:\[][^=:]*?)\s*[=:]")


def _line_numbers(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """
    1-based line of every section header and key, keyed by (section, key) and (section, None).
    """
    lines, section = {}, None
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION_RE.match(line)
        if header:
            section = header.group(1).strip()
            lines.setdefault((section, None), number)
            continue

        key = _KEY_RE.match(line)
        if key and section is not None:
            lines.setdefault((section, key.group(1).strip()), number)

    return lines


class _ScenarioReader:
    """
    Typed, line-aware access to a parsed scenario file.
    """

    def __init__(self, parser: configparser.ConfigParser, path: Optional[Path], lines):
        self.parser = parser
        self.path = path
        self.lines = lines
        self.base = path.parent if path is not None else Path.cwd()

    def error(self, message: str, section: str, key: str = None) -> ScenarioError:
        return ScenarioError(message, self.path, self.lines.get((section, key), self.lines.get((section, None))))

    def has(self, section: str, key: str = None) -> bool:
        if key is None:
            return self.parser.has_section(section)
        return self.parser.has_option(section, key)

    def get(self, section: str, key: str, default=None):
        if not self.has(section, key):
            return default

        raw = self.parser.get(section, key)
        kind = SCHEMA[section][key]
        try:
            if kind == _PATH:
                resolved = (self.base / raw.strip()).resolve()
                if not resolved.is_file():
                    raise self.error(f"{section}.{key} refers to a missing file: {resolved}", section, key)
                return resolved
            if kind == _PROFILE:
                return Profile.parse(raw)
            if kind == _PAIRS:
                return _pairs(raw)
            return kind(raw.strip())
        except ScenarioError:
            raise
        except (ValueError, LcvError) as e:
            raise self.error(f"Invalid value for {section}.{key} = {raw!r}: {e}", section, key) from None

    def values(self, section: str, keys: Sequence[str]) -> Dict[str, object]:
        return {k: self.get(section, k) for k in keys if self.has(section, k)}

    def build(self, section: str, factory: Callable, **kwargs):
        """
        Construct a config object, reporting its validation errors against the section.
        """
        try:
            return factory(**kwargs)
        except LcvError as e:
            raise self.error(f"[{section}] {e}", section) from None


def _vehicle(reader: _ScenarioReader, section: str) -> VehicleSetup:
    path = reader.get(section, "vehicle", NOMINAL_VEHICLE_FILE)
    try:
        return load_vehicle_file(path)
    except ConfigurationError as e:
        raise reader.error(str(e), section, "vehicle") from None


def parse_scenario(text: str, path=None, overrides: Mapping[str, str] = None, seed: int = None) -> Scenario:
    """
    Parse scenario text. File references resolve relative to ``path``'s directory.

    :param overrides: ``{"section.key": "value"}`` applied on top of the file, e.g. from a parameter sweep
    :param seed: replaces ``scenario.seed``
    :return: Scenario
    """
    path = Path(path) if path is not None else None
    lines = _line_numbers(text)

    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",),
                                       empty_lines_in_values=False)
    parser.optionxform = str

    try:
        parser.read_string(text, source=str(path) if path else "<scenario>")
    except configparser.MissingSectionHeaderError as e:
        raise ScenarioError("Content before the first [section] header.", path, e.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as e:
        raise ScenarioError(e.message.split(": ", 1)[-1] if hasattr(e, "message") else str(e), path,
                            e.lineno) from None
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ScenarioError(f"Cannot parse line {e.errors[0][1] if e.errors else ''}", path, line) from None

    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ScenarioError(f"Override {dotted!r} is not of the form section.key.", path)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(value))

    for section in parser.sections():
        if section not in SCHEMA:
            raise ScenarioError(f"Unknown section [{section}]", path, lines.get((section, None)))
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                raise ScenarioError(f"Unknown key '{key}' in [{section}]", path, lines.get((section, key)))

    reader = _ScenarioReader(parser, path, lines)

    if not reader.has("scenario", "kind"):
        raise ScenarioError("Missing required key scenario.kind", path, lines.get(("scenario", None)))

    try:
        kind = ScenarioKind(reader.get("scenario", "kind").strip())
    except ValueError:
        raise reader.error(f"Unknown scenario kind {parser.get('scenario', 'kind')!r}; expected one of "
                           f"{', '.join(k.value for k in ScenarioKind)}", "scenario", "kind") from None

    if not reader.has("scenario", "duration"):
        raise ScenarioError("Missing required key scenario.duration", path, lines.get(("scenario", None)))

    duration = reader.get("scenario", "duration")
    if not duration > 0:
        raise reader.error(f"scenario.duration must be positive, got {duration}", "scenario", "duration")

    name = reader.get("scenario", "name", path.stem if path is not None else kind.value)
    seed = seed if seed is not None else reader.get("scenario", "seed", 0)

    dlc_speed = reader.get("dlc", "speed", 50.0 / 3.6)

    # ego
    ego_setup = _vehicle(reader, "ego")
    default_speed = dlc_speed if kind is ScenarioKind.DOUBLE_LANE_CHANGE else 0.0
    ego = EgoConfig(setup=ego_setup,
                    speed=reader.get("ego", "speed", default_speed),
                    x=reader.get("ego", "x", 0.0),
                    y=reader.get("ego", "y", 0.0),
                    heading=math.radians(reader.get("ego", "heading", 0.0)),
                    driver_pedal=reader.get("ego", "driver_pedal"))
    if ego.speed < 0:
        raise reader.error("ego.speed must be non-negative", "ego", "speed")

    # lead
    lead = None
    if reader.has("lead"):
        if not reader.has("lead", "speed_profile"):
            raise reader.error("Missing required key lead.speed_profile", "lead")
        lead = LeadConfig(setup=_vehicle(reader, "lead"),
                          speed_profile=reader.get("lead", "speed_profile"),
                          gap=reader.get("lead", "gap"),
                          sender_id=reader.get("lead", "sender_id", 1))
        if lead.gap is not None and not lead.gap > 0:
            raise reader.error("lead.gap must be positive", "lead", "gap")

    # longitudinal
    default_mode = LongitudinalMode.CACC if kind is ScenarioKind.CACC_FOLLOW else LongitudinalMode.CC
    try:
        mode = LongitudinalMode(reader.get("longitudinal", "mode", default_mode.value).strip())
    except ValueError:
        raise reader.error(f"Unknown longitudinal mode {parser.get('longitudinal', 'mode')!r}", "longitudinal",
                           "mode") from None

    gains = reader.build("longitudinal", LongitudinalGains, **reader.values("longitudinal", _GAIN_KEYS))
    longitudinal = LongitudinalConfig(mode=mode,
                                      speed_profile=reader.get("longitudinal", "speed_profile",
                                                               Profile.constant(ego.speed)),
                                      gains=gains)

    # path
    path_config, plane = None, None
    if reader.has("path"):
        if not reader.has("path", "waypoints"):
            raise reader.error("Missing required key path.waypoints", "path")

        source = reader.get("path", "waypoints")
        try:
            points, plane = load_waypoints(source, reader.get("path", "format", "local").strip())
        except ConfigurationError as e:
            raise reader.error(str(e), "path", "waypoints") from None

        follower = reader.build("path", PathFollowerGains,
                                **reader.values("path", ("kp", "ki", "kd", "steer_limit")))
        path_config = PathConfig(points=points, source=source, plane=plane,
                                 switch_radius=reader.get("path", "switch_radius", 3.0), gains=follower,
                                 stop_on_complete=reader.get("path", "stop_on_complete", True))

    if plane is None:
        plane = reader.build("scenario", LocalTangentPlane, lat0=reader.get("scenario", "origin_lat", 0.0),
                             lon0=reader.get("scenario", "origin_lon", 0.0))

    # obstacles, sensing, channel, comms
    obstacles = tuple(WorldObject(x, y, f"obstacle-{i}")
                      for i, (x, y) in enumerate(reader.get("obstacles", "positions", ())))
    avoidance = reader.build("obstacles", ObstacleAvoidanceConfig, **reader.values("obstacles", _AVOIDANCE_KEYS))
    noise = reader.build("sensing", NoiseModelParams, seed=seed, **reader.values("sensing", _NOISE_KEYS))
    channel = reader.build("channel", ChannelParams, seed=seed,
                           **reader.values("channel", ("latency", "jitter", "loss")))

    mapping_file = reader.get("comms", "can_mapping", DEFAULT_CAN_MAPPING_FILE)
    try:
        can_mapping = CanMapping.from_file(mapping_file)
    except ConfigurationError as e:
        raise reader.error(str(e), "comms", "can_mapping") from None

    # replay
    replay = None
    if reader.has("replay"):
        pattern = reader.get("replay", "pattern", "profile").strip()
        if pattern == "profile":
            replay = reader.get("replay", "profile")
            if replay is None:
                raise reader.error("replay.pattern = profile needs replay.profile", "replay", "pattern")
        else:
            kwargs = reader.values("replay", ("start", "rate", "frequency", "dwell"))
            replay = reader.build("replay", steering_pattern, kind=pattern,
                                  amplitude=reader.get("replay", "amplitude", 0.0), **kwargs)

    # corridor
    corridor = None
    if kind is ScenarioKind.DOUBLE_LANE_CHANGE or reader.has("dlc", "corridor"):
        corridor_ref = reader.get("dlc", "corridor", ISO3888_1).strip()
        try:
            if corridor_ref == ISO3888_1:
                corridor = DlcCorridor.iso3888_1(ego_setup.params.width)
            else:
                corridor_path = (reader.base / corridor_ref).resolve()
                if not corridor_path.is_file():
                    raise reader.error(f"dlc.corridor refers to a missing file: {corridor_path}", "dlc", "corridor")
                corridor = DlcCorridor.from_file(corridor_path)
        except ConfigurationError as e:
            raise reader.error(str(e), "dlc", "corridor") from None

    output = OutputOptions(**reader.values("output", ("csv", "metrics", "plots")))

    try:
        scenario = Scenario(kind=kind, name=name, duration=duration, seed=seed, ego=ego, longitudinal=longitudinal,
                            dt_plant=reader.get("scenario", "dt_plant", 0.001),
                            dt_control=reader.get("scenario", "dt_control", 0.01),
                            lead=lead, path=path_config, obstacles=obstacles, avoidance=avoidance, noise=noise,
                            channel=channel, can_mapping=can_mapping, grade=reader.get("road", "grade", 0.0),
                            replay=replay, corridor=corridor, plane=plane, output=output, source=path)
    except ConfigurationError as e:
        raise ScenarioError(str(e), path) from None

    logger.debug("Loaded %s scenario '%s'", kind.value, name)
    return scenario


def load_scenario(path, overrides: Mapping[str, str] = None, seed: int = None) -> Scenario:
    """
    Read and validate a scenario file.

    :param path: scenario file
    :param overrides: ``{"section.key": "value"}`` applied on top of the file
    :param seed: replaces ``scenario.seed``
    :return: Scenario
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError(f"Cannot read scenario file: {e.strerror}", path) from None

    return parse_scenario(text, path, overrides=overrides, seed=seed)


def with_seed(scenario: Scenario, seed: int) -> Scenario:
    """
    Copy of ``scenario`` whose sensors and channel are seeded with ``seed``.
    """
    return replace(scenario, seed=seed, noise=replace(scenario.noise, seed=seed),
                   channel=replace(scenario.channel, seed=seed))
