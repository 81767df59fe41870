"""
Vehicle and actuator constants, the static engine map and the flat key-value parameter file they are read from.
"""
import configparser
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import RectBivariateSpline

from src.lcv_auto.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

RAD_S_TO_RPM = 60.0 / (2.0 * math.pi)

DATA_DIR = Path(__file__).resolve().parents[2] / "data"
NOMINAL_VEHICLE_FILE = DATA_DIR / "vehicles" / "nominal_lcv.params"


# ---------------------------------------------------------------------------------------------------------- #
# Engine map
# ---------------------------------------------------------------------------------------------------------- #
class EngineMap:
    """
    Static engine map T_ICE(engine speed, throttle) on a rectangular grid.

    Queries outside the grid are clamped to its edges; inside the grid the torque is interpolated bilinearly.

    :param rpm: strictly increasing engine-speed breakpoints (rpm)
    :param throttle: strictly increasing throttle breakpoints (fraction)
    :param torque: torque table in N*m, shape (len(rpm), len(throttle))
    """

    def __init__(self, rpm, throttle, torque):
        self.rpm = np.asarray(rpm, dtype=float)
        self.throttle = np.asarray(throttle, dtype=float)
        self.torque = np.asarray(torque, dtype=float)

        self.validate()

        # degree-1 tensor spline through every node is the bilinear interpolant
        self._spline = RectBivariateSpline(self.rpm, self.throttle, self.torque, kx=1, ky=1, s=0)
        self.rpm_range = (float(self.rpm[0]), float(self.rpm[-1]))
        self.throttle_range = (float(self.throttle[0]), float(self.throttle[-1]))
        self.closed_throttle_is_zero = bool(self.throttle[0] == 0.0 and np.all(self.torque[:, 0] == 0.0))

    def validate(self):
        if self.rpm.ndim != 1 or self.throttle.ndim != 1 or len(self.rpm) < 2 or len(self.throttle) < 2:
            raise ConfigurationError("Engine map needs at least two breakpoints on each axis.")

        if self.torque.shape != (len(self.rpm), len(self.throttle)):
            raise ConfigurationError(f"Engine map table has shape {self.torque.shape}, "
                                     f"expected {(len(self.rpm), len(self.throttle))}.")

        if np.any(np.diff(self.rpm) <= 0) or np.any(np.diff(self.throttle) <= 0):
            raise ConfigurationError("Engine map breakpoints must be strictly increasing.")

        if not np.all(np.isfinite(self.torque)):
            raise ConfigurationError("Engine map contains non-finite torque values.")

    def __call__(self, engine_speed_rpm: float, throttle: float) -> float:
        """
        :param engine_speed_rpm: engine speed, clamped to the map range
        :param throttle: throttle fraction, clamped to the map range
        :return: engine torque in N*m
        """
        alpha = min(max(throttle, self.throttle_range[0]), self.throttle_range[1])
        if alpha == 0.0 and self.closed_throttle_is_zero:
            return 0.0

        rpm = min(max(engine_speed_rpm, self.rpm_range[0]), self.rpm_range[1])

        return float(self._spline.ev(rpm, alpha))

    @classmethod
    def from_file(cls, path):
        """
        Read a delimited grid: header row holds the throttle breakpoints, the first column the rpm breakpoints.

        :param path: engine map file
        :return: EngineMap
        """
        path = Path(path)
        try:
            df = pd.read_csv(path, comment="#", index_col=0, skipinitialspace=True)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"Cannot read engine map {path}: {exc}") from exc

        try:
            throttle = [float(c) for c in df.columns]
            rpm = df.index.to_numpy(dtype=float)
            torque = df.to_numpy(dtype=float)
        except ValueError as exc:
            raise ConfigurationError(f"Engine map {path} is not numeric: {exc}") from exc

        return cls(rpm, throttle, torque)


# ---------------------------------------------------------------------------------------------------------- #
# Plant constants
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class VehicleParameters:
    """
    All plant constants of the single-track model in SI units.

    The per-axle stiffnesses lump both wheels of the axle; ``gear_ratios`` are overall ratios (gearbox times
    final drive); ``shift_speeds`` are the vehicle speeds at which the next gear is engaged.
    """

    mass: float
    yaw_inertia: float
    l_f: float
    l_r: float
    frontal_area: float
    air_density: float
    drag_coefficient: float
    rolling_resistance: float
    gravity: float
    wheel_inertia: float
    wheel_radius: float
    c_xf: float
    c_xr: float
    c_yf: float
    c_yr: float
    mu: float
    driveline_efficiency: float
    gear_ratios: Tuple[float, ...]
    engine_map: EngineMap = field(repr=False, compare=False)
    shift_speeds: Tuple[float, ...] = ()
    driven_axle: str = "front"
    brake_split_front: float = 0.7
    length: float = 4.8
    width: float = 2.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = {"mass": self.mass, "yaw_inertia": self.yaw_inertia, "l_f": self.l_f, "l_r": self.l_r,
                    "frontal_area": self.frontal_area, "air_density": self.air_density,
                    "drag_coefficient": self.drag_coefficient, "gravity": self.gravity,
                    "wheel_inertia": self.wheel_inertia, "wheel_radius": self.wheel_radius,
                    "c_xf": self.c_xf, "c_xr": self.c_xr, "c_yf": self.c_yf, "c_yr": self.c_yr,
                    "length": self.length, "width": self.width}

        for name, value in positive.items():
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be strictly positive, got {value}.")

        if not 0 < self.driveline_efficiency <= 1:
            raise ConfigurationError(f"driveline_efficiency must lie in (0, 1], got {self.driveline_efficiency}.")

        if not 0 <= self.rolling_resistance < 1:
            raise ConfigurationError(f"rolling_resistance must lie in [0, 1), got {self.rolling_resistance}.")

        if not 0 < self.mu <= 2:
            raise ConfigurationError(f"mu must lie in (0, 2], got {self.mu}.")

        if len(self.gear_ratios) == 0 or any(not (i > 0) for i in self.gear_ratios):
            raise ConfigurationError("At least one strictly positive gear ratio is required.")

        if len(self.shift_speeds) > len(self.gear_ratios) - 1:
            raise ConfigurationError("More shift speeds than gear changes.")

        if any(b <= a for a, b in zip(self.shift_speeds, self.shift_speeds[1:])):
            raise ConfigurationError("Shift speeds must be strictly increasing.")

        if self.driven_axle not in ("front", "rear"):
            raise ConfigurationError(f"driven_axle must be 'front' or 'rear', got {self.driven_axle!r}.")

        if not 0 <= self.brake_split_front <= 1:
            raise ConfigurationError(f"brake_split_front must lie in [0, 1], got {self.brake_split_front}.")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r


# ---------------------------------------------------------------------------------------------------------- #
# Actuator constants
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class ActuationConfig:
    """
    Lower-level actuator constants: brake duty map, steering PI servo, steering column model.

    :param brake_slope: k_b, duty cycle percent per m/s^2 of requested deceleration
    :param brake_offset: b_b, duty cycle percent at zero deceleration
    :param max_brake_torque: total brake torque at 100 % duty (N*m)
    :param steer_kp: proportional gain of the steering position loop (1/rad)
    :param steer_ki: integral gain of the steering position loop (1/(rad*s))
    :param steer_output_limit: motor command limit (normalised)
    :param steer_rate_limit: road-wheel slew limit (rad/s)
    :param steer_angle_limit: road-wheel angle limit (rad); full motor command maps onto it
    :param steer_time_constant: first-order lag of motor and column (s)
    :param steering_ratio: steering-wheel angle over road-wheel angle (-)
    :param accel_deadband: |a_desired| below which neither throttle nor brake acts (m/s^2)
    """

    brake_slope: float = 20.0
    brake_offset: float = 0.0
    max_brake_torque: float = 3200.0
    steer_kp: float = 3.0
    steer_ki: float = 60.0
    steer_output_limit: float = 1.0
    steer_rate_limit: float = 0.8
    steer_angle_limit: float = 0.6
    steer_time_constant: float = 0.05
    steering_ratio: float = 16.0
    accel_deadband: float = 0.05

    def __post_init__(self):
        gains = {"brake_slope": self.brake_slope, "steer_kp": self.steer_kp, "steer_ki": self.steer_ki,
                 "accel_deadband": self.accel_deadband}
        for name, value in gains.items():
            if not value >= 0:
                raise ConfigurationError(f"{name} must be non-negative, got {value}.")

        limits = {"max_brake_torque": self.max_brake_torque, "steer_output_limit": self.steer_output_limit,
                  "steer_rate_limit": self.steer_rate_limit, "steer_angle_limit": self.steer_angle_limit,
                  "steer_time_constant": self.steer_time_constant, "steering_ratio": self.steering_ratio}
        for name, value in limits.items():
            if not value > 0:
                raise ConfigurationError(f"{name} must be strictly positive, got {value}.")

        if self.steer_output_limit > 1.0:
            raise ConfigurationError("steer_output_limit is a normalised motor command and cannot exceed 1.")


# ---------------------------------------------------------------------------------------------------------- #
# Parameter file
# ---------------------------------------------------------------------------------------------------------- #
_PLANT_KEYS = {
    "m": ("mass", float), "I_z": ("yaw_inertia", float), "l_f": ("l_f", float), "l_r": ("l_r", float),
    "A": ("frontal_area", float), "rho": ("air_density", float), "C_d": ("drag_coefficient", float),
    "C_rr": ("rolling_resistance", float), "g": ("gravity", float), "I_w": ("wheel_inertia", float),
    "R_w": ("wheel_radius", float), "C_xf": ("c_xf", float), "C_xr": ("c_xr", float),
    "C_yf": ("c_yf", float), "C_yr": ("c_yr", float), "mu": ("mu", float),
    "eta_t": ("driveline_efficiency", float), "i_t": ("gear_ratios", "floats"),
    "shift_speeds": ("shift_speeds", "floats"), "driven_axle": ("driven_axle", str),
    "brake_split_front": ("brake_split_front", float), "length": ("length", float), "width": ("width", float),
}

_ACTUATION_KEYS = {
    "k_b": "brake_slope", "b_b": "brake_offset", "max_brake_torque": "max_brake_torque",
    "steer_kp": "steer_kp", "steer_ki": "steer_ki", "steer_output_limit": "steer_output_limit",
    "steer_rate_limit": "steer_rate_limit", "steer_angle_limit": "steer_angle_limit",
    "steer_time_constant": "steer_time_constant", "steering_ratio": "steering_ratio",
    "accel_deadband": "accel_deadband",
}

_SECTION = "parameters"


@dataclass(frozen=True)
class VehicleSetup:
    """
    Everything a vehicle parameter file defines.
    """

    params: VehicleParameters
    actuation: ActuationConfig
    source: Path = None


def _parse_floats(text: str):
    return tuple(float(tok) for tok in text.replace(";", ",").split(",") if tok.strip())


def load_vehicle_file(path) -> VehicleSetup:
    """
    Read a flat ``key = value`` vehicle parameter file.

    The engine map is referenced by the ``engine_map`` key, relative to the parameter file.

    :param path: parameter file
    :return: VehicleSetup with plant and actuator constants
    """
    path = Path(path)

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str

    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"Cannot read parameter file {path}: {exc}") from exc

    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=str(path))
    except configparser.Error as exc:
        raise ConfigurationError(f"Cannot parse parameter file {path}: {exc}") from exc

    entries = dict(parser.items(_SECTION))

    unknown = sorted(set(entries) - set(_PLANT_KEYS) - set(_ACTUATION_KEYS) - {"engine_map"})
    if unknown:
        raise ConfigurationError(f"Unknown key(s) in {path}: {', '.join(unknown)}")

    if "engine_map" not in entries:
        raise ConfigurationError(f"{path} does not reference an engine_map.")

    plant = {}
    for key, (name, kind) in _PLANT_KEYS.items():
        if key not in entries:
            continue
        try:
            plant[name] = _parse_floats(entries[key]) if kind == "floats" else kind(entries[key])
        except ValueError as exc:
            raise ConfigurationError(f"Bad value for {key} in {path}: {entries[key]!r}") from exc

    missing = [key for key, (name, _) in _PLANT_KEYS.items()
               if name not in plant and name not in ("shift_speeds", "driven_axle", "brake_split_front",
                                                     "length", "width")]
    if missing:
        raise ConfigurationError(f"Missing key(s) in {path}: {', '.join(missing)}")

    actuation = {}
    for key, name in _ACTUATION_KEYS.items():
        if key in entries:
            try:
                actuation[name] = float(entries[key])
            except ValueError as exc:
                raise ConfigurationError(f"Bad value for {key} in {path}: {entries[key]!r}") from exc

    engine_map = EngineMap.from_file(path.parent / entries["engine_map"])

    logger.debug("Loaded vehicle parameters from %s", path)

    return VehicleSetup(params=VehicleParameters(engine_map=engine_map, **plant),
                        actuation=ActuationConfig(**actuation),
                        source=path)


@lru_cache(maxsize=None)
def load_nominal_vehicle() -> VehicleSetup:
    """
    The shipped nominal vehicle, read once per process.
    """
    return load_vehicle_file(NOMINAL_VEHICLE_FILE)
