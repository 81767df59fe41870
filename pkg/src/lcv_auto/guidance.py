"""
Upper-level controllers: PI cruise control, PD adaptive cruise control on a constant-time-headway spacing policy,
cooperative ACC with lead-acceleration feedforward, and the bearing-vector waypoint follower with its low-speed
obstacle correction.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from src.lcv_auto.exceptions import ConfigurationError, DegenerateGeometryError, InputDomainError, SensorFaultError
from src.lcv_auto.projection import wrap_angle

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------------------------------------- #
# Gains
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class LongitudinalGains:
    """
    :param cc_kp: cruise control proportional gain (1/s)
    :param cc_ki: cruise control integral gain (1/s^2)
    :param acc_kp: spacing error gain (1/s^2)
    :param acc_kd: range-rate gain (1/s)
    :param standstill_distance: d_0 (m)
    :param time_headway: h (s)
    :param k_ff: lead acceleration feedforward gain
    :param a_min: strongest deceleration command (m/s^2)
    :param a_max: strongest acceleration command (m/s^2)
    :param v2v_timeout: age after which a received lead acceleration is stale (s)
    """

    cc_kp: float = 0.8
    cc_ki: float = 0.15
    acc_kp: float = 0.25
    acc_kd: float = 0.6
    standstill_distance: float = 5.0
    time_headway: float = 1.0
    k_ff: float = 1.0
    a_min: float = -5.0
    a_max: float = 3.0
    v2v_timeout: float = 0.5

    def __post_init__(self):
        if min(self.cc_kp, self.cc_ki, self.acc_kp, self.acc_kd, self.k_ff) < 0:
            raise ConfigurationError("Longitudinal gains must be non-negative.")

        if not self.time_headway > 0:
            raise ConfigurationError(f"Time headway must be positive, got {self.time_headway}.")

        if not self.standstill_distance >= 0:
            raise ConfigurationError(f"Standstill distance must be non-negative, got {self.standstill_distance}.")

        if not self.a_min < 0 < self.a_max:
            raise ConfigurationError(f"Need a_min < 0 < a_max, got [{self.a_min}, {self.a_max}].")

        if not self.v2v_timeout > 0:
            raise ConfigurationError("V2V timeout must be positive.")

    def desired_spacing(self, ego_v: float) -> float:
        return self.standstill_distance + self.time_headway * ego_v


@dataclass(frozen=True)
class PathFollowerGains:
    kp: float = 1.0
    ki: float = 0.01
    kd: float = 0.02
    steer_limit: float = 0.5

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ConfigurationError("Path follower gains must be non-negative.")

        if not self.steer_limit > 0:
            raise ConfigurationError("Steering limit must be positive.")


@dataclass(frozen=True)
class ObstacleAvoidanceConfig:
    """
    Forward corridor and side zones in the ego frame (x forward, y left) that trigger a steering correction.

    :param speed_threshold: correction is active only below this speed (m/s)
    :param corridor_length: forward reach of the corridor (m)
    :param corridor_half_width: half width of the corridor (m)
    :param side_length: longitudinal extent of the side zones, measured both ways from the reference point (m)
    :param side_width: lateral extent of each side zone outside the corridor (m)
    :param gain: correction per metre of intrusion (rad/m)
    :param max_correction: limit of the total correction (rad)
    :param steer_limit: limit of the corrected steering angle (rad)
    """

    speed_threshold: float = 6.0
    corridor_length: float = 15.0
    corridor_half_width: float = 1.5
    side_length: float = 2.5
    side_width: float = 1.0
    gain: float = 0.2
    max_correction: float = 0.3
    steer_limit: float = 0.5

    def __post_init__(self):
        values = (self.speed_threshold, self.corridor_length, self.corridor_half_width, self.side_length,
                  self.side_width, self.max_correction, self.steer_limit)
        if min(values) <= 0 or self.gain < 0:
            raise ConfigurationError("Obstacle corridor dimensions and limits must be positive.")


# ---------------------------------------------------------------------------------------------------------- #
# PID core
# ---------------------------------------------------------------------------------------------------------- #
@dataclass
class PidState:
    """
    Integrator and derivative memory of one controller. ``previous_error`` is None until the first step.
    """

    integrator: float = 0.0
    previous_error: Optional[float] = None
    output: float = 0.0

    def reset_derivative(self):
        self.previous_error = None


def pid_step(error: float, state: PidState, kp: float, ki: float, kd: float, dt: float,
             lower: float, upper: float, feedforward: float = 0.0) -> float:
    """
    PID on the error with a clamped output and conditional integration: the integrator takes its step only when
    the resulting output stays within [lower, upper]. The derivative is taken on the error and is zero on the
    first step.

    :return: the clamped output
    """
    if not dt > 0:
        raise InputDomainError(f"dt must be positive, got {dt}.")

    if not math.isfinite(error):
        raise InputDomainError(f"Non-finite controller error {error}.")

    derivative = 0.0 if state.previous_error is None else (error - state.previous_error) / dt
    state.previous_error = error

    fixed = kp * error + kd * derivative + feedforward
    candidate = state.integrator + ki * error * dt

    output = fixed + candidate
    if lower <= output <= upper:
        state.integrator = candidate
    else:
        output = min(max(fixed + state.integrator, lower), upper)

    state.output = output
    return output


# ---------------------------------------------------------------------------------------------------------- #
# Longitudinal
# ---------------------------------------------------------------------------------------------------------- #
def cc_control(v_ref: float, v: float, state: PidState, gains: LongitudinalGains, dt: float,
               a_ff: float = 0.0) -> float:
    """
    Cruise control: PI on the speed error.

    :param a_ff: optional acceleration feedforward, e.g. the slope of a speed profile
    :return: desired acceleration (m/s^2)
    """
    return pid_step(v_ref - v, state, gains.cc_kp, gains.cc_ki, 0.0, dt, gains.a_min, gains.a_max, a_ff)


def acc_control(range_: float, range_rate: float, ego_v: float, gains: LongitudinalGains, dt: float) -> float:
    """
    Adaptive cruise control: PD on the spacing error with the measured range rate as derivative.

    :param range_: bumper-to-bumper distance to the lead (m)
    :param range_rate: rate of change of the range (m/s), negative when closing
    :param ego_v: ego speed (m/s)
    :return: desired acceleration (m/s^2)
    """
    if not dt > 0:
        raise InputDomainError(f"dt must be positive, got {dt}.")

    if not range_ > 0:
        raise SensorFaultError(f"Radar range must be positive, got {range_}.")

    error = range_ - gains.desired_spacing(ego_v)
    return min(max(gains.acc_kp * error + gains.acc_kd * range_rate, gains.a_min), gains.a_max)


def is_stale(received_at: Optional[float], now: float, timeout: float) -> bool:
    return received_at is None or now - received_at > timeout


def cacc_control(acc_output: float, lead_accel: Optional[float], gains: LongitudinalGains,
                 stale: bool = False) -> float:
    """
    Cooperative ACC: the ACC output plus the received lead acceleration. A missing, non-finite or stale
    lead acceleration counts as zero.

    :return: desired acceleration (m/s^2)
    """
    if stale or lead_accel is None or not math.isfinite(lead_accel):
        lead_accel = 0.0

    return min(max(acc_output + gains.k_ff * lead_accel, gains.a_min), gains.a_max)


# ---------------------------------------------------------------------------------------------------------- #
# Path following
# ---------------------------------------------------------------------------------------------------------- #
class WaypointPath:
    """
    Ordered local waypoints with a switch radius and the index of the current target.

    :param points: (N, 2) array of local x/y in metres, N >= 2
    :param switch_radius: distance at which the next waypoint becomes the target (m)
    """

    def __init__(self, points, switch_radius: float = 3.0, target_index: int = 0):
        self.points = np.asarray(points, dtype=float)
        self.switch_radius = float(switch_radius)
        self.target_index = int(target_index)
        self.complete = False

        self.validate()

    def validate(self):
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 2:
            raise ConfigurationError("A waypoint path needs at least two (x, y) waypoints.")

        if not np.all(np.isfinite(self.points)):
            raise ConfigurationError("Waypoints must be finite.")

        steps = np.hypot(*np.diff(self.points, axis=0).T)
        if np.any(steps == 0):
            raise ConfigurationError(f"Consecutive waypoints coincide at index {int(np.argmin(steps)) + 1}.")

        if not self.switch_radius > 0:
            raise ConfigurationError("Switch radius must be positive.")

        if not 0 <= self.target_index < len(self.points):
            raise ConfigurationError(f"Target index {self.target_index} out of range.")

    @property
    def target(self) -> Tuple[float, float]:
        x, y = self.points[self.target_index]
        return float(x), float(y)

    @property
    def last_index(self) -> int:
        return len(self.points) - 1

    def reset(self):
        self.target_index = 0
        self.complete = False


def select_waypoint(position, path: WaypointPath) -> int:
    """
    Advance the target while the vehicle is inside its switch radius. Reaching the last waypoint holds the index
    and sets ``path.complete``.

    :param position: (x, y) in metres
    :return: the updated target index
    """
    px, py = position

    while not path.complete:
        tx, ty = path.target
        if math.hypot(tx - px, ty - py) >= path.switch_radius:
            break

        if path.target_index == path.last_index:
            path.complete = True
            logger.debug("Final waypoint reached")
        else:
            path.target_index += 1

    return path.target_index


def bearing_error(position, heading: float, target) -> float:
    """
    Signed angle from the heading to the bearing vector towards ``target``; positive when the target lies to the
    left.

    :return: angle in (-pi, pi]
    """
    dx, dy = target[0] - position[0], target[1] - position[1]
    if dx == 0.0 and dy == 0.0:
        raise DegenerateGeometryError(f"Bearing undefined: target coincides with position {tuple(position)}.")

    return wrap_angle(math.atan2(dy, dx) - heading)


def path_follow_pid(bearing_err: float, state: PidState, gains: PathFollowerGains, dt: float) -> float:
    """
    PID on the bearing error.

    :return: desired road-wheel angle (rad)
    """
    return pid_step(bearing_err, state, gains.kp, gains.ki, gains.kd, dt, -gains.steer_limit, gains.steer_limit)


def obstacle_correction(desired_steer: float, lidar_objects: Iterable, ego_v: float,
                        config: ObstacleAvoidanceConfig) -> float:
    """
    Low-speed steering correction away from lidar objects in the forward corridor or alongside the vehicle.

    Objects carry ego-frame ``x`` (forward) and ``y`` (left). An object in the corridor adds
    ``-sign(y) * gain * (half_width - |y|)``; an object on the centreline steers right. An object in a side zone
    adds a correction proportional to how far it reaches into that zone. Side zones lie outside the corridor width,
    so an object directly behind the vehicle causes no correction.

    :return: corrected road-wheel angle (rad)
    """
    if ego_v >= config.speed_threshold:
        return desired_steer

    correction = 0.0
    for obj in lidar_objects:
        x, y = obj.x, obj.y
        side = 1.0 if y >= 0.0 else -1.0

        if 0.0 < x <= config.corridor_length and abs(y) <= config.corridor_half_width:
            correction -= side * config.gain * (config.corridor_half_width - abs(y))
        elif (abs(x) <= config.side_length
              and config.corridor_half_width < abs(y) <= config.corridor_half_width + config.side_width):
            correction -= side * config.gain * (config.corridor_half_width + config.side_width - abs(y))

    if correction == 0.0:
        return desired_steer

    correction = min(max(correction, -config.max_correction), config.max_correction)
    return min(max(desired_steer + correction, -config.steer_limit), config.steer_limit)
