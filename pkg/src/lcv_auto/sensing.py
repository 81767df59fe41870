"""
Simulated sensor suite: GPS with a correlated, bounded position error, digital compass with bias and
interference bursts, compass/GPS heading fusion, a single-target forward radar and a lidar object list.

Every model draws from its own seeded numpy generator, so identical seeds and truth traces give identical
sensor traces.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np

from src.lcv_auto.dynamics import VehicleState
from src.lcv_auto.exceptions import ConfigurationError
from src.lcv_auto.projection import to_ego_frame, wrap_angle

logger = logging.getLogger(__name__)

GPS_BOUND_QUANTILE = 0.99


@dataclass(frozen=True)
class NoiseModelParams:
    """
    :param gps_bound: position error magnitude not exceeded by 99 % of fixes, also a hard limit (m)
    :param gps_correlation_time: Gauss-Markov correlation time of the position error (s)
    :param gps_heading_sigma: GPS course noise (rad)
    :param gps_speed_sigma: GPS speed noise (m/s)
    :param compass_bias: constant compass bias (rad)
    :param compass_sigma: compass white noise (rad)
    :param compass_burst_probability: chance per compass sample that an interference burst starts
    :param compass_burst_magnitude: heading offset during a burst (rad)
    :param compass_burst_duration: length of a burst (s)
    :param radar_range_sigma: radar range noise (m)
    :param radar_rate_sigma: radar range-rate noise (m/s)
    :param radar_max_range: radar reach (m)
    :param radar_fov: radar half field of view (rad)
    :param lidar_range: lidar reach (m)
    :param lidar_fov: lidar half field of view (rad)
    :param lidar_sigma: lidar position noise per axis (m)
    :param gps_rate: GPS rate (Hz); the other rates likewise
    :param seed: root seed of the sensor generators when a SensorSuite is built without a seed sequence; ignored
        otherwise, which is how the simulation engine builds its suites from the scenario seed
    """

    gps_bound: float = 1.5
    gps_correlation_time: float = 60.0
    gps_heading_sigma: float = 0.01
    gps_speed_sigma: float = 0.05
    compass_bias: float = 0.0
    compass_sigma: float = 0.005
    compass_burst_probability: float = 0.0
    compass_burst_magnitude: float = 0.2
    compass_burst_duration: float = 0.5
    radar_range_sigma: float = 0.1
    radar_rate_sigma: float = 0.05
    radar_max_range: float = 150.0
    radar_fov: float = math.radians(10.0)
    lidar_range: float = 30.0
    lidar_fov: float = math.radians(135.0)
    lidar_sigma: float = 0.03
    gps_rate: float = 10.0
    compass_rate: float = 50.0
    radar_rate: float = 20.0
    lidar_rate: float = 12.5
    seed: int = 0

    def __post_init__(self):
        non_negative = (self.gps_bound, self.gps_heading_sigma, self.gps_speed_sigma, self.compass_sigma,
                        self.compass_burst_magnitude, self.radar_range_sigma, self.radar_rate_sigma,
                        self.lidar_sigma)
        if min(non_negative) < 0:
            raise ConfigurationError("Noise magnitudes must be non-negative.")

        positive = (self.gps_correlation_time, self.compass_burst_duration, self.radar_max_range, self.radar_fov,
                    self.lidar_range, self.lidar_fov, self.gps_rate, self.compass_rate, self.radar_rate,
                    self.lidar_rate)
        if min(positive) <= 0:
            raise ConfigurationError("Sensor ranges, fields of view, rates and time constants must be positive.")

        if not 0.0 <= self.compass_burst_probability <= 1.0:
            raise ConfigurationError("Burst probability must lie in [0, 1].")

        if self.seed < 0:
            raise ConfigurationError("Seed must be non-negative.")

    @classmethod
    def noiseless(cls, **kwargs):
        """
        Parameters with every noise source switched off.
        """
        quiet = dict(gps_bound=0.0, gps_heading_sigma=0.0, gps_speed_sigma=0.0, compass_sigma=0.0,
                     compass_burst_probability=0.0, radar_range_sigma=0.0, radar_rate_sigma=0.0, lidar_sigma=0.0)
        quiet.update(kwargs)
        return cls(**quiet)

    @property
    def gps_sigma(self) -> float:
        """
        Per-axis standard deviation for which the 2D error magnitude stays within ``gps_bound`` with 99 %
        probability.
        """
        return self.gps_bound / math.sqrt(-2.0 * math.log(1.0 - GPS_BOUND_QUANTILE))


# ---------------------------------------------------------------------------------------------------------- #
# Readings
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class GpsFix:
    x: float
    y: float
    heading: float
    speed: float
    t: float
    valid: bool = True

    def propagate(self, t: float) -> Tuple[float, float]:
        """
        Dead-reckoned position at time ``t`` from the fix's speed and heading.
        """
        dt = t - self.t
        return self.x + self.speed * math.cos(self.heading) * dt, self.y + self.speed * math.sin(self.heading) * dt


@dataclass(frozen=True)
class CompassReading:
    heading: float
    t: float
    valid: bool = True


@dataclass(frozen=True)
class RadarTrack:
    range: float
    range_rate: float
    valid: bool
    t: float


@dataclass(frozen=True)
class LidarObject:
    x: float
    y: float
    t: float


@dataclass(frozen=True)
class WorldObject:
    x: float
    y: float
    name: str = ""


# ---------------------------------------------------------------------------------------------------------- #
# GPS and compass
# ---------------------------------------------------------------------------------------------------------- #
@dataclass
class GpsNoiseState:
    rng: np.random.Generator
    offset_x: float = 0.0
    offset_y: float = 0.0
    last_t: Optional[float] = None


def _clip_offset(x: float, y: float, bound: float) -> Tuple[float, float]:
    magnitude = math.hypot(x, y)
    if magnitude <= bound:
        return x, y

    scale = bound / magnitude
    return x * scale, y * scale


def gps_model(true_state: VehicleState, noise: GpsNoiseState, params: NoiseModelParams, t: float) -> GpsFix:
    """
    Truth plus a first-order Gauss-Markov offset per axis, drawn from the stationary distribution at the first
    fix. The offset magnitude is clipped to ``gps_bound``.

    :param noise: generator and offset memory, updated in place
    :return: GpsFix
    """
    sigma = params.gps_sigma

    if sigma > 0.0:
        if noise.last_t is None:
            noise.offset_x, noise.offset_y = noise.rng.normal(0.0, sigma, 2)
        else:
            phi = math.exp(-max(t - noise.last_t, 0.0) / params.gps_correlation_time)
            drive = sigma * math.sqrt(1.0 - phi * phi)
            wx, wy = noise.rng.normal(0.0, 1.0, 2)
            noise.offset_x = phi * noise.offset_x + drive * wx
            noise.offset_y = phi * noise.offset_y + drive * wy

        noise.offset_x, noise.offset_y = _clip_offset(noise.offset_x, noise.offset_y, params.gps_bound)

    noise.last_t = t

    heading = true_state.psi
    if params.gps_heading_sigma > 0.0:
        heading += noise.rng.normal(0.0, params.gps_heading_sigma)

    speed = true_state.speed
    if params.gps_speed_sigma > 0.0:
        speed = max(speed + noise.rng.normal(0.0, params.gps_speed_sigma), 0.0)

    return GpsFix(x=true_state.x + noise.offset_x, y=true_state.y + noise.offset_y, heading=wrap_angle(heading),
                  speed=speed, t=t)


@dataclass
class CompassNoiseState:
    rng: np.random.Generator
    burst_until: float = -math.inf
    burst_sign: float = 1.0


def compass_model(true_state: VehicleState, noise: CompassNoiseState, params: NoiseModelParams,
                  t: float) -> CompassReading:
    """
    Heading plus bias, white noise and occasional interference bursts of fixed magnitude.
    """
    heading = true_state.psi + params.compass_bias

    if params.compass_burst_probability > 0.0 and t >= noise.burst_until:
        if noise.rng.random() < params.compass_burst_probability:
            noise.burst_until = t + params.compass_burst_duration
            noise.burst_sign = 1.0 if noise.rng.random() < 0.5 else -1.0

    if t < noise.burst_until:
        heading += noise.burst_sign * params.compass_burst_magnitude

    if params.compass_sigma > 0.0:
        heading += noise.rng.normal(0.0, params.compass_sigma)

    return CompassReading(heading=wrap_angle(heading), t=t)


def heading_fusion(compass_heading: float, gps_heading: float) -> Tuple[float, bool]:
    """
    Circular mean of the compass and GPS headings.

    :return: (fused heading in (-pi, pi], degenerate); antipodal inputs return the GPS heading with the flag set
    """
    sx = math.cos(compass_heading) + math.cos(gps_heading)
    sy = math.sin(compass_heading) + math.sin(gps_heading)

    if math.hypot(sx, sy) < 1e-12:
        return wrap_angle(gps_heading), True

    return wrap_angle(math.atan2(sy, sx)), False


# ---------------------------------------------------------------------------------------------------------- #
# Radar and lidar
# ---------------------------------------------------------------------------------------------------------- #
def radar_model(ego: VehicleState, lead: VehicleState, params: NoiseModelParams, t: float,
                rng: np.random.Generator, ego_length: float, lead_length: float) -> RadarTrack:
    """
    Bumper-to-bumper range and closing speed of the lead along the ego heading.

    :param ego_length: ego vehicle length (m); the range is measured from its front bumper
    :param lead_length: lead vehicle length (m); the range is measured to its rear bumper
    :return: RadarTrack, invalid when the lead is outside the field of view or beyond the maximum range
    """
    dx, dy = lead.x - ego.x, lead.y - ego.y
    bearing = wrap_angle(math.atan2(dy, dx) - ego.psi)
    range_ = math.hypot(dx, dy) - 0.5 * (ego_length + lead_length)

    c_e, s_e = math.cos(ego.psi), math.sin(ego.psi)
    c_l, s_l = math.cos(lead.psi), math.sin(lead.psi)
    rel_vx = (lead.vx * c_l - lead.vy * s_l) - (ego.vx * c_e - ego.vy * s_e)
    rel_vy = (lead.vx * s_l + lead.vy * c_l) - (ego.vx * s_e + ego.vy * c_e)
    range_rate = rel_vx * c_e + rel_vy * s_e

    if params.radar_range_sigma > 0.0:
        range_ += rng.normal(0.0, params.radar_range_sigma)
    if params.radar_rate_sigma > 0.0:
        range_rate += rng.normal(0.0, params.radar_rate_sigma)

    valid = abs(bearing) <= params.radar_fov and 0.0 < range_ <= params.radar_max_range
    return RadarTrack(range=range_, range_rate=range_rate, valid=valid, t=t)


def lidar_model(ego: VehicleState, world_objects: Iterable[WorldObject], params: NoiseModelParams, t: float,
                rng: np.random.Generator) -> List[LidarObject]:
    """
    Objects within lidar range and field of view, in the ego frame with small position noise.
    """
    detected = []
    for obj in world_objects:
        x, y = to_ego_frame(ego.x, ego.y, ego.psi, obj.x, obj.y)

        if math.hypot(x, y) > params.lidar_range or abs(math.atan2(y, x)) > params.lidar_fov:
            continue

        if params.lidar_sigma > 0.0:
            nx, ny = rng.normal(0.0, params.lidar_sigma, 2)
            x, y = x + nx, y + ny

        detected.append(LidarObject(x=x, y=y, t=t))

    return detected


# ---------------------------------------------------------------------------------------------------------- #
# Suite
# ---------------------------------------------------------------------------------------------------------- #
def sample_period(rate: float, dt_plant: float) -> int:
    """
    Sensor period in plant steps.
    """
    period = int(round(1.0 / (rate * dt_plant)))
    if period < 1:
        raise ConfigurationError(f"Sensor rate {rate} Hz exceeds the plant rate.")
    return period


@dataclass
class SensorSuite:
    """
    All sensors of one vehicle with their latest readings. ``step`` samples every sensor that is due at the
    given plant step.

    :param params: noise and rate parameters
    :param ego_length: length of the carrying vehicle (m)
    :param lead_length: length of the tracked lead, if any (m)
    :param dt_plant: plant step (s)
    :param seed_sequence: parent seed, spawned into one child per sensor
    """

    params: NoiseModelParams
    ego_length: float
    lead_length: Optional[float] = None
    dt_plant: float = 0.001
    seed_sequence: Optional[np.random.SeedSequence] = None
    gps: Optional[GpsFix] = field(default=None, init=False)
    compass: Optional[CompassReading] = field(default=None, init=False)
    radar: Optional[RadarTrack] = field(default=None, init=False)
    lidar: List[LidarObject] = field(default_factory=list, init=False)

    def __post_init__(self):
        seeds = (self.seed_sequence or np.random.SeedSequence(self.params.seed)).spawn(4)
        gps_rng, compass_rng, self._radar_rng, self._lidar_rng = (np.random.default_rng(s) for s in seeds)

        self._gps_noise = GpsNoiseState(rng=gps_rng)
        self._compass_noise = CompassNoiseState(rng=compass_rng)

        self.periods = {"gps": sample_period(self.params.gps_rate, self.dt_plant),
                        "compass": sample_period(self.params.compass_rate, self.dt_plant),
                        "radar": sample_period(self.params.radar_rate, self.dt_plant),
                        "lidar": sample_period(self.params.lidar_rate, self.dt_plant)}

    def step(self, plant_step: int, t: float, ego: VehicleState, lead: VehicleState = None,
             world_objects: Iterable[WorldObject] = ()):
        if plant_step % self.periods["gps"] == 0:
            self.gps = gps_model(ego, self._gps_noise, self.params, t)

        if plant_step % self.periods["compass"] == 0:
            self.compass = compass_model(ego, self._compass_noise, self.params, t)

        if lead is not None and plant_step % self.periods["radar"] == 0:
            self.radar = radar_model(ego, lead, self.params, t, self._radar_rng, self.ego_length,
                                     self.lead_length if self.lead_length is not None else self.ego_length)

        if plant_step % self.periods["lidar"] == 0:
            self.lidar = lidar_model(ego, world_objects, self.params, t, self._lidar_rng)

    def fused_heading(self) -> Tuple[Optional[float], bool]:
        """
        Compass/GPS circular mean, or whichever of the two is available.

        :return: (heading, degenerate)
        """
        gps = self.gps.heading if self.gps is not None and self.gps.valid else None
        compass = self.compass.heading if self.compass is not None and self.compass.valid else None

        if gps is None or compass is None:
            return (gps if gps is not None else compass), False

        return heading_fusion(compass, gps)
