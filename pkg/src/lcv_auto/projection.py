"""
Planar geometry shared by sensing, guidance and evaluation: angle wrapping, ego-frame transforms, vehicle
footprints and the equirectangular local tangent plane used for latitude/longitude waypoints.
"""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.lcv_auto.exceptions import InputDomainError

EARTH_RADIUS = 6378137.0  # m, WGS-84 equatorial


def wrap_angle(angle: float) -> float:
    """
    Wrap to (-pi, pi].
    """
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


def to_ego_frame(ego_x: float, ego_y: float, ego_psi: float, x: float, y: float) -> Tuple[float, float]:
    """
    World point to ego frame (x forward, y left).
    """
    dx, dy = x - ego_x, y - ego_y
    c, s = math.cos(ego_psi), math.sin(ego_psi)
    return c * dx + s * dy, -s * dx + c * dy


def to_world_frame(ego_x: float, ego_y: float, ego_psi: float, x: float, y: float) -> Tuple[float, float]:
    """
    Inverse of ``to_ego_frame``.
    """
    c, s = math.cos(ego_psi), math.sin(ego_psi)
    return ego_x + c * x - s * y, ego_y + s * x + c * y


def footprint_corners(x, y, psi, length: float, width: float) -> np.ndarray:
    """
    Corners of the length x width rectangle centred on (x, y) and rotated by psi.

    Accepts scalars or equally shaped arrays of poses.

    :return: array of shape (..., 4, 2): front-left, front-right, rear-right, rear-left
    """
    x, y, psi = np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(psi, dtype=float)
    half_l, half_w = 0.5 * length, 0.5 * width

    local = np.array([[half_l, half_w], [half_l, -half_w], [-half_l, -half_w], [-half_l, half_w]])
    c, s = np.cos(psi)[..., None], np.sin(psi)[..., None]

    cx = x[..., None] + c * local[:, 0] - s * local[:, 1]
    cy = y[..., None] + s * local[:, 0] + c * local[:, 1]

    return np.stack([cx, cy], axis=-1)


@dataclass(frozen=True)
class LocalTangentPlane:
    """
    Equirectangular projection about an origin, x east and y north in metres.
    """

    lat0: float
    lon0: float

    def __post_init__(self):
        if not (abs(self.lat0) <= 90.0 and abs(self.lon0) <= 180.0):
            raise InputDomainError(f"Origin ({self.lat0}, {self.lon0}) is not a geographic position.")

        if abs(self.lat0) > 89.0:
            raise InputDomainError("Equirectangular projection is undefined near the poles.")

    def to_local(self, lat, lon):
        """
        :return: (x, y) in metres; accepts scalars or arrays
        """
        lat, lon = np.asarray(lat, dtype=float), np.asarray(lon, dtype=float)
        x = np.radians(lon - self.lon0) * EARTH_RADIUS * math.cos(math.radians(self.lat0))
        y = np.radians(lat - self.lat0) * EARTH_RADIUS

        if x.ndim == 0:
            return float(x), float(y)
        return x, y

    def to_geodetic(self, x, y):
        """
        :return: (latitude, longitude) in degrees; accepts scalars or arrays
        """
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        lat = self.lat0 + np.degrees(y / EARTH_RADIUS)
        lon = self.lon0 + np.degrees(x / (EARTH_RADIUS * math.cos(math.radians(self.lat0))))

        if lat.ndim == 0:
            return float(lat), float(lon)
        return lat, lon
