"""
Evaluation of run traces: the double-lane-change corridor check, CACC following metrics, path-following metrics
and the per-kind summary stored with every run.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from src.lcv_auto.exceptions import SchemaError
from src.lcv_auto.projection import footprint_corners
from src.lcv_auto.scenario import DlcCorridor, Scenario, ScenarioKind

logger = logging.getLogger(__name__)

SETTLING_THRESHOLD = 0.2  # m/s


def _require(trace: pd.DataFrame, columns: Iterable[str], purpose: str):
    missing = [c for c in columns if c not in trace.columns]
    if missing:
        raise SchemaError(f"Trace lacks column(s) {', '.join(missing)} needed for {purpose}.")


def _finite_or_none(value) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


# ---------------------------------------------------------------------------------------------------------- #
# Double lane change
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class DlcEvaluation:
    """
    :param passed: no footprint corner left the corridor and the vehicle reached the corridor end
    :param max_exceedance: largest lateral distance of a corner outside its bounds (m)
    :param worst_time: time of the largest exceedance (s), None without exceedance
    :param worst_station: longitudinal station of that corner (m), None without exceedance
    :param completed: a footprint corner reached the corridor end
    """

    passed: bool
    max_exceedance: float
    worst_time: Optional[float] = None
    worst_station: Optional[float] = None
    completed: bool = False


def evaluate_dlc(trace: pd.DataFrame, corridor: DlcCorridor, length: float = 4.8,
                 width: float = 2.0) -> DlcEvaluation:
    """
    Check the vehicle outline against the corridor at every sample. The corridor station is the global x
    coordinate and its lateral coordinate is y; corners outside the corridor's station range are not checked.

    :param trace: run trace with pose columns t, x, y, psi
    :param corridor: lateral bounds per station
    :param length: vehicle length (m)
    :param width: vehicle width (m)
    :return: DlcEvaluation
    """
    _require(trace, ("t", "x", "y", "psi"), "the corridor check")

    if trace.empty:
        return DlcEvaluation(passed=True, max_exceedance=0.0)

    corners = footprint_corners(trace["x"].to_numpy(float), trace["y"].to_numpy(float),
                                trace["psi"].to_numpy(float), length, width)
    stations, lateral = corners[..., 0], corners[..., 1]

    lower, upper = corridor.bounds(stations)
    with np.errstate(invalid="ignore"):
        exceedance = np.fmax(lower - lateral, lateral - upper)
    exceedance = np.clip(np.nan_to_num(exceedance, nan=0.0), 0.0, None)

    worst = float(exceedance.max())
    completed = bool(np.any(stations >= corridor.station_range[1]))

    if worst > 0.0:
        row, corner = np.unravel_index(int(np.argmax(exceedance)), exceedance.shape)
        return DlcEvaluation(passed=False, max_exceedance=worst, worst_time=float(trace["t"].iloc[row]),
                             worst_station=float(stations[row, corner]), completed=completed)

    return DlcEvaluation(passed=completed, max_exceedance=0.0, completed=completed)


# ---------------------------------------------------------------------------------------------------------- #
# CACC
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class CaccMetrics:
    """
    :param settling_time: first time after which |delta_v| stays below the threshold, None if it never does
    :param stale_samples: control samples that ran ACC because no fresh lead acceleration was available
    """

    peak_abs_delta_v: float
    settling_time: Optional[float]
    peak_spacing_error: float
    rms_spacing_error: float
    stale_samples: int = 0


def settling_time(t, values, threshold: float) -> Optional[float]:
    """
    First sample time after which ``|values|`` stays below ``threshold``.
    """
    t, values = np.asarray(t, dtype=float), np.asarray(values, dtype=float)
    if len(t) == 0:
        return None

    above = np.flatnonzero(~(np.abs(values) < threshold))
    if len(above) == 0:
        return float(t[0])

    if above[-1] == len(t) - 1:
        return None

    return float(t[above[-1] + 1])


def cacc_metrics(trace: pd.DataFrame, threshold: float = SETTLING_THRESHOLD) -> CaccMetrics:
    """
    Following quality from the delta_v (lead minus ego speed) and spacing_error columns.
    """
    _require(trace, ("t", "delta_v", "spacing_error"), "the CACC metrics")

    if trace.empty:
        return CaccMetrics(0.0, None, 0.0, 0.0, 0)

    delta_v = trace["delta_v"].to_numpy(float)
    spacing_error = trace["spacing_error"].to_numpy(float)
    stale = int(trace["v2v_stale"].sum()) if "v2v_stale" in trace.columns else 0

    return CaccMetrics(peak_abs_delta_v=float(np.max(np.abs(delta_v))),
                       settling_time=settling_time(trace["t"], delta_v, threshold),
                       peak_spacing_error=float(np.max(np.abs(spacing_error))),
                       rms_spacing_error=float(np.sqrt(np.mean(spacing_error ** 2))),
                       stale_samples=stale)


# ---------------------------------------------------------------------------------------------------------- #
# Path following
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class PathMetrics:
    completion_time: Optional[float]
    max_deviation: float
    rms_deviation: float


def polyline_distance(points, polyline) -> np.ndarray:
    """
    Distance of every point to the nearest segment of the polyline.

    :param points: (N, 2)
    :param polyline: (M, 2), M >= 2
    :return: (N,) distances
    """
    points, polyline = np.asarray(points, dtype=float), np.asarray(polyline, dtype=float)
    a, b = polyline[:-1], polyline[1:]
    ab = b - a

    ap = points[:, None, :] - a[None, :, :]
    u = np.clip(np.sum(ap * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
    nearest = a[None, :, :] + u[..., None] * ab[None, :, :]

    return np.min(np.linalg.norm(points[:, None, :] - nearest, axis=-1), axis=1)


def path_metrics(trace: pd.DataFrame, polyline) -> PathMetrics:
    """
    Completion time and deviation of the driven path from the waypoint polyline.
    """
    _require(trace, ("t", "x", "y"), "the path metrics")

    if trace.empty:
        return PathMetrics(None, 0.0, 0.0)

    distance = polyline_distance(trace[["x", "y"]].to_numpy(float), polyline)

    completion = None
    if "path_complete" in trace.columns:
        done = np.flatnonzero(trace["path_complete"].to_numpy() > 0)
        if len(done):
            completion = float(trace["t"].iloc[done[0]])

    return PathMetrics(completion_time=completion, max_deviation=float(distance.max()),
                       rms_deviation=float(np.sqrt(np.mean(distance ** 2))))


# ---------------------------------------------------------------------------------------------------------- #
# Summary
# ---------------------------------------------------------------------------------------------------------- #
def _peaks(trace: pd.DataFrame) -> Dict[str, Optional[float]]:
    peaks = {}
    for column in ("r", "ay", "beta", "steering_wheel_angle", "speed"):
        peaks[f"peak_abs_{column}"] = _finite_or_none(trace[column].abs().max()) if not trace.empty else 0.0
    return peaks


def summarise(trace: pd.DataFrame, scenario: Scenario, diverged: bool = False) -> Tuple[Dict[str, object], bool]:
    """
    Kind-specific metrics and verdict of a run.

    :return: (metrics, passed)
    """
    metrics: Dict[str, object] = _peaks(trace)
    passed = True

    if scenario.kind is ScenarioKind.DOUBLE_LANE_CHANGE:
        params = scenario.ego.setup.params
        evaluation = evaluate_dlc(trace, scenario.corridor, params.length, params.width)
        metrics.update({f"dlc_{k}": v for k, v in asdict(evaluation).items()})
        passed = evaluation.passed

    if scenario.kind in (ScenarioKind.DOUBLE_LANE_CHANGE, ScenarioKind.WAYPOINT_FOLLOW):
        follow = path_metrics(trace, scenario.path.points)
        metrics.update({f"path_{k}": v for k, v in asdict(follow).items()})
        if scenario.kind is ScenarioKind.WAYPOINT_FOLLOW:
            passed = follow.completion_time is not None

    if scenario.kind is ScenarioKind.CACC_FOLLOW:
        following = cacc_metrics(trace)
        metrics.update({f"cacc_{k}": v for k, v in asdict(following).items()})
        passed = following.settling_time is not None

    if diverged:
        passed = False

    logger.debug("Metrics of '%s': %s", scenario.name, metrics)
    return metrics, passed
