"""
Run artefacts: the CSV trace, the JSON metrics summary and one SVG file per figure.

Figures are built with the matplotlib object API so that independent runs can plot from separate threads, and the
SVG writer is pinned (fixed hash salt, no date) so that identical traces give identical files.
"""
import json
import logging
import math
from pathlib import Path
from typing import Dict, List

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from src.lcv_auto.exceptions import OutputError, SchemaError

logger = logging.getLogger(__name__)

matplotlib.rcParams["svg.hashsalt"] = "lcv-auto"

TRACE_FILE = "trace.csv"
METRICS_FILE = "metrics.json"
SVG_METADATA = {"Date": None}


# ---------------------------------------------------------------------------------------------------------- #
# Tables
# ---------------------------------------------------------------------------------------------------------- #
def write_trace(trace: pd.DataFrame, path) -> Path:
    """
    Comma-delimited, header row, full float precision, ``\\n`` line ends.
    """
    path = Path(path)
    try:
        trace.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    except OSError as e:
        raise OutputError(f"Cannot write trace ({e.strerror})", path) from e
    return path


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def write_metrics(summary: Dict[str, object], path) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="\n") as f:
            json.dump(_json_safe(summary), f, indent=4, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OutputError(f"Cannot write metrics ({e.strerror})", path) from e
    return path


# ---------------------------------------------------------------------------------------------------------- #
# Figures
# ---------------------------------------------------------------------------------------------------------- #
def _time_figure(trace: pd.DataFrame, series: Dict[str, str], ylabel: str, title: str) -> Figure:
    fig = Figure(figsize=(8, 4.5))
    ax = fig.add_subplot()

    for column, label in series.items():
        if column in trace.columns:
            ax.plot(trace["t"].to_numpy(float), trace[column].to_numpy(float), label=label)

    ax.set_xlabel("time [s]")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True)
    if len(series) > 1:
        ax.legend()

    fig.tight_layout()
    return fig


def plot_trajectory(trace: pd.DataFrame, waypoints=None, corridor=None, arrows: int = 12) -> Figure:
    """
    Driven path in the local plane with arrows along the direction of travel. The first line of the first axes
    holds the ego path.

    :param waypoints: optional (N, 2) reference waypoints
    :param corridor: optional DlcCorridor drawn as its bound segments
    :param arrows: number of direction arrows
    """
    fig = Figure(figsize=(8, 6))
    ax = fig.add_subplot()

    x, y = trace["x"].to_numpy(float), trace["y"].to_numpy(float)
    ax.plot(x, y, color="tab:blue", label="ego")

    if len(x) >= 2:
        idx = np.unique(np.linspace(0, len(x) - 2, min(arrows, len(x) - 1)).astype(int))
        dx, dy = x[idx + 1] - x[idx], y[idx + 1] - y[idx]
        norm = np.hypot(dx, dy)
        moving = norm > 0.0

        if np.any(moving):
            size = 0.04 * max(np.ptp(x), np.ptp(y), 1.0)
            ax.quiver(x[idx][moving], y[idx][moving], size * dx[moving] / norm[moving],
                      size * dy[moving] / norm[moving], color="tab:blue", angles="xy", scale_units="xy", scale=1,
                      width=0.004)

    if "lead_x" in trace.columns:
        ax.plot(trace["lead_x"].to_numpy(float), trace["lead_y"].to_numpy(float), color="tab:orange", label="lead")

    if waypoints is not None:
        points = np.asarray(waypoints, dtype=float)
        ax.plot(points[:, 0], points[:, 1], linestyle="none", marker=".", color="grey", label="waypoints")

    if corridor is not None:
        for start, end, lower, upper in zip(corridor.start, corridor.end, corridor.lower, corridor.upper):
            ax.plot([start, end], [lower, lower], color="red", linewidth=1)
            ax.plot([start, end], [upper, upper], color="red", linewidth=1)

    ax.set_xlabel("x (east) [m]")
    ax.set_ylabel("y (north) [m]")
    ax.set_title("Trajectory")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True)
    ax.legend()

    fig.tight_layout()
    return fig


def plot_velocity_difference(trace: pd.DataFrame) -> Figure:
    fig = Figure(figsize=(8, 6))
    top, bottom = fig.subplots(2, 1, sharex=True)
    t = trace["t"].to_numpy(float)

    top.plot(t, trace["delta_v"].to_numpy(float))
    top.axhline(0.0, color="grey", linewidth=0.8)
    top.set_ylabel("v_lead - v_ego [m/s]")
    top.set_title("Velocity difference between lead and ego vehicle")
    top.grid(True)

    bottom.plot(t, trace["spacing_error"].to_numpy(float), color="tab:green")
    bottom.set_ylabel("spacing error [m]")
    bottom.set_xlabel("time [s]")
    bottom.grid(True)

    fig.tight_layout()
    return fig


def plot_steering(trace: pd.DataFrame) -> Figure:
    return _time_figure(trace, {"steering_wheel_angle": "measured", "steering_wheel_target": "target"},
                        "steering-wheel angle [deg]", "Steering-wheel angle")


def plot_yaw_rate(trace: pd.DataFrame) -> Figure:
    return _time_figure(trace, {"r": "yaw rate"}, "yaw rate [rad/s]", "Yaw rate")


def plot_lateral_acceleration(trace: pd.DataFrame) -> Figure:
    return _time_figure(trace, {"ay": "lateral acceleration"}, "a_y [m/s^2]", "Lateral acceleration")


def figures(trace: pd.DataFrame, scenario=None) -> Dict[str, Figure]:
    """
    Every figure that applies to the trace's columns, keyed by file stem.
    """
    waypoints = scenario.path.points if scenario is not None and scenario.path is not None else None
    corridor = scenario.corridor if scenario is not None else None

    built = {"trajectory": plot_trajectory(trace, waypoints, corridor),
             "steering": plot_steering(trace),
             "yaw_rate": plot_yaw_rate(trace),
             "lateral_acceleration": plot_lateral_acceleration(trace)}

    if "delta_v" in trace.columns:
        built["velocity_difference"] = plot_velocity_difference(trace)

    return built


def write_figures(trace: pd.DataFrame, out_dir, scenario=None) -> List[Path]:
    out_dir = Path(out_dir)
    written = []

    for stem, fig in figures(trace, scenario).items():
        path = out_dir / f"{stem}.svg"
        try:
            fig.savefig(path, format="svg", metadata=SVG_METADATA)
        except OSError as e:
            raise OutputError(f"Cannot write figure ({e.strerror})", path) from e
        written.append(path)

    return written


# ---------------------------------------------------------------------------------------------------------- #
# Entry points
# ---------------------------------------------------------------------------------------------------------- #
def emit_outputs(trace: pd.DataFrame, result, options, out_dir, scenario=None) -> List[Path]:
    """
    Write the artefacts selected by ``options`` into ``out_dir``, creating it if needed.

    :param trace: run trace
    :param result: RunResult of the run
    :param options: OutputOptions
    :param scenario: optional scenario, adds waypoints and corridor to the trajectory figure
    :return: written paths
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"Cannot create output directory ({e.strerror})", out_dir) from e

    written = []
    if options.csv:
        written.append(write_trace(trace, out_dir / TRACE_FILE))
    if options.metrics:
        written.append(write_metrics(result.to_dict(), out_dir / METRICS_FILE))
    if options.plots:
        written += write_figures(trace, out_dir, scenario)

    logger.debug("Wrote %d file(s) to %s", len(written), out_dir)
    return written


def replot(csv_path, out_dir=None) -> List[Path]:
    """
    Re-create the figures of a written trace.

    :param out_dir: defaults to the directory of the CSV file
    """
    csv_path = Path(csv_path)
    try:
        trace = pd.read_csv(csv_path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise OutputError(f"Cannot read trace ({e})", csv_path) from e

    missing = [c for c in ("t", "x", "y") if c not in trace.columns]
    if missing:
        raise SchemaError(f"Trace {csv_path} lacks column(s) {', '.join(missing)}.")

    out_dir = Path(out_dir) if out_dir is not None else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)

    return write_figures(trace, out_dir)
