"""
Multi-rate co-simulation of a scenario: plant and steering column at the plant rate, sensors at their own rates,
controllers at the control rate with their outputs held in between, and the lead's V2V broadcasts travelling through
the impaired channel and the UDP to CAN bridge.
"""
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.lcv_auto.actuation import (ControlCommand, ServoState, SteeringPlantState, longitudinal_actuation,
                                    plant_inputs, steering_pi, steering_plant, steering_wheel_angle)
from src.lcv_auto.comms import Channel, Transmission, V2VDecoder, V2VMessage, can_to_udp, encode_v2v, udp_to_can
from src.lcv_auto.dynamics import PlantInputs, VehicleState, integrate_step, select_gear, with_accelerations
from src.lcv_auto.exceptions import DegenerateGeometryError, FramingError, MappingError, NumericalDivergenceError
from src.lcv_auto.guidance import (PidState, WaypointPath, acc_control, bearing_error, cacc_control, cc_control,
                                   is_stale, obstacle_correction, path_follow_pid, select_waypoint)
from src.lcv_auto.metrics import summarise
from src.lcv_auto.outputs import emit_outputs
from src.lcv_auto.parameters import VehicleSetup
from src.lcv_auto.scenario import LongitudinalMode, Scenario, ScenarioKind
from src.lcv_auto.sensing import SensorSuite

logger = logging.getLogger(__name__)

BASE_COLUMNS = (
    "t", "x", "y", "psi", "vx", "vy", "r", "omega_f", "omega_r", "ax", "ay", "speed", "beta",
    "gear", "a_desired", "throttle", "brake_duty", "steering_command", "authority", "driver_pedal",
    "steer_target", "road_wheel_angle", "steering_wheel_angle", "steering_wheel_target",
    "gps_x", "gps_y", "gps_speed", "gps_heading", "compass_heading", "fused_heading", "heading_degenerate",
)
PATH_COLUMNS = (
    "dr_x", "dr_y", "target_index", "target_x", "target_y", "bearing_error", "path_steer", "obstacle_correction",
    "lidar_objects", "path_complete",
)
CACC_COLUMNS = (
    "lead_x", "lead_y", "lead_psi", "lead_speed", "lead_ax", "lead_v_ref", "lead_throttle", "lead_brake_duty",
    "radar_range", "radar_rate", "radar_valid", "control_mode", "v2v_accel", "v2v_age", "v2v_stale",
    "delta_v", "spacing", "desired_spacing", "spacing_error", "channel_in_flight",
)


def trace_columns(kind: ScenarioKind) -> Tuple[str, ...]:
    """
    Trace schema of a scenario kind.
    """
    if kind in (ScenarioKind.DOUBLE_LANE_CHANGE, ScenarioKind.WAYPOINT_FOLLOW):
        return BASE_COLUMNS + PATH_COLUMNS
    if kind is ScenarioKind.CACC_FOLLOW:
        return BASE_COLUMNS + CACC_COLUMNS
    return BASE_COLUMNS


class RunStatus(str, Enum):
    COMPLETED = "completed"
    PATH_COMPLETE = "path-complete"
    DIVERGED = "diverged"


@dataclass
class RunResult:
    """
    Outcome of one run. ``passed`` is the kind-specific verdict, always False for a diverged run.
    """

    name: str
    kind: str
    seed: int
    status: RunStatus
    end_time: float
    rows: int
    passed: bool = False
    message: str = ""
    metrics: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        summary = asdict(self)
        summary["status"] = self.status.value
        return summary


class _Vehicle:
    """
    Runtime state of one simulated vehicle: plant, steering column, servo, controller memory and sensors.
    """

    def __init__(self, setup: VehicleSetup, state: VehicleState, sensors: SensorSuite):
        self.setup = setup
        self.state = state
        self.sensors = sensors
        self.servo = ServoState()
        self.steering = SteeringPlantState()
        self.speed_pid = PidState()
        self.command = ControlCommand()
        self.gear = select_gear(setup.params, state.speed)
        self.inputs = PlantInputs(gear=self.gear)

    def refresh_accelerations(self):
        self.state = with_accelerations(self.state, self.inputs, self.setup.params)

    def steer(self, target: float, dt: float) -> float:
        motor = steering_pi(target, self.steering.angle, self.servo, self.setup.actuation, dt)
        return min(max(motor, -1.0), 1.0)

    def actuate(self, a_desired: float, motor: float, grade: float, driver_pedal: float = 0.0):
        self.gear = select_gear(self.setup.params, self.state.speed)
        command = longitudinal_actuation(a_desired, self.state, self.setup.actuation, self.setup.params,
                                         driver_pedal=driver_pedal, gear=self.gear, grade=grade)
        self.command = replace(command, steering_command=motor)

    def advance(self, dt: float, grade: float, step_index: int):
        angle = steering_plant(self.command.steering_command, self.steering, self.setup.actuation, dt)
        self.inputs = plant_inputs(self.command, angle, self.setup.params, self.setup.actuation, self.gear, grade)
        self.state = integrate_step(self.state, self.inputs, self.setup.params, dt, step_index=step_index)


class SimulationEngine:
    """
    Deterministic scenario runner.

    Usage: ``SimulationEngine().fit(scenario).run()``, then ``trace`` and ``result`` hold the outcome.
    """

    def __init__(self):
        self.scenario: Optional[Scenario] = None
        self.verbose = False
        self.trace: Optional[pd.DataFrame] = None
        self.result: Optional[RunResult] = None

    def fit(self, scenario: Scenario, verbose: bool = False):
        """
        Build the vehicles, sensors, channel and controllers of a scenario.

        :param scenario: validated scenario
        :param verbose: log progress at INFO instead of DEBUG
        :return: self
        """
        self.scenario = scenario
        self.verbose = verbose
        self.trace, self.result = None, None

        ego_seeds, lead_seeds, channel_seed = np.random.SeedSequence(scenario.seed).spawn(3)

        ego_cfg = scenario.ego
        ego_params = ego_cfg.setup.params
        ego_state = VehicleState.rolling(ego_params, ego_cfg.speed, ego_cfg.x, ego_cfg.y, ego_cfg.heading)

        lead_length = scenario.lead.setup.params.length if scenario.lead is not None else None
        self.ego = _Vehicle(ego_cfg.setup, ego_state,
                            SensorSuite(scenario.noise, ego_params.length, lead_length, scenario.dt_plant, ego_seeds))

        self.lead = None
        if scenario.lead is not None:
            lead_cfg = scenario.lead
            gap = lead_cfg.gap if lead_cfg.gap is not None else \
                scenario.longitudinal.gains.desired_spacing(ego_cfg.speed)
            offset = gap + 0.5 * (ego_params.length + lead_cfg.setup.params.length)
            lead_state = VehicleState.rolling(lead_cfg.setup.params, lead_cfg.speed_profile(0.0),
                                              ego_cfg.x + offset * math.cos(ego_cfg.heading),
                                              ego_cfg.y + offset * math.sin(ego_cfg.heading), ego_cfg.heading)
            self.lead = _Vehicle(lead_cfg.setup, lead_state,
                                 SensorSuite(scenario.noise, lead_cfg.setup.params.length, None, scenario.dt_plant,
                                             lead_seeds))

        self.channel = Channel(scenario.channel, channel_seed)
        self.decoder = V2VDecoder()
        self.rejected = 0

        self.path = None
        self.path_pid = PidState()
        if scenario.path is not None:
            self.path = WaypointPath(scenario.path.points, scenario.path.switch_radius)

        self.columns = trace_columns(scenario.kind)
        self._log("Prepared %s scenario '%s' (seed %d)", scenario.kind.value, scenario.name, scenario.seed)

        return self

    def _log(self, message: str, *args):
        logger.log(logging.INFO if self.verbose else logging.DEBUG, message, *args)

    # ------------------------------------------------------------------------------------------------------ #
    # Main loop
    # ------------------------------------------------------------------------------------------------------ #
    def run(self) -> RunResult:
        """
        Run the scenario to its end, to path completion or to divergence.

        :return: RunResult, also kept with the trace on the engine
        """
        assert self.scenario is not None, "Engine has not been fit. Call fit(scenario) first."

        scenario = self.scenario
        n = scenario.steps_per_control
        rows: List[dict] = []
        status, message = RunStatus.COMPLETED, ""

        self._sense(0)

        try:
            for k in range(scenario.control_steps):
                plant_step = k * n
                rows.append(self._control(plant_step * scenario.dt_plant))

                if self.path is not None and self.path.complete and scenario.path.stop_on_complete:
                    status = RunStatus.PATH_COMPLETE
                    break

                for j in range(n):
                    i = plant_step + j
                    self.ego.advance(scenario.dt_plant, scenario.grade, i)
                    if self.lead is not None:
                        self.lead.advance(scenario.dt_plant, scenario.grade, i)
                    self._sense(i + 1)

        except NumericalDivergenceError as e:
            status, message = RunStatus.DIVERGED, str(e)
            logger.warning("Scenario '%s' diverged: %s", scenario.name, e)

        self.trace = pd.DataFrame(rows, columns=list(self.columns))
        end_time = float(self.trace["t"].iloc[-1]) if rows else 0.0

        self.result = RunResult(name=scenario.name, kind=scenario.kind.value, seed=scenario.seed, status=status,
                                end_time=end_time, rows=len(rows), message=message)
        self.result.metrics, self.result.passed = summarise(self.trace, scenario, status is RunStatus.DIVERGED)
        self.result.metrics["v2v_rejected"] = self.rejected

        self._log("Scenario '%s' %s after %.2f s (%s)", scenario.name, status.value, end_time,
                  "passed" if self.result.passed else "failed")

        return self.result

    def _sense(self, step_index: int):
        t = step_index * self.scenario.dt_plant
        lead_state = self.lead.state if self.lead is not None else None

        self.ego.sensors.step(step_index, t, self.ego.state, lead_state, self.scenario.obstacles)
        if self.lead is not None:
            self.lead.sensors.step(step_index, t, lead_state)

    def _control(self, t: float) -> dict:
        """
        One control instant: every controller samples the latest sensor readings and sets the commands held for
        the following period.

        :return: trace row
        """
        scenario = self.scenario
        dt = scenario.dt_control
        ego = self.ego

        ego.refresh_accelerations()
        row = {}

        outbox = []
        if self.lead is not None:
            self.lead.refresh_accelerations()
            row.update(self._lead_control(t))
            outbox = self._broadcast(t)

        self._receive(t, outbox)

        driver_pedal = scenario.ego.driver_pedal(t) if scenario.ego.driver_pedal is not None else 0.0
        a_desired = self._longitudinal(t, row)
        target = self._lateral(t, row)

        motor = ego.steer(target, dt)
        ego.actuate(a_desired, motor, scenario.grade, driver_pedal)

        row.update(self._base_row(t, a_desired, target))
        if self.lead is not None:
            row.update(self._spacing_row())

        return row

    # ------------------------------------------------------------------------------------------------------ #
    # Lead vehicle and V2V
    # ------------------------------------------------------------------------------------------------------ #
    def _lead_control(self, t: float) -> dict:
        scenario, lead = self.scenario, self.lead
        profile = scenario.lead.speed_profile
        gps = lead.sensors.gps

        v_ref = profile(t)
        a_desired = cc_control(v_ref, gps.speed, lead.speed_pid, scenario.longitudinal.gains, scenario.dt_control,
                               profile.slope(t))
        lead.actuate(a_desired, lead.steer(0.0, scenario.dt_control), scenario.grade)

        return {"lead_x": lead.state.x, "lead_y": lead.state.y, "lead_psi": lead.state.psi,
                "lead_speed": lead.state.speed, "lead_ax": lead.state.ax, "lead_v_ref": v_ref,
                "lead_throttle": lead.command.plant_throttle, "lead_brake_duty": lead.command.brake_duty}

    def _broadcast(self, t: float) -> List[Transmission]:
        """
        The lead's V2V message of this control period: its measured acceleration and its GPS position.
        """
        sender = self.scenario.lead.sender_id
        gps = self.lead.sensors.gps

        latitude, longitude = self.scenario.plane.to_geodetic(gps.x, gps.y)
        message = V2VMessage(acceleration=self.lead.state.ax, latitude=latitude, longitude=longitude, timestamp=t,
                             sender_id=sender)

        return [Transmission(t, sender, package) for package in encode_v2v(message)]

    def _receive(self, t: float, outbox: List[Transmission]):
        """
        Advance the channel and pass every delivered package over the CAN bus into the decoder.
        """
        mapping = self.scenario.can_mapping

        for delivery in self.channel.step(t, outbox):
            try:
                self.decoder.feed(can_to_udp(udp_to_can(delivery.payload, mapping), mapping))
            except (MappingError, FramingError) as e:
                self.rejected += 1
                logger.warning("Rejected V2V package at t=%.3f: %s", t, e)

    # ------------------------------------------------------------------------------------------------------ #
    # Ego controllers
    # ------------------------------------------------------------------------------------------------------ #
    def _longitudinal(self, t: float, row: dict) -> float:
        scenario, ego = self.scenario, self.ego
        config = scenario.longitudinal
        gains, dt = config.gains, scenario.dt_control
        speed = ego.sensors.gps.speed
        radar = ego.sensors.radar

        mode = LongitudinalMode.CC
        v2v_accel, v2v_age, stale = math.nan, math.nan, False

        if config.mode is not LongitudinalMode.CC and radar is not None and radar.valid:
            a_desired = acc_control(radar.range, radar.range_rate, speed, gains, dt)
            mode = LongitudinalMode.ACC

            if config.mode is LongitudinalMode.CACC:
                message = self.decoder.result().message
                received = message.timestamp if message is not None else None
                stale = is_stale(received, t, gains.v2v_timeout)

                if message is not None:
                    v2v_accel, v2v_age = message.acceleration, t - message.timestamp

                a_desired = cacc_control(a_desired, message.acceleration if message is not None else None, gains,
                                         stale)
                if not stale:
                    mode = LongitudinalMode.CACC
        else:
            a_desired = cc_control(config.speed_profile(t), speed, ego.speed_pid, gains, dt,
                                   config.speed_profile.slope(t))

        if self.lead is not None:
            row.update({"radar_range": radar.range if radar is not None else math.nan,
                        "radar_rate": radar.range_rate if radar is not None else math.nan,
                        "radar_valid": int(radar is not None and radar.valid),
                        "control_mode": mode.value, "v2v_accel": v2v_accel, "v2v_age": v2v_age,
                        "v2v_stale": int(stale), "channel_in_flight": self.channel.in_flight})

        return a_desired

    def _lateral(self, t: float, row: dict) -> float:
        """
        :return: road-wheel angle target (rad)
        """
        scenario, ego = self.scenario, self.ego

        if scenario.kind is ScenarioKind.OPEN_LOOP_REPLAY:
            return math.radians(scenario.replay(t)) / ego.setup.actuation.steering_ratio

        if self.path is None:
            return 0.0

        gps = ego.sensors.gps
        position = gps.propagate(t)
        heading, _ = ego.sensors.fused_heading()
        path = self.path

        bearing, path_steer = math.nan, 0.0
        if not path.complete:
            select_waypoint(position, path)

        if not path.complete and heading is not None:
            try:
                bearing = bearing_error(position, heading, path.target)
            except DegenerateGeometryError:
                bearing = self.path_pid.previous_error or 0.0
            path_steer = path_follow_pid(bearing, self.path_pid, scenario.path.gains, scenario.dt_control)

        target = obstacle_correction(path_steer, ego.sensors.lidar, gps.speed, scenario.avoidance)
        target_x, target_y = path.target

        row.update({"dr_x": position[0], "dr_y": position[1], "target_index": path.target_index,
                    "target_x": target_x, "target_y": target_y, "bearing_error": bearing, "path_steer": path_steer,
                    "obstacle_correction": target - path_steer, "lidar_objects": len(ego.sensors.lidar),
                    "path_complete": int(path.complete)})

        return target

    # ------------------------------------------------------------------------------------------------------ #
    # Trace rows
    # ------------------------------------------------------------------------------------------------------ #
    def _base_row(self, t: float, a_desired: float, target: float) -> dict:
        ego = self.ego
        state, command, sensors = ego.state, ego.command, ego.sensors
        config = ego.setup.actuation
        fused, degenerate = sensors.fused_heading()

        return {"t": t, "x": state.x, "y": state.y, "psi": state.psi, "vx": state.vx, "vy": state.vy, "r": state.r,
                "omega_f": state.omega_f, "omega_r": state.omega_r, "ax": state.ax, "ay": state.ay,
                "speed": state.speed, "beta": state.beta if state.speed > 0.0 else 0.0, "gear": ego.gear,
                "a_desired": a_desired, "throttle": command.plant_throttle, "brake_duty": command.brake_duty,
                "steering_command": command.steering_command, "authority": command.authority.value,
                "driver_pedal": command.driver_pedal, "steer_target": target,
                "road_wheel_angle": ego.steering.angle,
                "steering_wheel_angle": steering_wheel_angle(ego.steering.angle, config),
                "steering_wheel_target": steering_wheel_angle(target, config),
                "gps_x": sensors.gps.x, "gps_y": sensors.gps.y, "gps_speed": sensors.gps.speed,
                "gps_heading": sensors.gps.heading, "compass_heading": sensors.compass.heading,
                "fused_heading": fused if fused is not None else math.nan, "heading_degenerate": int(degenerate)}

    def _spacing_row(self) -> dict:
        ego, lead = self.ego.state, self.lead.state
        gains = self.scenario.longitudinal.gains

        spacing = math.hypot(lead.x - ego.x, lead.y - ego.y) - 0.5 * (self.ego.setup.params.length +
                                                                       self.lead.setup.params.length)
        desired = gains.desired_spacing(ego.speed)

        return {"delta_v": lead.speed - ego.speed, "spacing": spacing, "desired_spacing": desired,
                "spacing_error": spacing - desired}

    # ------------------------------------------------------------------------------------------------------ #
    # Files
    # ------------------------------------------------------------------------------------------------------ #
    def write_to_file(self, out_dir) -> List[Path]:
        """
        Write the trace, the metrics summary and the figures selected by the scenario's output options.

        :return: written paths
        """
        assert self.result is not None, "Nothing to write. Call run() first."

        written = emit_outputs(self.trace, self.result, self.scenario.output, out_dir, self.scenario)
        for path in written:
            self._log("Wrote %s", path)

        return written


def run_scenario(scenario: Scenario, verbose: bool = False) -> Tuple[pd.DataFrame, RunResult]:
    """
    Run a scenario.

    :return: (trace, result)
    """
    engine = SimulationEngine().fit(scenario, verbose=verbose)
    result = engine.run()
    return engine.trace, result
