"""
Lower-level by-wire actuation: throttle through the inverse engine map, brake through the duty-cycle map,
the PI steering position servo and the steering column it drives.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum

from scipy.optimize import brentq

from src.lcv_auto.dynamics import PlantInputs, VehicleState, engine_speed, powertrain_torque, resistive_forces
from src.lcv_auto.exceptions import InputDomainError
from src.lcv_auto.parameters import ActuationConfig, VehicleParameters

logger = logging.getLogger(__name__)

INVERSE_MAP_TOLERANCE = 1e-3


class Authority(str, Enum):
    AUTOMATED = "automated"
    DRIVER = "driver-override"


@dataclass(frozen=True)
class ControlCommand:
    """
    Actuator commands of one control period.

    :param throttle: automated throttle fraction in [0, 1]
    :param brake_duty: automated brake PWM duty cycle in percent
    :param steering_command: normalised steering motor command in [-1, 1]
    :param authority: who drives the pedals
    :param driver_pedal: driver throttle pedal, only used under driver authority
    """

    throttle: float = 0.0
    brake_duty: float = 0.0
    steering_command: float = 0.0
    authority: Authority = Authority.AUTOMATED
    driver_pedal: float = 0.0

    def __post_init__(self):
        if self.throttle > 0.0 and self.brake_duty > 0.0:
            raise InputDomainError("Throttle and brake cannot be commanded together.")

        if not (0.0 <= self.throttle <= 1.0 and 0.0 <= self.brake_duty <= 100.0
                and -1.0 <= self.steering_command <= 1.0):
            raise InputDomainError(f"Command outside actuator range: {self}")

    @property
    def plant_throttle(self) -> float:
        return self.driver_pedal if self.authority is Authority.DRIVER else self.throttle


# ---------------------------------------------------------------------------------------------------------- #
# Longitudinal
# ---------------------------------------------------------------------------------------------------------- #
def brake_duty(a_desired: float, config: ActuationConfig) -> float:
    """
    Affine deceleration to duty-cycle map, clamped to [0, 100] %.
    """
    return min(max(config.brake_slope * abs(a_desired) + config.brake_offset, 0.0), 100.0)


def brake_torque(duty: float, config: ActuationConfig) -> float:
    return duty / 100.0 * config.max_brake_torque


def required_wheel_force(a_desired: float, state: VehicleState, params: VehicleParameters,
                         grade: float = 0.0) -> float:
    """
    Wheel force needed for ``a_desired`` against the current resistive forces.
    """
    res = resistive_forces(params, state.speed, grade)
    return params.mass * a_desired + res.aero + res.rolling + res.grade


def wheel_force(params: VehicleParameters, throttle: float, omega_driven: float, gear: int) -> float:
    rpm = engine_speed(params, omega_driven, gear)
    return powertrain_torque(params, throttle, rpm, gear) / params.wheel_radius


def inverse_engine_map(params: VehicleParameters, force: float, omega_driven: float, gear: int,
                       tolerance: float = INVERSE_MAP_TOLERANCE) -> float:
    """
    Throttle whose wheel force reaches ``force`` at the current engine speed, within ``tolerance`` above the
    exact root. Returns full throttle when the request is out of reach.

    :param force: requested driven-axle force (N)
    :param omega_driven: driven-axle speed (rad/s)
    :param gear: engaged gear
    :return: throttle fraction in [0, 1]
    """
    if wheel_force(params, 0.0, omega_driven, gear) >= force:
        return 0.0

    if wheel_force(params, 1.0, omega_driven, gear) < force:
        return 1.0

    throttle = brentq(lambda u: wheel_force(params, u, omega_driven, gear) - force, 0.0, 1.0, xtol=tolerance)
    if wheel_force(params, throttle, omega_driven, gear) < force:
        throttle = min(throttle + tolerance, 1.0)

    return throttle


def longitudinal_actuation(a_desired: float, state: VehicleState, config: ActuationConfig,
                           params: VehicleParameters, driver_pedal: float = 0.0, gear: int = 1,
                           grade: float = 0.0) -> ControlCommand:
    """
    Route the desired acceleration to either throttle or brake.

    :param a_desired: desired acceleration (m/s^2)
    :param state: current vehicle state
    :param config: actuator constants
    :param params: plant constants, for the inverse engine map
    :param driver_pedal: driver throttle pedal; any positive value hands authority to the driver
    :param gear: engaged gear
    :param grade: road grade (rad)
    :return: ControlCommand with the steering command left at zero
    """
    if not math.isfinite(a_desired):
        raise InputDomainError(f"Non-finite desired acceleration {a_desired}.")

    if driver_pedal > 0.0:
        return ControlCommand(authority=Authority.DRIVER, driver_pedal=min(driver_pedal, 1.0))

    if a_desired > config.accel_deadband:
        omega = state.omega_f if params.driven_axle == "front" else state.omega_r
        force = required_wheel_force(a_desired, state, params, grade)
        return ControlCommand(throttle=inverse_engine_map(params, force, omega, gear))

    if a_desired < -config.accel_deadband:
        return ControlCommand(brake_duty=brake_duty(a_desired, config))

    return ControlCommand()


# ---------------------------------------------------------------------------------------------------------- #
# Steering
# ---------------------------------------------------------------------------------------------------------- #
@dataclass
class ServoState:
    integrator: float = 0.0
    command: float = 0.0


@dataclass
class SteeringPlantState:
    angle: float = 0.0


def steering_pi(target_angle: float, measured_angle: float, servo: ServoState, config: ActuationConfig,
                dt: float) -> float:
    """
    PI position loop on the road-wheel angle with conditional integration: the integrator only takes a step
    that keeps the output inside its limit.

    :param target_angle: desired road-wheel angle (rad)
    :param measured_angle: steering angle sensor reading (rad)
    :param servo: integrator memory, updated in place
    :param config: gains and output limit
    :param dt: control period (s)
    :return: motor command in [-limit, limit]
    """
    if not dt > 0:
        raise InputDomainError(f"dt must be positive, got {dt}.")

    limit = config.steer_output_limit
    error = target_angle - measured_angle
    proportional = config.steer_kp * error
    candidate = servo.integrator + config.steer_ki * error * dt

    output = proportional + candidate
    if abs(output) <= limit:
        servo.integrator = candidate
    else:
        output = min(max(proportional + servo.integrator, -limit), limit)

    servo.command = output
    return output


def steering_plant(motor_command: float, plant: SteeringPlantState, config: ActuationConfig, dt: float) -> float:
    """
    Motor and column as a first-order lag toward ``command * angle_limit`` with slew and angle limits.

    :param motor_command: normalised motor command
    :param plant: road-wheel angle, updated in place
    :param dt: plant step (s)
    :return: road-wheel angle (rad)
    """
    if not dt > 0:
        raise InputDomainError(f"dt must be positive, got {dt}.")

    limit = config.steer_angle_limit
    target = min(max(motor_command, -1.0), 1.0) * limit

    lagged = target + (plant.angle - target) * math.exp(-dt / config.steer_time_constant)
    max_step = config.steer_rate_limit * dt
    step = min(max(lagged - plant.angle, -max_step), max_step)

    plant.angle = min(max(plant.angle + step, -limit), limit)
    return plant.angle


def steering_wheel_angle(road_wheel_angle: float, config: ActuationConfig) -> float:
    """
    Steering-wheel angle in degrees for a road-wheel angle in rad.
    """
    return math.degrees(road_wheel_angle * config.steering_ratio)


def plant_inputs(command: ControlCommand, road_wheel_angle: float, params: VehicleParameters,
                 config: ActuationConfig, gear: int, grade: float = 0.0) -> PlantInputs:
    """
    Translate a command into plant inputs; the total brake torque is split over the axles.
    """
    total = brake_torque(command.brake_duty, config)
    front = total * params.brake_split_front

    return PlantInputs(delta_f=road_wheel_angle, throttle=command.plant_throttle, brake_front=front,
                       brake_rear=total - front, grade=grade, gear=gear)
