"""
Nonlinear single-track plant: resistive forces, powertrain, wheel moment balance, slip quantities,
Dugoff tire forces and a fixed-step fourth-order Runge-Kutta integrator.

All functions are pure; the hot path works on plain floats.
"""
import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from src.lcv_auto.exceptions import ConfigurationError, InputDomainError, NumericalDivergenceError
from src.lcv_auto.parameters import RAD_S_TO_RPM, VehicleParameters

VELOCITY_EPSILON = 0.1  # m/s, slips are zeroed below this speed
WHEEL_AT_REST = 1e-9  # rad/s

STATE_FIELDS = ("x", "y", "psi", "vx", "vy", "r", "omega_f", "omega_r")


# ---------------------------------------------------------------------------------------------------------- #
# Value types
# ---------------------------------------------------------------------------------------------------------- #
@dataclass(frozen=True)
class VehicleState:
    """
    Kinematic and dynamic state of one vehicle. Position is global (x east, y north), heading is counter-clockwise
    from +x, velocities are in the body frame. ``ax`` and ``ay`` are body accelerations filled in by
    ``with_accelerations``; they are not integrated.
    """

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    r: float = 0.0
    omega_f: float = 0.0
    omega_r: float = 0.0
    ax: float = 0.0
    ay: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    @property
    def beta(self) -> float:
        return math.atan2(self.vy, self.vx)

    def as_tuple(self) -> Tuple[float, ...]:
        return (self.x, self.y, self.psi, self.vx, self.vy, self.r, self.omega_f, self.omega_r)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_sequence(cls, values, ax: float = 0.0, ay: float = 0.0):
        x, y, psi, vx, vy, r, omega_f, omega_r = (float(v) for v in values)
        return cls(x, y, psi, vx, vy, r, omega_f, omega_r, ax, ay)

    @classmethod
    def rolling(cls, params: VehicleParameters, speed: float, x: float = 0.0, y: float = 0.0, psi: float = 0.0):
        """
        State of a vehicle driving straight with free-rolling wheels.
        """
        omega = speed / params.wheel_radius
        return cls(x=x, y=y, psi=psi, vx=speed, omega_f=omega, omega_r=omega)


@dataclass(frozen=True)
class PlantInputs:
    """
    Inputs held constant over one integration step. Rear steering is fixed at zero.
    """

    delta_f: float = 0.0
    throttle: float = 0.0
    brake_front: float = 0.0
    brake_rear: float = 0.0
    grade: float = 0.0
    gear: int = 1

    def __post_init__(self):
        values = (self.delta_f, self.throttle, self.brake_front, self.brake_rear, self.grade)
        if not all(math.isfinite(v) for v in values):
            raise InputDomainError(f"Non-finite plant input: {self}")

        if not 0.0 <= self.throttle <= 1.0:
            raise InputDomainError(f"Throttle {self.throttle} outside [0, 1].")

        if self.brake_front < 0 or self.brake_rear < 0:
            raise InputDomainError("Brake torques must be non-negative.")

        if abs(self.grade) >= math.pi / 2:
            raise InputDomainError(f"Road grade {self.grade} rad is not a road.")

    @property
    def delta_r(self) -> float:
        return 0.0


@dataclass(frozen=True)
class ModelOptions:
    """
    Switches for individual force contributions, used to isolate terms in analytic checks.
    """

    tires: bool = True
    rolling_resistance: bool = True
    aero: bool = True


FULL_MODEL = ModelOptions()


@dataclass(frozen=True)
class SlipState:
    alpha_f: float
    alpha_r: float
    v_fx: float
    v_rx: float
    s_f: float
    s_r: float


@dataclass(frozen=True)
class TireForces:
    fx_f: float
    fx_r: float
    fy_f: float
    fy_r: float
    fz_f: float
    fz_r: float
    f_f: float
    f_r: float
    demand_f: float
    demand_r: float


@dataclass(frozen=True)
class ResistiveForces:
    aero: float
    rolling: float
    grade: float


# ---------------------------------------------------------------------------------------------------------- #
# Forces
# ---------------------------------------------------------------------------------------------------------- #
def resistive_forces(params: VehicleParameters, speed: float, grade: float,
                     options: ModelOptions = FULL_MODEL) -> ResistiveForces:
    """
    Aerodynamic drag, rolling resistance and slope resistance as magnitudes.

    :param params: vehicle parameters
    :param speed: total vehicle speed (m/s), non-negative
    :param grade: road inclination (rad), uphill positive
    :param options: disabled terms are reported as zero
    :return: ResistiveForces
    """
    if not (math.isfinite(speed) and math.isfinite(grade)):
        raise InputDomainError(f"Non-finite input: speed={speed}, grade={grade}")

    if speed < 0:
        raise InputDomainError(f"Speed must be non-negative, got {speed}.")

    if abs(grade) >= math.pi / 2:
        raise InputDomainError(f"Grade {grade} rad outside (-pi/2, pi/2).")

    return _resistive(params, speed, grade, options)


def _resistive(params: VehicleParameters, speed: float, grade: float, options: ModelOptions) -> ResistiveForces:
    aero = 0.5 * params.frontal_area * params.air_density * params.drag_coefficient * speed * speed \
        if options.aero else 0.0

    rolling = params.rolling_resistance * params.mass * params.gravity * math.cos(grade) \
        if options.rolling_resistance and speed >= VELOCITY_EPSILON else 0.0

    slope = params.mass * params.gravity * math.sin(grade)

    return ResistiveForces(aero=aero, rolling=rolling, grade=slope)


def normal_loads(params: VehicleParameters) -> Tuple[float, float]:
    """
    Static axle loads from the moment balance about each axle.

    :return: (F_zf, F_zr) in N
    """
    weight = params.mass * params.gravity
    wheelbase = params.l_f + params.l_r

    return weight * params.l_r / wheelbase, weight * params.l_f / wheelbase


def select_gear(params: VehicleParameters, speed: float) -> int:
    """
    Speed-threshold shift schedule.

    :return: 1-based gear number
    """
    gear = 1 + sum(1 for threshold in params.shift_speeds if speed >= threshold)
    return min(gear, len(params.gear_ratios))


def gear_ratio(params: VehicleParameters, gear: int) -> float:
    if not isinstance(gear, (int, np.integer)) or not 1 <= gear <= len(params.gear_ratios):
        raise ConfigurationError(f"Invalid gear {gear!r}; vehicle has gears 1..{len(params.gear_ratios)}.")

    return params.gear_ratios[gear - 1]


def engine_speed(params: VehicleParameters, omega_wheel: float, gear: int) -> float:
    """
    Engine speed in rpm for a driven-axle speed in rad/s.
    """
    return abs(omega_wheel) * gear_ratio(params, gear) * RAD_S_TO_RPM


def powertrain_torque(params: VehicleParameters, throttle: float, engine_speed_rpm: float, gear: int) -> float:
    """
    Torque delivered to the driven axle.

    :param throttle: throttle fraction in [0, 1]
    :param engine_speed_rpm: engine speed, clamped to the map range
    :param gear: 1-based gear number
    :return: T_d in N*m
    """
    ratio = gear_ratio(params, gear)
    return params.driveline_efficiency * ratio * params.engine_map(engine_speed_rpm, throttle)


def wheel_dynamics(params: VehicleParameters, drive_torque: float, brake_torque: float, tire_force: float,
                   omega: float = None) -> float:
    """
    Moment balance at the wheel centre.

    The brake torque opposes the spin direction. A wheel at rest behaves as held by static friction: it stays at
    rest while the brake can hold the remaining torque.

    :param drive_torque: T_d (N*m)
    :param brake_torque: T_b (N*m), non-negative magnitude
    :param tire_force: longitudinal tire force F_x (N)
    :param omega: current wheel speed (rad/s); None means forward spin
    :return: wheel angular acceleration (rad/s^2)
    """
    if not all(math.isfinite(v) for v in (drive_torque, brake_torque, tire_force)):
        raise InputDomainError("Non-finite torque or force in wheel moment balance.")

    if brake_torque < 0:
        raise InputDomainError(f"Brake torque must be non-negative, got {brake_torque}.")

    return _wheel_accel(params, drive_torque, brake_torque, tire_force, 1.0 if omega is None else omega)


def _wheel_accel(params: VehicleParameters, drive_torque: float, brake_torque: float, tire_force: float,
                 omega: float) -> float:
    net = drive_torque - tire_force * params.wheel_radius

    if abs(omega) > WHEEL_AT_REST:
        return (net - math.copysign(brake_torque, omega)) / params.wheel_inertia

    if abs(net) <= brake_torque:
        return 0.0

    return (net - math.copysign(brake_torque, net)) / params.wheel_inertia


# ---------------------------------------------------------------------------------------------------------- #
# Tires
# ---------------------------------------------------------------------------------------------------------- #
def _slip_ratio(wheel_speed: float, contact_speed: float) -> float:
    diff = wheel_speed - contact_speed

    if wheel_speed < contact_speed:  # braking
        denominator = abs(contact_speed)
    else:  # traction
        denominator = abs(wheel_speed)

    s = diff / max(denominator, VELOCITY_EPSILON)
    return min(max(s, -1.0), 1.0)


def _slip(vx: float, vy: float, r: float, omega_f: float, omega_r: float, delta_f: float,
          params: VehicleParameters) -> Tuple[float, float, float, float, float, float]:
    lat_f = vy + params.l_f * r
    lat_r = vy - params.l_r * r

    if abs(vx) >= VELOCITY_EPSILON:
        alpha_f = delta_f - math.atan(lat_f / vx)
        alpha_r = -math.atan(lat_r / vx)
    else:
        alpha_f = alpha_r = 0.0

    # contact-patch speeds carry the sign of V_x when reversing
    v_fx = math.copysign(math.hypot(vx, lat_f) * math.cos(alpha_f), vx)
    v_rx = math.copysign(math.hypot(vx, lat_r) * math.cos(alpha_r), vx)

    wheel_f = params.wheel_radius * omega_f
    wheel_r = params.wheel_radius * omega_r

    if max(abs(wheel_f), abs(v_fx)) < VELOCITY_EPSILON:
        s_f = alpha_f = 0.0
    else:
        s_f = _slip_ratio(wheel_f, v_fx)

    if max(abs(wheel_r), abs(v_rx)) < VELOCITY_EPSILON:
        s_r = alpha_r = 0.0
    else:
        s_r = _slip_ratio(wheel_r, v_rx)

    return alpha_f, alpha_r, v_fx, v_rx, s_f, s_r


def compute_slip(state: VehicleState, inputs: PlantInputs, params: VehicleParameters) -> SlipState:
    """
    Slip angles, contact-patch speeds and slip ratios of both axles.

    :return: SlipState
    """
    return SlipState(*_slip(state.vx, state.vy, state.r, state.omega_f, state.omega_r, inputs.delta_f, params))


def _saturation(demand: float, capacity: float) -> float:
    half = 0.5 * capacity
    if demand <= half:
        return 1.0

    k = half / demand
    return (2.0 - k) * k


def dugoff_forces(params: VehicleParameters, slip: SlipState, loads: Tuple[float, float]) -> TireForces:
    """
    Combined-slip tire forces of both axles.

    :param slip: slip quantities from compute_slip
    :param loads: normal loads (F_zf, F_zr), strictly positive
    :return: TireForces
    """
    fz_f, fz_r = loads
    if not (fz_f > 0 and fz_r > 0):
        raise InputDomainError(f"Normal loads must be positive, got {loads}.")

    lon_f, lat_f = params.c_xf * slip.s_f, params.c_yf * slip.alpha_f
    lon_r, lat_r = params.c_xr * slip.s_r, params.c_yr * slip.alpha_r

    demand_f, demand_r = math.hypot(lon_f, lat_f), math.hypot(lon_r, lat_r)
    f_f = _saturation(demand_f, params.mu * fz_f)
    f_r = _saturation(demand_r, params.mu * fz_r)

    return TireForces(fx_f=f_f * lon_f, fx_r=f_r * lon_r, fy_f=f_f * lat_f, fy_r=f_r * lat_r,
                      fz_f=fz_f, fz_r=fz_r, f_f=f_f, f_r=f_r, demand_f=demand_f, demand_r=demand_r)


def dugoff_saturation(demand, capacity) -> np.ndarray:
    """
    Vectorised saturation factor for arrays of combined demand F_R and friction capacity mu*F_z.
    """
    demand = np.asarray(demand, dtype=float)
    half = 0.5 * np.asarray(capacity, dtype=float)

    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(demand > half, half / demand, 1.0)

    return np.where(demand <= half, 1.0, (2.0 - k) * k)


def dugoff_forces_array(c_x, c_y, s, alpha, fz, mu) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised tire forces for parameter sweeps.

    :return: (F_x, F_y, f)
    """
    lon = np.asarray(c_x, dtype=float) * np.asarray(s, dtype=float)
    lat = np.asarray(c_y, dtype=float) * np.asarray(alpha, dtype=float)
    f = dugoff_saturation(np.hypot(lon, lat), np.asarray(mu, dtype=float) * np.asarray(fz, dtype=float))

    return f * lon, f * lat, f


# ---------------------------------------------------------------------------------------------------------- #
# Equations of motion
# ---------------------------------------------------------------------------------------------------------- #
def _evaluate(y, inputs: PlantInputs, params: VehicleParameters, options: ModelOptions, loads):
    """
    :return: (derivative as list, body a_x, body a_y)
    """
    _, _, psi, vx, vy, r, omega_f, omega_r = y
    delta = inputs.delta_f

    if options.tires:
        alpha_f, alpha_r, _, _, s_f, s_r = _slip(vx, vy, r, omega_f, omega_r, delta, params)
        lon_f, lat_f = params.c_xf * s_f, params.c_yf * alpha_f
        lon_r, lat_r = params.c_xr * s_r, params.c_yr * alpha_r
        f_f = _saturation(math.hypot(lon_f, lat_f), params.mu * loads[0])
        f_r = _saturation(math.hypot(lon_r, lat_r), params.mu * loads[1])
        fx_f, fy_f, fx_r, fy_r = f_f * lon_f, f_f * lat_f, f_r * lon_r, f_r * lat_r
    else:
        fx_f = fy_f = fx_r = fy_r = 0.0

    speed = math.hypot(vx, vy)
    res = _resistive(params, speed, inputs.grade, options)
    direction = 0.0 if vx == 0.0 else math.copysign(1.0, vx)
    resistance = direction * (res.aero + res.rolling) + res.grade

    cos_d, sin_d = math.cos(delta), math.sin(delta)

    ax = (fx_f * cos_d - fy_f * sin_d + fx_r - resistance) / params.mass
    ay = (fx_f * sin_d + fy_f * cos_d + fy_r) / params.mass
    r_dot = (params.l_f * fy_f * cos_d - params.l_r * fy_r + params.l_f * fx_f * sin_d) / params.yaw_inertia

    front_driven = params.driven_axle == "front"
    driven_omega = omega_f if front_driven else omega_r
    drive = 0.0
    if inputs.throttle > 0.0 or not params.engine_map.closed_throttle_is_zero:
        drive = powertrain_torque(params, inputs.throttle, engine_speed(params, driven_omega, inputs.gear),
                                  inputs.gear)

    omega_f_dot = _wheel_accel(params, drive if front_driven else 0.0, inputs.brake_front, fx_f, omega_f)
    omega_r_dot = _wheel_accel(params, 0.0 if front_driven else drive, inputs.brake_rear, fx_r, omega_r)

    cos_p, sin_p = math.cos(psi), math.sin(psi)
    derivative = [vx * cos_p - vy * sin_p,
                  vx * sin_p + vy * cos_p,
                  r,
                  ax + r * vy,
                  ay - r * vx,
                  r_dot,
                  omega_f_dot,
                  omega_r_dot]

    return derivative, ax, ay


def state_derivative(state: VehicleState, inputs: PlantInputs, params: VehicleParameters,
                     options: ModelOptions = FULL_MODEL) -> np.ndarray:
    """
    Time derivative of (x, y, psi, V_x, V_y, r, omega_f, omega_r).

    :return: array of eight derivatives
    """
    derivative, _, _ = _evaluate(state.as_tuple(), inputs, params, options, normal_loads(params))
    return np.array(derivative, dtype=float)


def with_accelerations(state: VehicleState, inputs: PlantInputs, params: VehicleParameters,
                       options: ModelOptions = FULL_MODEL) -> VehicleState:
    """
    Copy of ``state`` with the body accelerations a_x, a_y evaluated for ``inputs``.
    """
    _, ax, ay = _evaluate(state.as_tuple(), inputs, params, options, normal_loads(params))
    return replace(state, ax=ax, ay=ay)


def integrate_step(state: VehicleState, inputs: PlantInputs, params: VehicleParameters, dt: float,
                   options: ModelOptions = FULL_MODEL, step_index: int = -1) -> VehicleState:
    """
    One classical fourth-order Runge-Kutta step with inputs held constant.

    A braked wheel whose speed would cross zero during the step is stopped at zero instead, and a braked wheel
    slow enough for the brake alone to stop it within the step starts the step at rest.

    :param dt: step size in s, 0 < dt <= 0.01
    :param step_index: reported in the divergence error
    :return: the new VehicleState (accelerations are carried over unchanged)
    """
    if not 0.0 < dt <= 0.01:
        raise InputDomainError(f"Step size {dt} s outside (0, 0.01].")

    loads = normal_loads(params)
    y = list(state.as_tuple())

    if 0.0 < abs(y[6]) < inputs.brake_front / params.wheel_inertia * dt:
        y[6] = 0.0
    if 0.0 < abs(y[7]) < inputs.brake_rear / params.wheel_inertia * dt:
        y[7] = 0.0

    half = 0.5 * dt

    k1, _, _ = _evaluate(y, inputs, params, options, loads)
    k2, _, _ = _evaluate([a + half * b for a, b in zip(y, k1)], inputs, params, options, loads)
    k3, _, _ = _evaluate([a + half * b for a, b in zip(y, k2)], inputs, params, options, loads)
    k4, _, _ = _evaluate([a + dt * b for a, b in zip(y, k3)], inputs, params, options, loads)

    sixth = dt / 6.0
    new = [a + sixth * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]

    if not all(math.isfinite(v) for v in new):
        raise NumericalDivergenceError("Plant state became non-finite", step_index=step_index)

    if inputs.brake_front > 0.0 and state.omega_f * new[6] < 0.0:
        new[6] = 0.0
    if inputs.brake_rear > 0.0 and state.omega_r * new[7] < 0.0:
        new[7] = 0.0

    return VehicleState(*new, ax=state.ax, ay=state.ay)
