import math
import unittest
from dataclasses import replace
from unittest import TestCase

import numpy as np

from src.lcv_auto.dynamics import (ModelOptions, PlantInputs, SlipState, VehicleState, compute_slip,
                                   dugoff_forces, dugoff_forces_array, dugoff_saturation, engine_speed,
                                   integrate_step, normal_loads, powertrain_torque, resistive_forces,
                                   select_gear, state_derivative, wheel_dynamics, with_accelerations)
from src.lcv_auto.exceptions import (ConfigurationError, InputDomainError, NumericalDivergenceError)
from src.lcv_auto.parameters import EngineMap, load_nominal_vehicle

DRAG_ONLY = ModelOptions(tires=False, rolling_resistance=False, aero=True)


def drag_solution(params, v0, t):
    k = 0.5 * params.frontal_area * params.air_density * params.drag_coefficient / params.mass
    return v0 / (1.0 + k * v0 * t)


class TestResistiveForces(TestCase):

    def setUp(self):
        self.params = load_nominal_vehicle().params

    def test_standstill(self):
        res = resistive_forces(self.params, 0.0, 0.0)

        self.assertEqual((res.aero, res.rolling, res.grade), (0.0, 0.0, 0.0))

    def test_aero(self):
        params = replace(self.params, frontal_area=2.5, air_density=1.225, drag_coefficient=0.35)

        self.assertAlmostEqual(resistive_forces(params, 20.0, 0.0).aero, 214.375, places=9)

    def test_slope(self):
        res = resistive_forces(self.params, 10.0, 0.05)

        self.assertAlmostEqual(res.grade, 2000 * 9.81 * math.sin(0.05), places=9)
        self.assertAlmostEqual(res.rolling, 0.012 * 2000 * 9.81 * math.cos(0.05), places=9)
        self.assertLess(resistive_forces(self.params, 10.0, -0.05).grade, 0.0)

    def test_no_rolling_resistance_below_epsilon(self):
        self.assertEqual(resistive_forces(self.params, 0.05, 0.0).rolling, 0.0)

    def test_domain(self):
        for speed, grade in ((math.nan, 0.0), (math.inf, 0.0), (-1.0, 0.0), (1.0, 2.0)):
            with self.subTest(speed=speed, grade=grade):
                with self.assertRaises(InputDomainError):
                    resistive_forces(self.params, speed, grade)


class TestPowertrain(TestCase):

    def setUp(self):
        engine_map = EngineMap([1000, 2000], [0.0, 1.0], [[0.0, 100.0], [0.0, 200.0]])
        self.params = replace(load_nominal_vehicle().params, engine_map=engine_map, driveline_efficiency=0.9,
                              gear_ratios=(10.0,), shift_speeds=())

    def test_zero_throttle(self):
        self.assertEqual(powertrain_torque(self.params, 0.0, 1500.0, 1), 0.0)

    def test_grid_node(self):
        self.assertAlmostEqual(powertrain_torque(self.params, 1.0, 1000.0, 1), 900.0, places=9)

    def test_midpoint(self):
        self.assertAlmostEqual(powertrain_torque(self.params, 1.0, 1500.0, 1), 0.9 * 10.0 * 150.0, places=9)

    def test_invalid_gear(self):
        for gear in (0, 2, -1):
            with self.subTest(gear=gear):
                with self.assertRaises(ConfigurationError):
                    powertrain_torque(self.params, 0.5, 1500.0, gear)

    def test_engine_speed_coupling(self):
        self.assertAlmostEqual(engine_speed(self.params, 2 * math.pi, 1), 600.0, places=9)

    def test_shift_schedule(self):
        params = load_nominal_vehicle().params

        self.assertEqual(select_gear(params, 0.0), 1)
        self.assertEqual(select_gear(params, 5.0), 2)
        self.assertEqual(select_gear(params, 12.0), 3)
        self.assertEqual(select_gear(params, 60.0), 5)


class TestWheelDynamics(TestCase):

    def setUp(self):
        self.params = replace(load_nominal_vehicle().params, wheel_inertia=1.5, wheel_radius=0.3)

    def test_torque_balance(self):
        self.assertAlmostEqual(wheel_dynamics(self.params, 500 * 0.3, 0.0, 500.0), 0.0, places=12)

    def test_moment_balance(self):
        self.assertAlmostEqual(wheel_dynamics(self.params, 300.0, 0.0, 500.0), 100.0, places=9)

    def test_brake_opposes_spin(self):
        self.assertLess(wheel_dynamics(self.params, 0.0, 100.0, 0.0, omega=10.0), 0.0)
        self.assertGreater(wheel_dynamics(self.params, 0.0, 100.0, 0.0, omega=-10.0), 0.0)

    def test_brake_holds_stopped_wheel(self):
        self.assertEqual(wheel_dynamics(self.params, 0.0, 500.0, 0.0, omega=0.0), 0.0)
        self.assertEqual(wheel_dynamics(self.params, 100.0, 500.0, 0.0, omega=0.0), 0.0)

    def test_stopped_wheel_stays_stopped(self):
        params = load_nominal_vehicle().params
        state = VehicleState()
        inputs = PlantInputs(brake_front=500.0, brake_rear=500.0)

        for i in range(100):
            state = integrate_step(state, inputs, params, 0.001, step_index=i)

        self.assertEqual(state.omega_f, 0.0)
        self.assertEqual(state.omega_r, 0.0)

    def test_brake_does_not_reverse_wheel(self):
        params = load_nominal_vehicle().params
        state = VehicleState(omega_f=0.05, omega_r=0.05)
        inputs = PlantInputs(brake_front=3000.0, brake_rear=3000.0)

        state = integrate_step(state, inputs, params, 0.01)

        self.assertEqual(state.omega_f, 0.0)
        self.assertEqual(state.omega_r, 0.0)

    def test_negative_brake_rejected(self):
        with self.assertRaises(InputDomainError):
            wheel_dynamics(self.params, 0.0, -1.0, 0.0)


class TestSlip(TestCase):

    def setUp(self):
        self.params = replace(load_nominal_vehicle().params, wheel_radius=0.3)

    def test_straight_rolling(self):
        state = VehicleState(vx=20.0, omega_f=20.0 / 0.3, omega_r=20.0 / 0.3)
        slip = compute_slip(state, PlantInputs(), self.params)

        self.assertEqual(slip.alpha_f, 0.0)
        self.assertEqual(slip.alpha_r, 0.0)
        self.assertAlmostEqual(slip.v_fx, 20.0, places=12)
        self.assertAlmostEqual(slip.v_rx, 20.0, places=12)
        self.assertAlmostEqual(slip.s_f, 0.0, places=12)
        self.assertAlmostEqual(slip.s_r, 0.0, places=12)

    def test_braking_branch(self):
        slip = compute_slip(VehicleState(vx=10.0, omega_f=30.0, omega_r=30.0), PlantInputs(), self.params)

        self.assertAlmostEqual(slip.s_f, -0.1, places=12)

    def test_traction_branch(self):
        slip = compute_slip(VehicleState(vx=9.0, omega_f=10.0 / 0.3, omega_r=9.0 / 0.3), PlantInputs(), self.params)

        self.assertAlmostEqual(slip.s_f, 0.1, places=12)
        self.assertAlmostEqual(slip.s_r, 0.0, places=12)

    def test_rear_slip_angle_sign(self):
        # positive yaw rate swings the rear axle to the right: positive rear slip angle
        slip = compute_slip(VehicleState(vx=10.0, r=0.2, omega_f=10 / 0.3, omega_r=10 / 0.3), PlantInputs(),
                            self.params)

        self.assertAlmostEqual(slip.alpha_r, -math.atan(-self.params.l_r * 0.2 / 10.0), places=12)
        self.assertGreater(slip.alpha_r, 0.0)
        self.assertLess(slip.alpha_f, 0.0)

    def test_low_speed_regularisation(self):
        slip = compute_slip(VehicleState(vx=0.05, vy=0.02, r=0.01, omega_f=0.1, omega_r=0.0),
                            PlantInputs(delta_f=0.3), self.params)

        self.assertEqual((slip.s_f, slip.s_r, slip.alpha_f, slip.alpha_r), (0.0, 0.0, 0.0, 0.0))

    def test_slip_ratio_range(self):
        rng = np.random.default_rng(3)
        speeds = np.concatenate([[0.0, 0.1, -0.1], rng.uniform(-40, 40, 2000)])
        wheels = np.concatenate([[0.0, 0.0, 0.5], rng.uniform(-150, 150, 2000)])

        for vx, omega in zip(speeds, wheels):
            slip = compute_slip(VehicleState(vx=float(vx), omega_f=float(omega), omega_r=0.0), PlantInputs(),
                                self.params)
            self.assertLessEqual(abs(slip.s_f), 1.0)
            self.assertLessEqual(abs(slip.s_r), 1.0)

            wheel, contact = 0.3 * omega, slip.v_fx
            if slip.s_f != 0.0:
                self.assertEqual(math.copysign(1.0, slip.s_f), math.copysign(1.0, wheel - contact))


class TestDugoff(TestCase):

    def setUp(self):
        self.params = replace(load_nominal_vehicle().params, mu=1.0)

    def _slip(self, s=0.0, alpha=0.0):
        return SlipState(alpha_f=alpha, alpha_r=alpha, v_fx=10.0, v_rx=10.0, s_f=s, s_r=s)

    def test_zero_slip(self):
        forces = dugoff_forces(self.params, self._slip(), (4000.0, 4000.0))

        self.assertEqual((forces.fx_f, forces.fy_f, forces.f_f), (0.0, 0.0, 1.0))

    def test_linear_branch(self):
        params = replace(self.params, c_xf=1000.0)
        forces = dugoff_forces(params, self._slip(s=1.0), (4000.0, 4000.0))

        self.assertEqual(forces.f_f, 1.0)
        self.assertAlmostEqual(forces.fx_f, 1000.0, places=9)

    def test_saturated_branch(self):
        params = replace(self.params, c_xf=4000.0)
        forces = dugoff_forces(params, self._slip(s=1.0), (4000.0, 4000.0))

        self.assertAlmostEqual(forces.f_f, 0.75, places=12)
        self.assertAlmostEqual(forces.fx_f, 3000.0, places=9)

    def test_non_positive_load_rejected(self):
        with self.assertRaises(InputDomainError):
            dugoff_forces(self.params, self._slip(), (0.0, 4000.0))

    def test_scalar_and_vector_agree(self):
        rng = np.random.default_rng(5)
        for s, alpha in rng.uniform(-0.3, 0.3, size=(50, 2)):
            forces = dugoff_forces(self.params, self._slip(s=s, alpha=alpha), (9000.0, 9000.0))
            fx, fy, f = dugoff_forces_array(self.params.c_xf, self.params.c_yf, s, alpha, 9000.0, 1.0)

            self.assertAlmostEqual(forces.fx_f, float(fx), places=6)
            self.assertAlmostEqual(forces.fy_f, float(fy), places=6)
            self.assertAlmostEqual(forces.f_f, float(f), places=12)

    def test_continuity_at_branch_boundary(self):
        rng = np.random.default_rng(11)
        n = 1_000_000
        capacity = rng.uniform(0.5, 2.0, n) * rng.uniform(1000.0, 20000.0, n)
        boundary = 0.5 * capacity

        below = dugoff_saturation(boundary * (1 - 1e-9), capacity)
        above = dugoff_saturation(boundary * (1 + 1e-9), capacity)

        self.assertLess(np.max(np.abs(below - above)), 1e-6)

    def test_friction_cone(self):
        rng = np.random.default_rng(13)
        n = 1_000_000
        s = rng.uniform(-1.0, 1.0, n)
        alpha = rng.uniform(-0.5, 0.5, n)
        fz = rng.uniform(1000.0, 20000.0, n)
        mu = rng.uniform(0.1, 2.0, n)

        fx, fy, f = dugoff_forces_array(100000.0, 120000.0, s, alpha, fz, mu)
        saturated = f < 1.0

        self.assertTrue(np.all((f > 0.0) & (f <= 1.0)))
        self.assertTrue(np.all(np.hypot(fx, fy)[saturated] <= mu[saturated] * fz[saturated] * (1 + 1e-9)))

    def test_saturation_monotone(self):
        demand = np.linspace(0.0, 50000.0, 100001)
        f = dugoff_saturation(demand, 8000.0)

        self.assertTrue(np.all(np.diff(f) <= 1e-15))


class TestNormalLoads(TestCase):

    def test_symmetric(self):
        params = replace(load_nominal_vehicle().params, l_f=1.5, l_r=1.5)
        fz_f, fz_r = normal_loads(params)

        self.assertAlmostEqual(fz_f, fz_r, places=9)
        self.assertAlmostEqual(fz_f, 2000 * 9.81 / 2, places=9)

    def test_static_split(self):
        fz_f, fz_r = normal_loads(load_nominal_vehicle().params)

        self.assertAlmostEqual(fz_f, 11772.0, places=6)
        self.assertAlmostEqual(fz_f + fz_r, 19620.0, places=6)


# ---------------------------------------------------------------------------------------------------------- #
# Equations of motion
# ---------------------------------------------------------------------------------------------------------- #
class TestStateDerivative(TestCase):

    def setUp(self):
        self.params = load_nominal_vehicle().params

    def test_straight_driving_is_laterally_symmetric(self):
        state = VehicleState.rolling(self.params, 15.0)
        derivative = state_derivative(state, PlantInputs(throttle=0.3, gear=3), self.params)

        self.assertEqual(derivative[4], 0.0)
        self.assertEqual(derivative[5], 0.0)

    def test_coasting_balance(self):
        state = VehicleState(vx=20.0, omega_f=20.0 / self.params.wheel_radius * 0.99,
                             omega_r=20.0 / self.params.wheel_radius * 0.995)
        inputs = PlantInputs()
        derivative = state_derivative(state, inputs, self.params)

        forces = dugoff_forces(self.params, compute_slip(state, inputs, self.params), normal_loads(self.params))
        res = resistive_forces(self.params, 20.0, 0.0)
        expected = (forces.fx_f + forces.fx_r - res.aero - res.rolling) / self.params.mass

        self.assertAlmostEqual(derivative[3], expected, places=9)
        self.assertEqual(res.grade, 0.0)

    def test_symmetry(self):
        rng = np.random.default_rng(17)

        for _ in range(10_000):
            vx = rng.uniform(1.0, 40.0)
            state = VehicleState(x=rng.uniform(-50, 50), y=rng.uniform(-50, 50), psi=rng.uniform(-math.pi, math.pi),
                                 vx=vx, vy=rng.uniform(-2.0, 2.0), r=rng.uniform(-1.0, 1.0),
                                 omega_f=vx / self.params.wheel_radius * rng.uniform(0.9, 1.1),
                                 omega_r=vx / self.params.wheel_radius * rng.uniform(0.9, 1.1))
            inputs = PlantInputs(delta_f=rng.uniform(-0.4, 0.4), throttle=rng.uniform(0.0, 1.0),
                                 gear=int(rng.integers(1, 6)))
            mirrored_state = replace(state, vy=-state.vy, r=-state.r)
            mirrored_inputs = replace(inputs, delta_f=-inputs.delta_f)

            d = state_derivative(state, inputs, self.params)
            m = state_derivative(mirrored_state, mirrored_inputs, self.params)

            a = with_accelerations(state, inputs, self.params)
            b = with_accelerations(mirrored_state, mirrored_inputs, self.params)

            self.assertLessEqual(abs(a.ay + b.ay), 1e-9 * max(1.0, abs(a.ay)))
            self.assertLessEqual(abs(d[5] + m[5]), 1e-9 * max(1.0, abs(d[5])))
            self.assertLessEqual(abs(a.ax - b.ax), 1e-9 * max(1.0, abs(a.ax)))
            self.assertLessEqual(abs(d[6] - m[6]), 1e-9 * max(1.0, abs(d[6])))

    def test_mirrored_tire_quantities(self):
        state = VehicleState(vx=12.0, vy=0.4, r=0.15, omega_f=12.0 / self.params.wheel_radius,
                             omega_r=12.0 / self.params.wheel_radius)
        slip = compute_slip(state, PlantInputs(delta_f=0.1), self.params)
        mirrored = compute_slip(replace(state, vy=-0.4, r=-0.15), PlantInputs(delta_f=-0.1), self.params)

        self.assertEqual(slip.alpha_f, -mirrored.alpha_f)
        self.assertEqual(slip.alpha_r, -mirrored.alpha_r)
        self.assertEqual(slip.s_f, mirrored.s_f)

        loads = normal_loads(self.params)
        self.assertEqual(dugoff_forces(self.params, slip, loads).fy_f,
                         -dugoff_forces(self.params, mirrored, loads).fy_f)

    def test_central_difference(self):
        state = VehicleState(psi=0.3, vx=15.0, vy=0.1, r=0.05, omega_f=15.0 / self.params.wheel_radius,
                             omega_r=15.0 / self.params.wheel_radius)
        inputs = PlantInputs(delta_f=0.02, gear=3)
        h = 1e-5

        middle = integrate_step(state, inputs, self.params, h)
        end = integrate_step(middle, inputs, self.params, h)

        central = (end.as_array() - state.as_array()) / (2 * h)
        derivative = state_derivative(middle, inputs, self.params)

        np.testing.assert_allclose(central, derivative, rtol=1e-4, atol=1e-4)

    def test_accelerations_filled(self):
        state = VehicleState.rolling(self.params, 10.0)
        filled = with_accelerations(state, PlantInputs(brake_front=1000.0, brake_rear=400.0), self.params)

        self.assertEqual(filled.vx, state.vx)
        self.assertLess(filled.ax, 0.0)
        self.assertEqual(filled.ay, 0.0)


class TestIntegrateStep(TestCase):

    def setUp(self):
        self.params = load_nominal_vehicle().params

    def test_equilibrium(self):
        state = VehicleState()
        after = integrate_step(state, PlantInputs(), self.params, 0.001)

        self.assertEqual(after, state)

    def test_drag_only_closed_form(self):
        v0, dt = 30.0, 0.001
        state = VehicleState(vx=v0)

        for i in range(10_000):
            state = integrate_step(state, PlantInputs(), self.params, dt, options=DRAG_ONLY, step_index=i)

        expected = drag_solution(self.params, v0, 10.0)
        self.assertLess(abs(state.vx - expected) / expected, 1e-6)

    def test_fourth_order_convergence(self):
        # a light vehicle makes the drag time scale short enough for the truncation error to dominate round-off
        params = replace(self.params, mass=5.0)
        horizon, dt = 2.0, 0.01

        def coast(step):
            state = VehicleState(vx=30.0)
            for i in range(int(round(horizon / step))):
                state = integrate_step(state, PlantInputs(), params, step, options=DRAG_ONLY, step_index=i)
            return state.vx

        reference = coast(dt / 64)
        ratio = abs(coast(dt) - reference) / abs(coast(dt / 2) - reference)

        self.assertGreaterEqual(ratio, 12.0)
        self.assertLessEqual(ratio, 20.0)

    def test_determinism(self):
        def run():
            state = VehicleState.rolling(self.params, 12.0)
            rows = []
            for i in range(500):
                inputs = PlantInputs(delta_f=0.05 * math.sin(i * 0.01), throttle=0.2, gear=3)
                state = integrate_step(state, inputs, self.params, 0.001, step_index=i)
                rows.append(state.as_tuple())
            return rows

        self.assertEqual(run(), run())

    def test_coasting_speed_non_increasing(self):
        state = VehicleState.rolling(self.params, 20.0)
        previous = state.speed

        for i in range(3000):
            state = integrate_step(state, PlantInputs(gear=4), self.params, 0.001, step_index=i)
            self.assertLessEqual(state.speed, previous + 1e-9)
            previous = state.speed

    def test_divergence_reports_step(self):
        state = VehicleState(vx=math.inf, omega_f=1.0, omega_r=1.0)

        with self.assertRaises(NumericalDivergenceError) as ctx:
            integrate_step(state, PlantInputs(), self.params, 0.001, step_index=7)

        self.assertEqual(ctx.exception.step_index, 7)

    def test_step_size_domain(self):
        with self.assertRaises(InputDomainError):
            integrate_step(VehicleState(), PlantInputs(), self.params, 0.02)

    def test_invalid_inputs(self):
        with self.assertRaises(InputDomainError):
            PlantInputs(throttle=1.5)

        with self.assertRaises(InputDomainError):
            PlantInputs(brake_front=-1.0)


if __name__ == '__main__':
    unittest.main()
