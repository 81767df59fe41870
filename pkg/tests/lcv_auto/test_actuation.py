import math
import unittest
from dataclasses import replace
from unittest import TestCase

import numpy as np

from src.lcv_auto.actuation import (Authority, ControlCommand, ServoState, SteeringPlantState, brake_duty,
                                    inverse_engine_map, longitudinal_actuation, plant_inputs,
                                    required_wheel_force, steering_pi, steering_plant, steering_wheel_angle,
                                    wheel_force)
from src.lcv_auto.dynamics import VehicleState
from src.lcv_auto.exceptions import InputDomainError
from src.lcv_auto.parameters import ActuationConfig, load_nominal_vehicle


class TestLongitudinalActuation(TestCase):

    def setUp(self):
        setup = load_nominal_vehicle()
        self.params = setup.params
        self.config = setup.actuation
        self.state = VehicleState.rolling(self.params, 12.0)

    def test_deadband_coasts(self):
        command = longitudinal_actuation(0.0, self.state, self.config, self.params, gear=3)

        self.assertEqual(command.throttle, 0.0)
        self.assertEqual(command.brake_duty, 0.0)
        self.assertIs(command.authority, Authority.AUTOMATED)

        inside = longitudinal_actuation(0.04, self.state, self.config, self.params, gear=3)
        self.assertEqual((inside.throttle, inside.brake_duty), (0.0, 0.0))

    def test_driver_override(self):
        for a_desired in (-3.0, 0.0, 2.0):
            command = longitudinal_actuation(a_desired, self.state, self.config, self.params,
                                             driver_pedal=0.5, gear=3)

            self.assertIs(command.authority, Authority.DRIVER)
            self.assertEqual(command.throttle, 0.0)
            self.assertEqual(command.brake_duty, 0.0)
            self.assertEqual(command.plant_throttle, 0.5)

    def test_brake_duty_map(self):
        config = replace(self.config, brake_slope=20.0, brake_offset=0.0)
        command = longitudinal_actuation(-2.0, self.state, config, self.params, gear=3)

        self.assertAlmostEqual(command.brake_duty, 40.0, places=12)
        self.assertEqual(command.throttle, 0.0)
        self.assertEqual(brake_duty(-50.0, config), 100.0)

    def test_brake_duty_monotone(self):
        duties = [brake_duty(a, self.config) for a in np.linspace(-0.06, -10.0, 200)]

        self.assertTrue(all(b >= a for a, b in zip(duties, duties[1:])))

    def test_mutual_exclusion(self):
        rng = np.random.default_rng(23)

        for a_desired in rng.uniform(-6.0, 4.0, 500):
            command = longitudinal_actuation(float(a_desired), self.state, self.config, self.params, gear=3)
            self.assertEqual(command.throttle * command.brake_duty, 0.0)

        with self.assertRaises(InputDomainError):
            ControlCommand(throttle=0.2, brake_duty=10.0)

    def test_inverse_map_consistency(self):
        omega = self.state.omega_f

        for a_desired in (0.2, 0.5, 1.0, 1.5, 2.0):
            with self.subTest(a_desired=a_desired):
                command = longitudinal_actuation(a_desired, self.state, self.config, self.params, gear=3)
                requested = required_wheel_force(a_desired, self.state, self.params)

                self.assertLess(command.throttle, 1.0)
                delivered = wheel_force(self.params, command.throttle, omega, 3)
                self.assertLessEqual(abs(delivered - requested) / requested, 0.02)
                self.assertGreaterEqual(delivered, requested)

    def test_inverse_map_saturates(self):
        self.assertEqual(inverse_engine_map(self.params, 1e9, self.state.omega_f, 3), 1.0)
        self.assertEqual(inverse_engine_map(self.params, -10.0, self.state.omega_f, 3), 0.0)

    def test_plant_inputs_split_brake(self):
        command = ControlCommand(brake_duty=50.0)
        inputs = plant_inputs(command, 0.01, self.params, self.config, gear=3)

        total = 0.5 * self.config.max_brake_torque
        self.assertAlmostEqual(inputs.brake_front, 0.7 * total, places=9)
        self.assertAlmostEqual(inputs.brake_rear, 0.3 * total, places=9)
        self.assertEqual(inputs.throttle, 0.0)
        self.assertEqual(inputs.delta_f, 0.01)


# ---------------------------------------------------------------------------------------------------------- #
# Steering
# ---------------------------------------------------------------------------------------------------------- #
class TestSteeringPI(TestCase):

    def setUp(self):
        self.config = ActuationConfig(steer_kp=2.0, steer_ki=0.0, steer_output_limit=1.0)

    def test_zero_error(self):
        self.assertEqual(steering_pi(0.1, 0.1, ServoState(), self.config, 0.01), 0.0)

    def test_proportional(self):
        self.assertAlmostEqual(steering_pi(0.1, 0.0, ServoState(), self.config, 0.01), 0.2, places=12)

    def test_integrator_frozen_while_saturated(self):
        config = ActuationConfig(steer_kp=20.0, steer_ki=5.0, steer_output_limit=1.0)
        servo = ServoState(integrator=0.1)

        for _ in range(10):
            command = steering_pi(0.5, 0.0, servo, config, 0.01)
            self.assertEqual(command, 1.0)
            self.assertEqual(servo.integrator, 0.1)

    def test_integrates_when_unsaturated(self):
        config = ActuationConfig(steer_kp=1.0, steer_ki=10.0)
        servo = ServoState()

        steering_pi(0.01, 0.0, servo, config, 0.01)

        self.assertAlmostEqual(servo.integrator, 0.001, places=15)

    def test_dt_must_be_positive(self):
        with self.assertRaises(InputDomainError):
            steering_pi(0.1, 0.0, ServoState(), self.config, 0.0)


class TestSteeringPlant(TestCase):

    def setUp(self):
        self.config = load_nominal_vehicle().actuation

    def test_equilibrium(self):
        plant = SteeringPlantState()

        for _ in range(100):
            steering_plant(0.0, plant, self.config, 0.001)

        self.assertEqual(plant.angle, 0.0)

    def test_slew_limit(self):
        plant = SteeringPlantState()
        previous = 0.0

        for _ in range(2000):
            angle = steering_plant(1.0, plant, self.config, 0.001)
            self.assertLessEqual(abs(angle - previous), self.config.steer_rate_limit * 0.001 + 1e-15)
            self.assertLessEqual(abs(angle), self.config.steer_angle_limit)
            previous = angle

        self.assertAlmostEqual(plant.angle, self.config.steer_angle_limit, places=6)

    def test_first_order_response(self):
        plant = SteeringPlantState()
        command = 0.05
        steps = int(round(5 * self.config.steer_time_constant / 0.001))

        for _ in range(steps):
            steering_plant(command, plant, self.config, 0.001)

        target = command * self.config.steer_angle_limit
        self.assertLess(abs(plant.angle - target) / target, 0.01)

    def test_steering_wheel_angle(self):
        self.assertAlmostEqual(steering_wheel_angle(0.1, self.config), math.degrees(1.6), places=12)


class TestSteeringLoop(TestCase):

    def setUp(self):
        self.config = load_nominal_vehicle().actuation

    def _run(self, reference, seconds):
        servo, plant = ServoState(), SteeringPlantState()
        angles = [0.0]

        for _ in range(int(round(seconds / 0.01))):
            command = steering_pi(reference, plant.angle, servo, self.config, 0.01)
            for _ in range(10):
                angles.append(steering_plant(command, plant, self.config, 0.001))

        return np.array(angles)

    def test_step_settles_without_error(self):
        angles = self._run(0.02, 2.0)

        self.assertLess(abs(angles[-1] - 0.02), 1e-5)

    def test_limits_respected_on_large_step(self):
        angles = self._run(0.3, 3.0)

        self.assertTrue(np.all(np.abs(np.diff(angles)) <= self.config.steer_rate_limit * 0.001 + 1e-15))
        self.assertTrue(np.all(np.abs(angles) <= self.config.steer_angle_limit))


if __name__ == '__main__':
    unittest.main()
