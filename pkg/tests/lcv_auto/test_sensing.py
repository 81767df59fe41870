import math
import unittest
from unittest import TestCase

import numpy as np

from src.lcv_auto.dynamics import VehicleState
from src.lcv_auto.exceptions import ConfigurationError
from src.lcv_auto.projection import to_world_frame, wrap_angle
from src.lcv_auto.sensing import (CompassNoiseState, GpsFix, GpsNoiseState, NoiseModelParams, SensorSuite,
                                  WorldObject, compass_model, gps_model, heading_fusion, lidar_model, radar_model,
                                  sample_period)


def _gps_trace(params, n, seed):
    noise = GpsNoiseState(rng=np.random.default_rng(seed))
    state = VehicleState(x=12.0, y=-4.0, psi=0.4, vx=10.0)
    return [gps_model(state, noise, params, 0.1 * k) for k in range(n)]


class TestNoiseModelParams(TestCase):

    def test_defaults(self):
        params = NoiseModelParams()

        self.assertEqual(params.gps_bound, 1.5)
        self.assertEqual(params.gps_correlation_time, 60.0)
        self.assertAlmostEqual(params.gps_sigma * math.sqrt(2 * math.log(100)), 1.5, places=12)

    def test_validation(self):
        with self.assertRaises(ConfigurationError):
            NoiseModelParams(gps_correlation_time=0.0)

        with self.assertRaises(ConfigurationError):
            NoiseModelParams(radar_range_sigma=-0.1)

        with self.assertRaises(ConfigurationError):
            NoiseModelParams(compass_burst_probability=1.5)

    def test_sample_period(self):
        self.assertEqual(sample_period(10.0, 0.001), 100)
        self.assertEqual(sample_period(12.5, 0.001), 80)

        with self.assertRaises(ConfigurationError):
            sample_period(5000.0, 0.001)


# ---------------------------------------------------------------------------------------------------------- #
# GPS and compass
# ---------------------------------------------------------------------------------------------------------- #
class TestGpsModel(TestCase):

    def test_noiseless_equals_truth(self):
        fix = _gps_trace(NoiseModelParams.noiseless(), 1, 0)[0]

        self.assertEqual((fix.x, fix.y, fix.speed), (12.0, -4.0, 10.0))
        self.assertAlmostEqual(fix.heading, 0.4, places=15)
        self.assertTrue(fix.valid)

    def test_error_bound(self):
        fixes = _gps_trace(NoiseModelParams(), 10_000, 3)
        errors = np.array([math.hypot(f.x - 12.0, f.y + 4.0) for f in fixes])

        self.assertLessEqual(np.quantile(errors, 0.99), 2.0)
        self.assertLessEqual(errors.max(), NoiseModelParams().gps_bound + 1e-12)

    def test_correlated_error(self):
        fixes = _gps_trace(NoiseModelParams(), 100, 5)
        offsets = np.array([f.x - 12.0 for f in fixes])

        self.assertLess(np.max(np.abs(np.diff(offsets))), 0.2)

    def test_determinism(self):
        self.assertEqual(_gps_trace(NoiseModelParams(), 500, 11), _gps_trace(NoiseModelParams(), 500, 11))
        self.assertNotEqual(_gps_trace(NoiseModelParams(), 50, 11), _gps_trace(NoiseModelParams(), 50, 12))

    def test_timestamps(self):
        times = [fix.t for fix in _gps_trace(NoiseModelParams(), 50, 1)]

        self.assertTrue(all(b > a for a, b in zip(times, times[1:])))

    def test_propagate(self):
        fix = GpsFix(x=1.0, y=2.0, heading=math.pi / 2, speed=4.0, t=10.0)
        x, y = fix.propagate(10.5)

        self.assertAlmostEqual(x, 1.0, places=12)
        self.assertAlmostEqual(y, 4.0, places=12)


class TestCompassModel(TestCase):

    def test_bias(self):
        params = NoiseModelParams.noiseless(compass_bias=0.05)
        reading = compass_model(VehicleState(psi=0.2), CompassNoiseState(np.random.default_rng(0)), params, 0.0)

        self.assertAlmostEqual(reading.heading, 0.25, places=12)

    def test_burst(self):
        params = NoiseModelParams.noiseless(compass_burst_probability=1.0, compass_burst_magnitude=0.3,
                                            compass_burst_duration=0.5)
        noise = CompassNoiseState(np.random.default_rng(0))

        reading = compass_model(VehicleState(psi=0.0), noise, params, 0.0)

        self.assertAlmostEqual(abs(reading.heading), 0.3, places=12)
        self.assertEqual(noise.burst_until, 0.5)

    def test_wrapped(self):
        params = NoiseModelParams.noiseless(compass_bias=0.5)
        reading = compass_model(VehicleState(psi=3.0), CompassNoiseState(np.random.default_rng(0)), params, 0.0)

        self.assertAlmostEqual(reading.heading, wrap_angle(3.5), places=12)


class TestHeadingFusion(TestCase):

    def test_examples(self):
        fused, degenerate = heading_fusion(math.radians(10), math.radians(20))
        self.assertAlmostEqual(fused, math.radians(15), places=12)
        self.assertFalse(degenerate)

        fused, _ = heading_fusion(math.radians(350), math.radians(10))
        self.assertAlmostEqual(fused, 0.0, places=12)

        fused, _ = heading_fusion(0.7, 0.7)
        self.assertAlmostEqual(fused, 0.7, places=12)

    def test_antipodal(self):
        fused, degenerate = heading_fusion(0.0, math.pi)

        self.assertTrue(degenerate)
        self.assertEqual(fused, math.pi)

    def test_circular_mean_oracle(self):
        rng = np.random.default_rng(41)
        checked = 0

        for a, b in rng.uniform(-2 * math.pi, 2 * math.pi, size=(10_000, 2)):
            half_arc = wrap_angle(b - a) / 2
            if abs(half_arc) > math.pi / 2 - 1e-6:
                continue

            fused, degenerate = heading_fusion(a, b)
            expected = wrap_angle(a + half_arc)

            self.assertFalse(degenerate)
            self.assertLessEqual(abs(wrap_angle(fused - expected)), 1e-9)
            self.assertLessEqual(abs(wrap_angle(fused - heading_fusion(b, a)[0])), 1e-12)
            self.assertLessEqual(abs(wrap_angle(fused - a)), abs(half_arc) + 1e-9)
            self.assertGreater(fused, -math.pi)
            self.assertLessEqual(fused, math.pi)
            checked += 1

        self.assertGreater(checked, 9_900)


# ---------------------------------------------------------------------------------------------------------- #
# Radar and lidar
# ---------------------------------------------------------------------------------------------------------- #
class TestRadarModel(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_co_moving(self):
        ego = VehicleState(x=0.0, vx=15.0)
        lead = VehicleState(x=30.0, vx=15.0)

        track = radar_model(ego, lead, NoiseModelParams.noiseless(), 1.0, self.rng, 4.8, 4.4)

        self.assertTrue(track.valid)
        self.assertAlmostEqual(track.range, 30.0 - 4.6, places=12)
        self.assertAlmostEqual(track.range_rate, 0.0, places=12)
        self.assertEqual(track.t, 1.0)

    def test_closing(self):
        ego = VehicleState(psi=0.3, vx=20.0)
        lead = VehicleState(x=30.0 * math.cos(0.3), y=30.0 * math.sin(0.3), psi=0.3, vx=15.0)

        track = radar_model(ego, lead, NoiseModelParams.noiseless(), 0.0, self.rng, 4.0, 4.0)

        self.assertAlmostEqual(track.range_rate, -5.0, places=12)

    def test_out_of_range(self):
        lead = VehicleState(x=400.0)

        self.assertFalse(radar_model(VehicleState(), lead, NoiseModelParams.noiseless(), 0.0, self.rng,
                                     4.8, 4.8).valid)

    def test_out_of_field_of_view(self):
        lead = VehicleState(x=10.0, y=10.0)

        self.assertFalse(radar_model(VehicleState(), lead, NoiseModelParams.noiseless(), 0.0, self.rng,
                                     4.8, 4.8).valid)

    def test_unbiased_noise(self):
        params = NoiseModelParams()
        ego, lead = VehicleState(vx=10.0), VehicleState(x=40.0, vx=10.0)

        errors = np.array([radar_model(ego, lead, params, 0.0, self.rng, 4.0, 4.0).range - 36.0
                           for _ in range(10_000)])

        self.assertLessEqual(abs(errors.mean()), 3 * params.radar_range_sigma / math.sqrt(len(errors)))


class TestLidarModel(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(13)

    def test_empty_world(self):
        self.assertEqual(lidar_model(VehicleState(), [], NoiseModelParams(), 0.0, self.rng), [])

    def test_object_ahead(self):
        psi = 1.1
        ego = VehicleState(x=3.0, y=-2.0, psi=psi)
        obj = WorldObject(3.0 + 10.0 * math.cos(psi), -2.0 + 10.0 * math.sin(psi))

        detected = lidar_model(ego, [obj], NoiseModelParams.noiseless(), 0.5, self.rng)

        self.assertEqual(len(detected), 1)
        self.assertAlmostEqual(detected[0].x, 10.0, places=12)
        self.assertAlmostEqual(detected[0].y, 0.0, places=12)
        self.assertEqual(detected[0].t, 0.5)

    def test_gates(self):
        ego = VehicleState()
        behind, far = WorldObject(-5.0, 0.0), WorldObject(60.0, 0.0)

        self.assertEqual(lidar_model(ego, [behind, far], NoiseModelParams.noiseless(), 0.0, self.rng), [])

    def test_frame_consistency(self):
        params = NoiseModelParams()
        rng = np.random.default_rng(17)

        for ex, ey, psi, dx, dy in rng.uniform([-50, -50, -math.pi, 1, -10], [50, 50, math.pi, 20, 10],
                                               size=(200, 5)):
            ego = VehicleState(x=ex, y=ey, psi=psi)
            world = to_world_frame(ex, ey, psi, dx, dy)

            detected = lidar_model(ego, [WorldObject(*world)], params, 0.0, self.rng)

            self.assertEqual(len(detected), 1)
            recovered = to_world_frame(ex, ey, psi, detected[0].x, detected[0].y)
            self.assertLessEqual(math.hypot(recovered[0] - world[0], recovered[1] - world[1]),
                                 6 * params.lidar_sigma)


class TestSensorSuite(TestCase):

    def _run(self, seed):
        suite = SensorSuite(NoiseModelParams(seed=seed), ego_length=4.8, lead_length=4.8)
        ego, lead = VehicleState(vx=10.0), VehicleState(x=30.0, vx=10.0)
        trace = []

        for step in range(1000):
            suite.step(step, step * 0.001, ego, lead, [WorldObject(8.0, 1.0)])
            trace.append((suite.gps, suite.compass, suite.radar, tuple(suite.lidar)))

        return trace

    def test_rates(self):
        suite = SensorSuite(NoiseModelParams(), ego_length=4.8)

        self.assertEqual(suite.periods, {"gps": 100, "compass": 20, "radar": 50, "lidar": 80})

    def test_determinism(self):
        self.assertEqual(self._run(3), self._run(3))

    def test_seed_sequence_overrides_params_seed(self):
        ego = VehicleState(vx=10.0)
        fixes = []
        for seed in (1, 2):
            suite = SensorSuite(NoiseModelParams(seed=seed), ego_length=4.8,
                                seed_sequence=np.random.SeedSequence(11))
            suite.step(0, 0.0, ego)
            fixes.append(suite.gps)

        self.assertEqual(fixes[0], fixes[1])

    def test_readings_held_between_samples(self):
        trace = self._run(3)

        self.assertIs(trace[1][0], trace[99][0])
        self.assertIsNot(trace[99][0], trace[100][0])

    def test_fused_heading_falls_back(self):
        suite = SensorSuite(NoiseModelParams.noiseless(), ego_length=4.8)
        self.assertEqual(suite.fused_heading(), (None, False))

        suite.step(0, 0.0, VehicleState(psi=0.3))
        heading, degenerate = suite.fused_heading()

        self.assertAlmostEqual(heading, 0.3, places=12)
        self.assertFalse(degenerate)


if __name__ == '__main__':
    unittest.main()
