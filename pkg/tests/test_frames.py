import math

import numpy as np
import pytest

from lidarweather.frames import (
    DEFAULT_ROI,
    Frame,
    GroundTruth,
    Point,
    RoiBounds,
    SensorDescriptor,
    WeatherLabel,
    cartesian_from_spherical,
    frames_equal,
    partition_by_echo,
    roi_filter,
    spherical_from_cartesian,
)

from conftest import random_frame


class TestSphericalConversion:
    def test_origin_convention(self):
        assert spherical_from_cartesian(0.0, 0.0, 0.0) == (0.0, 0.0, 0.0)

    def test_forward_axis(self):
        assert spherical_from_cartesian(1.0, 0.0, 0.0) == (1.0, 0.0, 0.0)

    def test_round_trip_random(self, rng):
        # invariant: round-trip error < 1e-9 m for r in (0, 200]
        for _ in range(1000):
            x, y, z = rng.uniform(-100.0, 100.0, 3)
            r, theta, phi = spherical_from_cartesian(x, y, z)
            assert 0.0 < r <= 200.0 * math.sqrt(3)
            xb, yb, zb = cartesian_from_spherical(r, theta, phi)
            assert abs(xb - x) < 1e-9 and abs(yb - y) < 1e-9 and abs(zb - z) < 1e-9

    def test_angle_conventions(self):
        _, theta, _ = spherical_from_cartesian(0.0, 0.0, 2.0)
        assert theta == pytest.approx(math.pi / 2)
        _, _, phi = spherical_from_cartesian(0.0, 3.0, 0.0)
        assert phi == pytest.approx(math.pi / 2)


class TestPoint:
    def test_from_cartesian_consistent(self):
        p = Point.from_cartesian(3.0, 4.0, 0.0, echo=2, pulse=5.0)
        assert p.r == pytest.approx(5.0)

    def test_echo_out_of_range(self):
        with pytest.raises(ValueError, match="echo"):
            Point.from_cartesian(1.0, 0.0, 0.0, echo=4, pulse=1.0)

    def test_negative_pulse(self):
        with pytest.raises(ValueError, match="pulse"):
            Point.from_cartesian(1.0, 0.0, 0.0, echo=1, pulse=-0.1)

    def test_inconsistent_range(self):
        with pytest.raises(ValueError, match="inconsistent"):
            Point(1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1, 1.0)


class TestFrame:
    def test_empty_frame_is_legal(self):
        frame = Frame.empty()
        assert len(frame) == 0

    def test_immutable(self):
        frame = Frame.empty()
        with pytest.raises(AttributeError):
            frame.k = 3
        with pytest.raises(ValueError):
            frame.x[...] = 1.0

    def test_column_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            Frame(0, SensorDescriptor(), [1.0], [0.0], [0.0], [1.0], [0.0], [0.0],
                  [1, 1], [1.0])

    def test_bad_echo_column(self):
        with pytest.raises(ValueError, match="echo"):
            Frame.from_cartesian(0, [1.0], [0.0], [0.0], [7], [1.0])

    def test_points_round_trip(self, rng):
        frame = random_frame(rng, n=20)
        rebuilt = Frame.from_points(frame.k, frame.points, frame.sensor)
        assert frames_equal(frame, rebuilt)

    def test_sensor_descriptor_validation(self):
        with pytest.raises(ValueError):
            SensorDescriptor(pulse_kind="amplitude")
        with pytest.raises(ValueError):
            SensorDescriptor(max_echoes=4)


class TestGroundTruth:
    def test_fog_requires_visibility(self):
        with pytest.raises(ValueError, match="visibility"):
            GroundTruth(WeatherLabel.FOG)

    def test_rain_requires_rate(self):
        with pytest.raises(ValueError, match="rain rate"):
            GroundTruth(WeatherLabel.RAIN)

    def test_condition_keys(self):
        assert GroundTruth(WeatherLabel.CLEAR).condition_key() == "clear"
        assert GroundTruth(WeatherLabel.FOG, visibility=30.0).condition_key() == "fog_30"
        assert GroundTruth(WeatherLabel.RAIN, rain_rate=55.0).condition_key() == "rain_55"


class TestRoiFilter:
    def test_one_point_per_violated_bound(self):
        frame = Frame.from_cartesian(
            0, [5.0, 25.0, 5.0], [0.0, 0.0, 2.0], [0.0, 0.0, 0.0],
            [1, 1, 1], [1.0, 1.0, 1.0])
        kept = roi_filter(frame, DEFAULT_ROI)
        assert len(kept) == 1
        assert kept.x[0] == 5.0 and kept.y[0] == 0.0

    def test_empty_frame(self):
        assert len(roi_filter(Frame.empty())) == 0

    def test_matches_brute_force_predicate(self, rng):
        frame = random_frame(rng, n=10_000)
        roi = RoiBounds(x_max=18.0, y_min=-2.0, y_max=1.0)
        kept = roi_filter(frame, roi)
        expected = [i for i in range(len(frame))
                    if frame.x[i] <= roi.x_max and roi.y_min <= frame.y[i] <= roi.y_max]
        assert len(kept) == len(expected)
        assert np.array_equal(kept.x, frame.x[expected])
        assert np.array_equal(kept.pulse, frame.pulse[expected])

    def test_idempotent(self, rng):
        frame = random_frame(rng, n=500)
        once = roi_filter(frame)
        twice = roi_filter(once)
        assert frames_equal(once, twice)

    def test_preserves_k_sensor_and_ids(self, rng):
        frame = random_frame(rng, n=100, k=17, with_object_ids=True)
        kept = roi_filter(frame)
        assert kept.k == 17 and kept.sensor == frame.sensor
        assert kept.object_ids is not None and len(kept.object_ids) == len(kept)

    def test_roi_bounds_validation(self):
        with pytest.raises(ValueError):
            RoiBounds(y_min=2.0, y_max=-2.0)
        with pytest.raises(ValueError):
            RoiBounds(x_max=-1.0)


class TestPartitionByEcho:
    def test_all_first_echo(self):
        frame = Frame.from_cartesian(0, [1.0, 2.0], [0.0, 0.0], [0.0, 0.0],
                                     [1, 1], [1.0, 1.0])
        parts = partition_by_echo(frame)
        assert len(parts[1]) == 2 and len(parts[2]) == 0 and len(parts[3]) == 0

    def test_empty_frame(self):
        parts = partition_by_echo(Frame.empty())
        assert all(len(parts[t]) == 0 for t in (1, 2, 3))

    def test_counting_oracle_and_union(self, rng):
        frame = random_frame(rng, n=2000)
        parts = partition_by_echo(frame)
        for t in (1, 2, 3):
            assert len(parts[t]) == sum(1 for e in frame.echo if e == t)
        # disjoint union covering the frame
        assert sum(len(parts[t]) for t in (1, 2, 3)) == len(frame)

    def test_order_preserved(self, rng):
        frame = random_frame(rng, n=300)
        parts = partition_by_echo(frame)
        for t in (1, 2, 3):
            sub = parts[t]
            assert np.array_equal(sub.r, frame.r[frame.echo == t])
