import math

import numpy as np
import pytest

from lidarweather.features import (
    FEATURE_NAMES,
    FeatureVector,
    FrameFeatureExtractor,
    attribute_mean_var,
    covariance_eigenvalues,
    echo_counts,
    extract_features,
    mean_range_per_echo,
)
from lidarweather.frames import DEFAULT_ROI, Frame, RoiBounds, roi_filter

from conftest import random_frame


def eigenvalues_closed_form(m):
    """Trigonometric closed-form eigenvalues of a symmetric 3x3 matrix,
    descending: an oracle independent of the LAPACK path."""
    p1 = m[0][1] ** 2 + m[0][2] ** 2 + m[1][2] ** 2
    if p1 == 0.0:
        return sorted((m[0][0], m[1][1], m[2][2]), reverse=True)
    q = (m[0][0] + m[1][1] + m[2][2]) / 3.0
    p2 = (m[0][0] - q) ** 2 + (m[1][1] - q) ** 2 + (m[2][2] - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    b = [[(m[i][j] - (q if i == j else 0.0)) / p for j in range(3)] for i in range(3)]
    det_b = (b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
             - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
             + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]))
    r = max(-1.0, min(1.0, det_b / 2.0))
    phi = math.acos(r) / 3.0
    e1 = q + 2.0 * p * math.cos(phi)
    e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    return [e1, 3.0 * q - e1 - e3, e3]


def reference_features(frame, roi=DEFAULT_ROI):
    """Straight-line per-point recomputation of all 16 features with fsum."""
    pts = [frame.point(i) for i in range(len(frame))
           if frame.x[i] <= roi.x_max and roi.y_min <= frame.y[i] <= roi.y_max]
    values = [0.0] * 16
    mask = [False] * 16
    n = len(pts)
    if n == 0:
        return values, [True] * 16

    def mean(vals):
        return math.fsum(vals) / len(vals)

    def var(vals):
        m = mean(vals)
        return math.fsum((v - m) ** 2 for v in vals) / len(vals)

    for t in (1, 2, 3):
        sub = [p.r for p in pts if p.echo == t]
        values[t - 1] = float(len(sub))
        if sub:
            values[2 + t] = mean(sub)
        else:
            mask[2 + t] = True
    values[6] = mean([p.echo for p in pts])
    values[7] = var([p.echo for p in pts])
    values[8] = mean([p.r for p in pts])
    values[9] = mean([p.phi for p in pts])
    values[10] = mean([p.theta for p in pts])
    values[11] = var([p.pulse for p in pts])
    values[12] = mean([p.pulse for p in pts])
    mx, my, mz = mean([p.x for p in pts]), mean([p.y for p in pts]), mean([p.z for p in pts])
    cov = [[math.fsum((ai - ma) * (bi - mb) for ai, bi in zip(a, b)) / n
            for b, mb in (([p.x for p in pts], mx), ([p.y for p in pts], my),
                          ([p.z for p in pts], mz))]
           for a, ma in (([p.x for p in pts], mx), ([p.y for p in pts], my),
                         ([p.z for p in pts], mz))]
    values[13:16] = [max(v, 0.0) for v in eigenvalues_closed_form(cov)]
    return values, mask


def assert_feature_match(fv, ref_values, ref_mask, tol=1e-9):
    for i in range(16):
        scale = max(1.0, abs(ref_values[i]))
        assert abs(fv.values[i] - ref_values[i]) <= tol * scale, (
            f"{FEATURE_NAMES[i]}: {fv.values[i]} vs reference {ref_values[i]}")
        assert bool(fv.mask[i]) == ref_mask[i], FEATURE_NAMES[i]


class TestEchoCounts:
    def test_empty(self):
        assert echo_counts(Frame.empty()) == (0, 0, 0)

    def test_all_second_echo(self):
        frame = Frame.from_cartesian(0, [1.0] * 7, [0.0] * 7, [0.0] * 7, [2] * 7, [1.0] * 7)
        assert echo_counts(frame) == (0, 7, 0)

    def test_matches_partition_sizes(self, rng):
        from lidarweather.frames import partition_by_echo
        frame = random_frame(rng, n=1000)
        parts = partition_by_echo(frame)
        assert echo_counts(frame) == tuple(len(parts[t]) for t in (1, 2, 3))


class TestAttributeMeanVar:
    def test_constant(self):
        mean, var = attribute_mean_var([3.5, 3.5, 3.5])
        assert mean == 3.5 and var == 0.0

    def test_hand_arithmetic_population_convention(self):
        mean, var = attribute_mean_var([1.0, 3.0])
        assert mean == 2.0 and var == 1.0

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="non-empty"):
            attribute_mean_var([])

    def test_against_two_pass_fsum(self, rng):
        vals = rng.uniform(-50.0, 50.0, 1000)
        mean, var = attribute_mean_var(vals)
        ref_mean = math.fsum(vals) / len(vals)
        ref_var = math.fsum((v - ref_mean) ** 2 for v in vals) / len(vals)
        assert mean == pytest.approx(ref_mean, rel=1e-12)
        assert var == pytest.approx(ref_var, rel=1e-12)


class TestMeanRangePerEcho:
    def test_hand_case(self):
        frame = Frame.from_cartesian(0, [4.0, 6.0], [0.0, 0.0], [0.0, 0.0],
                                     [2, 2], [1.0, 1.0])
        value, masked = mean_range_per_echo(frame, 2)
        assert value == 5.0 and not masked

    def test_empty_subset_masked(self):
        frame = Frame.from_cartesian(0, [4.0], [0.0], [0.0], [1], [1.0])
        value, masked = mean_range_per_echo(frame, 3)
        assert value == 0.0 and masked

    def test_filter_then_average_oracle(self, rng):
        frame = random_frame(rng, n=800)
        for t in (1, 2, 3):
            sub = [frame.r[i] for i in range(len(frame)) if frame.echo[i] == t]
            value, masked = mean_range_per_echo(frame, t)
            if sub:
                assert not masked and value == pytest.approx(math.fsum(sub) / len(sub), rel=1e-12)
            else:
                assert masked and value == 0.0


class TestCovarianceEigenvalues:
    def test_identical_points(self):
        frame = Frame.from_cartesian(0, [2.0] * 5, [1.0] * 5, [0.5] * 5, [1] * 5, [1.0] * 5)
        eig, masked = covariance_eigenvalues(frame)
        assert not masked
        assert np.allclose(eig, 0.0)

    def test_rank_one_on_x_axis(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        frame = Frame.from_cartesian(0, xs, [0.0] * 4, [0.0] * 4, [1] * 4, [1.0] * 4)
        eig, _ = covariance_eigenvalues(frame)
        v = np.var(xs)
        assert eig[0] == pytest.approx(v, rel=1e-12)
        assert eig[1] == pytest.approx(0.0, abs=1e-12)
        assert eig[2] == pytest.approx(0.0, abs=1e-12)

    def test_empty_frame_masked(self):
        eig, masked = covariance_eigenvalues(Frame.empty())
        assert masked and np.array_equal(eig, np.zeros(3))

    def test_trace_and_closed_form(self, rng):
        for _ in range(500):
            frame = random_frame(rng, n=int(rng.integers(1, 60)))
            eig, _ = covariance_eigenvalues(frame)
            pts = np.stack([frame.x, frame.y, frame.z])
            centered = pts - pts.mean(axis=1, keepdims=True)
            cov = centered @ centered.T / len(frame)
            assert abs(eig.sum() - np.trace(cov)) < 1e-9 * max(1.0, np.trace(cov))
            ref = eigenvalues_closed_form(cov.tolist())
            scale = max(1.0, abs(ref[0]))
            assert np.all(np.abs(eig - np.maximum(ref, 0.0)) < 1e-8 * scale)
            assert eig[0] >= eig[1] >= eig[2] >= 0.0


class TestExtractFeatures:
    def test_empty_frame_all_masked(self):
        fv = extract_features(Frame.empty())
        assert np.all(fv.values == 0.0) and np.all(fv.mask)

    def test_singleton_point(self):
        frame = Frame.from_cartesian(0, [5.0], [0.0], [0.0], [1], [10.0])
        fv = extract_features(frame)
        assert tuple(fv.values[0:3]) == (1.0, 0.0, 0.0)
        assert fv.values[3] == 5.0          # mean range echo 1
        assert fv.mask[4] and fv.mask[5]    # echoes 2/3 undefined
        assert fv.values[6] == 1.0 and fv.values[7] == 0.0
        assert fv.values[8] == 5.0
        assert fv.values[11] == 0.0 and fv.values[12] == 10.0
        assert np.allclose(fv.values[13:16], 0.0)

    def test_independent_recomputation(self, rng):
        for _ in range(25):
            frame = random_frame(rng)
            fv = extract_features(frame)
            ref_values, ref_mask = reference_features(frame)
            assert_feature_match(fv, ref_values, ref_mask)

    def test_order_invariance(self, rng):
        frame = random_frame(rng, n=300)
        perm = rng.permutation(len(frame))
        shuffled = frame.take(perm)
        a = extract_features(frame)
        b = extract_features(shuffled)
        assert np.allclose(a.values, b.values, rtol=1e-12, atol=1e-12)
        assert np.array_equal(a.mask, b.mask)

    def test_scaling_property(self, rng):
        frame = random_frame(rng, n=200)
        s = 2.5
        scaled = Frame.from_cartesian(frame.k, frame.x * s, frame.y * s, frame.z * s,
                                      frame.echo, frame.pulse, frame.sensor)
        # compare without the ROI so the same points enter both computations
        a = extract_features(frame, apply_roi=False)
        b = extract_features(scaled, apply_roi=False)
        assert np.allclose(b.values[0:3], a.values[0:3])             # counts unchanged
        assert np.allclose(b.values[3:6], s * a.values[3:6])         # ranges scale by s
        assert b.values[8] == pytest.approx(s * a.values[8])
        assert np.allclose(b.values[6:8], a.values[6:8])             # echo stats unchanged
        assert np.allclose(b.values[11:13], a.values[11:13])         # pulse stats unchanged
        assert np.allclose(b.values[13:16], s * s * a.values[13:16], rtol=1e-9)

    def test_echo_sum_equals_roi_count(self, rng):
        frame = random_frame(rng, n=700)
        fv = extract_features(frame)
        assert fv.values[0:3].sum() == len(roi_filter(frame))

    def test_echo1_only_frame(self):
        frame = Frame.from_cartesian(0, [5.0, 6.0, 7.0], [0.0, 0.1, -0.1],
                                     [0.0, 0.0, 0.0], [1, 1, 1], [1.0, 2.0, 3.0])
        fv = extract_features(frame)
        assert fv.values[6] == 1.0 and fv.values[7] == 0.0
        assert fv.values[1] == 0.0 and fv.values[2] == 0.0
        assert fv.mask[4] and fv.mask[5]

    def test_per_axis_eigen_mode(self, rng):
        frame = random_frame(rng, n=150)
        fv = extract_features(frame, apply_roi=False, eigen_mode="per_axis")
        assert fv.values[13] == pytest.approx(np.var(frame.x), rel=1e-12)
        assert fv.values[14] == pytest.approx(np.var(frame.y), rel=1e-12)
        assert fv.values[15] == pytest.approx(np.var(frame.z), rel=1e-12)

    def test_masked_components_are_zero(self):
        with pytest.raises(ValueError, match="masked"):
            FeatureVector(np.ones(16), np.ones(16, dtype=bool))


class TestFrameFeatureExtractor:
    def test_transform_shape(self, rng):
        frames = [random_frame(rng, n=50) for _ in range(5)]
        X = FrameFeatureExtractor().transform(frames)
        assert X.shape == (5, 16)

    def test_append_mask(self, rng):
        frames = [Frame.empty()]
        X = FrameFeatureExtractor(append_mask=True).transform(frames)
        assert X.shape == (1, 32)
        assert np.all(X[0, 16:] == 1.0)

    def test_matches_function(self, rng):
        frame = random_frame(rng, n=80)
        roi = RoiBounds(x_max=15.0, y_min=-1.0, y_max=1.0)
        X = FrameFeatureExtractor(roi=roi).transform([frame])
        fv = extract_features(frame, roi)
        assert np.array_equal(X[0], fv.values)

    def test_sklearn_clone_round_trip(self):
        from sklearn.base import clone
        ext = FrameFeatureExtractor(apply_roi=False, eigen_mode="per_axis")
        cloned = clone(ext)
        assert cloned.get_params() == ext.get_params()
