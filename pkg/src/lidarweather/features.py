"""Per-frame statistics: the 16-component weather feature vector.

Component order (index 0..15):

====  ==================  ====  =====================
f1    n_echo1             f9    mean_range
f2    n_echo2             f10   mean_azimuth
f3    n_echo3             f11   mean_elevation
f4    mean_range_echo1    f12   pulse_var
f5    mean_range_echo2    f13   pulse_mean
f6    mean_range_echo3    f14   eig1
f7    mean_echo           f15   eig2
f8    var_echo            f16   eig3
====  ==================  ====  =====================

Components whose defining point set is empty are stored as 0 with the
corresponding mask bit set, so downstream distance computations stay total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .frames import DEFAULT_ROI, Frame, RoiBounds, roi_filter

FEATURE_NAMES = (
    "n_echo1", "n_echo2", "n_echo3",
    "mean_range_echo1", "mean_range_echo2", "mean_range_echo3",
    "mean_echo", "var_echo",
    "mean_range", "mean_azimuth", "mean_elevation",
    "pulse_var", "pulse_mean",
    "eig1", "eig2", "eig3",
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """The 16 per-frame statistics plus a validity mask (True = undefined, stored 0)."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if values.shape != (N_FEATURES,) or mask.shape != (N_FEATURES,):
            raise ValueError(f"feature vector must have exactly {N_FEATURES} components")
        if np.any(values[mask] != 0.0):
            raise ValueError("masked components must carry value 0")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)


def echo_counts(frame: Frame) -> tuple[int, int, int]:
    """Number of points per echo (N_1, N_2, N_3)."""
    return (
        int(np.count_nonzero(frame.echo == 1)),
        int(np.count_nonzero(frame.echo == 2)),
        int(np.count_nonzero(frame.echo == 3)),
    )


def attribute_mean_var(values) -> tuple[float, float]:
    """Mean and population (1/n) variance of one attribute column.

    Raises ValueError on empty input; the caller is expected to mask the
    feature instead of propagating a value.
    """
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("attribute_mean_var requires a non-empty input")
    mean = float(arr.mean())
    var = float(np.mean((arr - mean) ** 2))
    return mean, var


def mean_range_per_echo(frame: Frame, t: int) -> tuple[float, bool]:
    """Mean range over the echo-t subset; (0.0, True) when the subset is empty."""
    sel = frame.r[frame.echo == t]
    if sel.size == 0:
        return 0.0, True
    return float(sel.mean()), False


def covariance_eigenvalues(frame: Frame) -> tuple[np.ndarray, bool]:
    """Eigenvalues of the 3x3 population covariance of (x, y, z), sorted descending.

    Tiny negative values from the symmetric eigensolver are clamped to 0.
    Returns (zeros, True) for an empty frame.
    """
    n = len(frame)
    if n == 0:
        return np.zeros(3), True
    pts = np.stack([frame.x, frame.y, frame.z])
    centered = pts - pts.mean(axis=1, keepdims=True)
    cov = centered @ centered.T / n
    eig = np.linalg.eigvalsh(cov)[::-1]
    return np.maximum(eig, 0.0), False


def axis_variances(frame: Frame) -> tuple[np.ndarray, bool]:
    """Per-axis population variances (var x, var y, var z): the literal reading
    of the per-axis covariance notation, kept as an alternative to the joint
    3x3 eigenvalues."""
    if len(frame) == 0:
        return np.zeros(3), True
    return np.array([
        attribute_mean_var(frame.x)[1],
        attribute_mean_var(frame.y)[1],
        attribute_mean_var(frame.z)[1],
    ]), False


def extract_features(frame: Frame, roi: RoiBounds = DEFAULT_ROI, *,
                     apply_roi: bool = True, eigen_mode: str = "joint") -> FeatureVector:
    """Compute the 16-feature vector of an (optionally ROI-filtered) frame.

    ``eigen_mode`` selects how f14..f16 are computed: ``"joint"`` (sorted
    eigenvalues of the joint covariance, the default) or ``"per_axis"``
    (variances of x, y, z).
    """
    if eigen_mode not in ("joint", "per_axis"):
        raise ValueError(f"eigen_mode must be 'joint' or 'per_axis', got {eigen_mode!r}")
    target = roi_filter(frame, roi) if apply_roi else frame
    values = np.zeros(N_FEATURES)
    mask = np.zeros(N_FEATURES, dtype=bool)
    if len(target) == 0:
        return FeatureVector(values, np.ones(N_FEATURES, dtype=bool))

    values[0:3] = echo_counts(target)
    for t in (1, 2, 3):
        values[2 + t], mask[2 + t] = mean_range_per_echo(target, t)
    values[6], values[7] = attribute_mean_var(target.echo)
    values[8] = attribute_mean_var(target.r)[0]
    values[9] = attribute_mean_var(target.phi)[0]
    values[10] = attribute_mean_var(target.theta)[0]
    pulse_mean, pulse_var = attribute_mean_var(target.pulse)
    values[11] = pulse_var
    values[12] = pulse_mean
    if eigen_mode == "joint":
        values[13:16], eig_masked = covariance_eigenvalues(target)
    else:
        values[13:16], eig_masked = axis_variances(target)
    mask[13:16] = eig_masked
    return FeatureVector(values, mask)


def feature_matrix(feature_vectors) -> tuple[np.ndarray, np.ndarray]:
    """Stack FeatureVectors into (values, masks) arrays of shape (n, 16)."""
    fvs = list(feature_vectors)
    if not fvs:
        return np.zeros((0, N_FEATURES)), np.zeros((0, N_FEATURES), dtype=bool)
    return np.stack([fv.values for fv in fvs]), np.stack([fv.mask for fv in fvs])


class FrameFeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer mapping a sequence of frames to an (n, 16) matrix.

    Parameters
    ----------
    roi : RoiBounds or None
        Spatial gate applied before extraction; None means the package default.
    apply_roi : bool
        Set False to extract from the full cloud (ablation switch).
    eigen_mode : str
        "joint" or "per_axis", see :func:`extract_features`.
    append_mask : bool
        If True, transform returns (n, 32) with the mask bits appended as 0/1
        columns; off by default since the classifiers consume exactly the 16
        feature slots.
    """

    def __init__(self, roi=None, apply_roi=True, eigen_mode="joint", append_mask=False):
        self.roi = roi
        self.apply_roi = apply_roi
        self.eigen_mode = eigen_mode
        self.append_mask = append_mask

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        roi = self.roi if self.roi is not None else DEFAULT_ROI
        fvs = [extract_features(frame, roi, apply_roi=self.apply_roi,
                                eigen_mode=self.eigen_mode) for frame in X]
        values, masks = feature_matrix(fvs)
        if self.append_mask:
            return np.hstack([values, masks.astype(np.float64)])
        return values
