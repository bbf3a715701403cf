"""Lidar point/frame model, coordinate conversions, ROI gating and echo partitioning."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Maximum tolerated |r - sqrt(x^2+y^2+z^2)| when validating a frame, in meters.
RANGE_CONSISTENCY_TOL = 1e-6

VALID_ECHOES = (1, 2, 3)


class WeatherLabel(enum.IntEnum):
    """Weather classes, numbered 1..3 (clear, rain, fog)."""

    CLEAR = 1
    RAIN = 2
    FOG = 3

    @classmethod
    def from_name(cls, name: str) -> "WeatherLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown weather label {name!r}") from None

    @property
    def display_name(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class SensorDescriptor:
    """Which pulse measure a sensor reports and how many echoes it can return."""

    pulse_kind: str = "intensity"  # "intensity" or "epw"
    max_echoes: int = 3

    def __post_init__(self):
        if self.pulse_kind not in ("intensity", "epw"):
            raise ValueError(f"pulse_kind must be 'intensity' or 'epw', got {self.pulse_kind!r}")
        if self.max_echoes not in (2, 3):
            raise ValueError(f"max_echoes must be 2 or 3, got {self.max_echoes}")


DEFAULT_SENSOR = SensorDescriptor()


@dataclass(frozen=True)
class RoiBounds:
    """Near-range gate: keep points with x <= x_max and y_min <= y <= y_max."""

    x_max: float = 20.0
    y_min: float = -1.5
    y_max: float = 1.5

    def __post_init__(self):
        if not self.y_min < self.y_max:
            raise ValueError(f"y_min must be < y_max, got [{self.y_min}, {self.y_max}]")
        if not self.x_max > 0:
            raise ValueError(f"x_max must be > 0, got {self.x_max}")


DEFAULT_ROI = RoiBounds()


@dataclass(frozen=True)
class GroundTruth:
    """Weather condition a frame was recorded under.

    ``visibility`` is required for fog, ``rain_rate`` for rain; neither is
    meaningful for clear frames.
    """

    label: WeatherLabel
    visibility: float | None = None  # meters
    rain_rate: float | None = None   # mm/h

    def __post_init__(self):
        object.__setattr__(self, "label", WeatherLabel(self.label))
        if self.label is WeatherLabel.FOG and self.visibility is None:
            raise ValueError("fog ground truth requires a visibility")
        if self.label is WeatherLabel.RAIN and self.rain_rate is None:
            raise ValueError("rain ground truth requires a rain rate")
        if self.visibility is not None and self.visibility <= 0:
            raise ValueError(f"visibility must be > 0, got {self.visibility}")
        if self.rain_rate is not None and self.rain_rate < 0:
            raise ValueError(f"rain_rate must be >= 0, got {self.rain_rate}")

    def condition_key(self) -> str:
        """Short id of the condition, e.g. ``clear``, ``rain_55``, ``fog_30``."""
        if self.label is WeatherLabel.FOG:
            return f"fog_{self.visibility:g}"
        if self.label is WeatherLabel.RAIN:
            return f"rain_{self.rain_rate:g}"
        return "clear"


def spherical_from_cartesian(x: float, y: float, z: float) -> tuple[float, float, float]:
    """Map (x, y, z) to (range, elevation, azimuth); the origin maps to (0, 0, 0).

    Elevation is measured from the xy-plane, azimuth from +x toward +y.
    """
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        return 0.0, 0.0, 0.0
    theta = math.asin(max(-1.0, min(1.0, z / r)))
    phi = math.atan2(y, x)
    return r, theta, phi


def cartesian_from_spherical(r: float, theta: float, phi: float) -> tuple[float, float, float]:
    """Inverse of :func:`spherical_from_cartesian`."""
    ct = math.cos(theta)
    return r * ct * math.cos(phi), r * ct * math.sin(phi), r * math.sin(theta)


@dataclass(frozen=True)
class Point:
    """One lidar return: cartesian + spherical coordinates, echo number, pulse measure.

    ``pulse`` holds the intensity or the echo pulse width depending on the
    sensor; the two occupy the same slot in every downstream computation.
    """

    x: float
    y: float
    z: float
    r: float
    theta: float
    phi: float
    echo: int
    pulse: float

    def __post_init__(self):
        if self.echo not in VALID_ECHOES:
            raise ValueError(f"echo must be in {VALID_ECHOES}, got {self.echo}")
        if self.pulse < 0:
            raise ValueError(f"pulse must be >= 0, got {self.pulse}")
        if self.r < 0:
            raise ValueError(f"r must be >= 0, got {self.r}")
        expected = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        if abs(self.r - expected) > RANGE_CONSISTENCY_TOL:
            raise ValueError(f"r={self.r} inconsistent with coordinates (|p|={expected})")

    @classmethod
    def from_cartesian(cls, x: float, y: float, z: float, echo: int, pulse: float) -> "Point":
        r, theta, phi = spherical_from_cartesian(x, y, z)
        return cls(x, y, z, r, theta, phi, echo, pulse)


class Frame:
    """One full scan: an ordered, immutable, columnar collection of points.

    Columns are read-only numpy arrays of equal length. ``object_ids`` is an
    optional annotation (one int per point, -1 meaning "no object") used by
    the simulator to tag which scene object produced each return.
    """

    __slots__ = ("k", "sensor", "x", "y", "z", "r", "theta", "phi", "echo", "pulse", "object_ids")

    def __init__(self, k, sensor, x, y, z, r, theta, phi, echo, pulse, object_ids=None):
        if k < 0 or int(k) != k:
            raise ValueError(f"frame index k must be a non-negative integer, got {k}")
        object.__setattr__(self, "k", int(k))
        object.__setattr__(self, "sensor", sensor)
        for name, arr, dtype in (
            ("x", x, np.float64), ("y", y, np.float64), ("z", z, np.float64),
            ("r", r, np.float64), ("theta", theta, np.float64), ("phi", phi, np.float64),
            ("echo", echo, np.int64), ("pulse", pulse, np.float64),
        ):
            col = np.array(arr, dtype=dtype, copy=True).reshape(-1)
            col.setflags(write=False)
            object.__setattr__(self, name, col)
        if object_ids is None:
            object.__setattr__(self, "object_ids", None)
        else:
            ids = np.array(object_ids, dtype=np.int64, copy=True).reshape(-1)
            ids.setflags(write=False)
            object.__setattr__(self, "object_ids", ids)
        self._validate()

    def _validate(self):
        n = self.x.shape[0]
        for name in ("y", "z", "r", "theta", "phi", "echo", "pulse"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"column {name!r} has length {getattr(self, name).shape[0]}, expected {n}")
        if self.object_ids is not None and self.object_ids.shape[0] != n:
            raise ValueError(f"object_ids has length {self.object_ids.shape[0]}, expected {n}")
        if n == 0:
            return
        if not np.isin(self.echo, VALID_ECHOES).all():
            bad = self.echo[~np.isin(self.echo, VALID_ECHOES)][0]
            raise ValueError(f"echo values must be in {VALID_ECHOES}, found {bad}")
        if (self.pulse < 0).any():
            raise ValueError("pulse values must be >= 0")
        if (self.r < 0).any():
            raise ValueError("ranges must be >= 0")
        expected = np.sqrt(self.x**2 + self.y**2 + self.z**2)
        worst = float(np.abs(self.r - expected).max())
        if worst > RANGE_CONSISTENCY_TOL:
            raise ValueError(f"r column inconsistent with coordinates (max error {worst:.3g} m)")

    def __setattr__(self, name, value):
        raise AttributeError("Frame is immutable")

    def __len__(self) -> int:
        return self.x.shape[0]

    def __repr__(self) -> str:
        return f"Frame(k={self.k}, n={len(self)}, sensor={self.sensor.pulse_kind})"

    @classmethod
    def empty(cls, k: int = 0, sensor: SensorDescriptor = DEFAULT_SENSOR) -> "Frame":
        z = np.zeros(0)
        return cls(k, sensor, z, z, z, z, z, z, z, z)

    @classmethod
    def from_points(cls, k, points, sensor: SensorDescriptor = DEFAULT_SENSOR, object_ids=None) -> "Frame":
        pts = list(points)
        return cls(
            k, sensor,
            [p.x for p in pts], [p.y for p in pts], [p.z for p in pts],
            [p.r for p in pts], [p.theta for p in pts], [p.phi for p in pts],
            [p.echo for p in pts], [p.pulse for p in pts],
            object_ids=object_ids,
        )

    @classmethod
    def from_cartesian(cls, k, x, y, z, echo, pulse, sensor: SensorDescriptor = DEFAULT_SENSOR,
                       object_ids=None) -> "Frame":
        """Build a frame from cartesian coordinates, deriving (r, theta, phi)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        r = np.sqrt(x * x + y * y + z * z)
        with np.errstate(invalid="ignore", divide="ignore"):
            theta = np.where(r > 0, np.arcsin(np.clip(np.divide(z, r, where=r > 0), -1.0, 1.0)), 0.0)
        phi = np.where(r > 0, np.arctan2(y, x), 0.0)
        return cls(k, sensor, x, y, z, r, theta, phi, echo, pulse, object_ids=object_ids)

    def point(self, i: int) -> Point:
        return Point(
            float(self.x[i]), float(self.y[i]), float(self.z[i]),
            float(self.r[i]), float(self.theta[i]), float(self.phi[i]),
            int(self.echo[i]), float(self.pulse[i]),
        )

    @property
    def points(self) -> tuple[Point, ...]:
        return tuple(self.point(i) for i in range(len(self)))

    def take(self, indices) -> "Frame":
        """Row subset preserving order, frame index, sensor and annotations."""
        idx = np.asarray(indices)
        return Frame(
            self.k, self.sensor,
            self.x[idx], self.y[idx], self.z[idx],
            self.r[idx], self.theta[idx], self.phi[idx],
            self.echo[idx], self.pulse[idx],
            object_ids=None if self.object_ids is None else self.object_ids[idx],
        )


def frames_equal(a: Frame, b: Frame) -> bool:
    """Exact (bitwise value) equality, used by round-trip and determinism checks."""
    if a.k != b.k or a.sensor != b.sensor or len(a) != len(b):
        return False
    for name in ("x", "y", "z", "r", "theta", "phi", "echo", "pulse"):
        if not np.array_equal(getattr(a, name), getattr(b, name)):
            return False
    if (a.object_ids is None) != (b.object_ids is None):
        return False
    if a.object_ids is not None and not np.array_equal(a.object_ids, b.object_ids):
        return False
    return True


def roi_filter(frame: Frame, roi: RoiBounds = DEFAULT_ROI) -> Frame:
    """Keep exactly the points inside the near-range gate, in original order."""
    mask = (frame.x <= roi.x_max) & (frame.y >= roi.y_min) & (frame.y <= roi.y_max)
    return frame.take(np.flatnonzero(mask))


def partition_by_echo(frame: Frame) -> dict[int, Frame]:
    """Split a frame into the disjoint, order-preserving echo subsets M_1..M_3."""
    return {t: frame.take(np.flatnonzero(frame.echo == t)) for t in VALID_ECHOES}
