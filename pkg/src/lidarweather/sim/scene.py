"""Parametric traffic scenes and the clear-weather ray-cast renderer.

Scenes are geometric-primitive-only (boxes, cylinders, spheres): the goal is
statistical signatures under weather, not visual realism. The sensor sits at
the origin looking along +x; rays form an azimuth x elevation grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..frames import DEFAULT_SENSOR, Frame, SensorDescriptor

_SHAPES = ("box", "cylinder", "sphere")


@dataclass(frozen=True)
class RayGrid:
    """Azimuth/elevation scan pattern, angles in radians."""

    azimuth_start: float = math.radians(-20.0)
    azimuth_stop: float = math.radians(20.0)
    azimuth_steps: int = 81
    elevations: tuple[float, ...] = tuple(np.radians(np.linspace(-3.0, 3.0, 8)))

    def __post_init__(self):
        if self.azimuth_steps < 1:
            raise ValueError("azimuth_steps must be >= 1")
        if not self.azimuth_stop > self.azimuth_start:
            raise ValueError("azimuth_stop must be > azimuth_start")
        if len(self.elevations) < 1:
            raise ValueError("at least one elevation channel is required")

    @property
    def n_rays(self) -> int:
        return self.azimuth_steps * len(self.elevations)

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        """(theta, phi) per ray, elevation-major order."""
        phi = np.linspace(self.azimuth_start, self.azimuth_stop, self.azimuth_steps)
        theta = np.asarray(self.elevations, dtype=np.float64)
        th = np.repeat(theta, self.azimuth_steps)
        ph = np.tile(phi, theta.size)
        return th, ph

    def unit_directions(self) -> np.ndarray:
        """(n_rays, 3) unit vectors for every beam."""
        th, ph = self.angles()
        ct = np.cos(th)
        return np.stack([ct * np.cos(ph), ct * np.sin(ph), np.sin(th)], axis=1)


@dataclass(frozen=True)
class SceneObject:
    """One scene primitive with pose, reflectivity and a linear motion profile.

    ``size`` is the full (dx, dy, dz) extent for boxes; ``radius``/``height``
    apply to cylinders (vertical axis) and ``radius`` to spheres. A nonzero
    ``motion_period`` makes the linear motion cycle so long recordings keep
    the object in view.
    """

    name: str
    shape: str
    center: tuple[float, float, float]
    reflectivity: float = 0.5
    retro: bool = False
    size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    radius: float = 0.5
    height: float = 1.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    motion_period: float = 0.0

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"shape must be one of {_SHAPES}, got {self.shape!r}")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError(f"reflectivity must be in [0, 1], got {self.reflectivity}")
        if self.motion_period < 0:
            raise ValueError("motion_period must be >= 0")

    def center_at(self, time: float) -> np.ndarray:
        t = time % self.motion_period if self.motion_period > 0 else time
        return np.asarray(self.center, dtype=np.float64) + t * np.asarray(self.velocity, dtype=np.float64)


@dataclass(frozen=True)
class SceneSpec:
    """A scenario: named objects plus the sensor's ray grid."""

    scenario_id: str
    objects: tuple[SceneObject, ...]
    ray_grid: RayGrid = field(default_factory=RayGrid)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise ValueError(f"object names must be unique within a scene: {names}")


@dataclass(frozen=True)
class OpticsModel:
    """Return-pulse model: pulse = base * reflectivity * (ref_range/r)^2 (* retro_gain).

    The receiver clips at ``saturation`` (retro-reflectors typically saturate).
    Noise terms are only drawn when the renderer is given an rng.
    """

    base_pulse: float = 100.0
    ref_range: float = 10.0
    retro_gain: float = 50.0
    saturation: float = 255.0
    range_noise_std: float = 0.02
    pulse_jitter: float = 0.05
    min_range: float = 0.2


DEFAULT_OPTICS = OpticsModel()


def _ray_hits_sphere(dirs: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    b = dirs @ center
    c = float(center @ center) - radius * radius
    disc = b * b - c
    ok = disc >= 0
    t = np.where(ok, b - np.sqrt(np.where(ok, disc, 0.0)), np.inf)
    # a non-positive near root means the sensor sits inside: no return
    return np.where(t > 0, t, np.inf)


def _ray_hits_cylinder(dirs: np.ndarray, center: np.ndarray, radius: float, height: float) -> np.ndarray:
    dx, dy = dirs[:, 0], dirs[:, 1]
    a = dx * dx + dy * dy
    b = dx * center[0] + dy * center[1]
    c = center[0] ** 2 + center[1] ** 2 - radius * radius
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - a * c
        ok = (disc >= 0) & (a > 0)
        t = np.where(ok, (b - np.sqrt(np.where(ok, disc, 0.0))) / np.where(a > 0, a, 1.0), np.inf)
    z = t * dirs[:, 2]
    in_z = np.abs(z - center[2]) <= height / 2.0
    return np.where((t > 0) & in_z, t, np.inf)


def _ray_hits_box(dirs: np.ndarray, center: np.ndarray, size) -> np.ndarray:
    half = np.asarray(size, dtype=np.float64) / 2.0
    lo = center - half
    hi = center + half
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = lo[None, :] * inv
        t2 = hi[None, :] * inv
    # rays parallel to a slab: always inside it, or never
    par = dirs == 0.0
    inside = (lo[None, :] <= 0.0) & (hi[None, :] >= 0.0)
    t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
    t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    hit = (tmax >= tmin) & (tmax > 0) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def ray_distances(obj: SceneObject, dirs: np.ndarray, time: float = 0.0) -> np.ndarray:
    """Hit distance per ray for one object at the given time; inf where missed."""
    center = obj.center_at(time)
    if obj.shape == "sphere":
        return _ray_hits_sphere(dirs, center, obj.radius)
    if obj.shape == "cylinder":
        return _ray_hits_cylinder(dirs, center, obj.radius, obj.height)
    return _ray_hits_box(dirs, center, obj.size)


def render_clear(scene: SceneSpec, time: float = 0.0, *,
                 sensor: SensorDescriptor = DEFAULT_SENSOR,
                 optics: OpticsModel = DEFAULT_OPTICS,
                 rng: np.random.Generator | None = None,
                 frame_index: int = 0,
                 object_id_offset: int = 0) -> Frame:
    """Ray-cast the scene under clear conditions: one echo-1 point per hit ray.

    Deterministic for a fixed (scene, time) and rng state. Points carry
    ``object_ids`` = object_id_offset + index of the object within the scene.
    """
    dirs = scene.ray_grid.unit_directions()
    t_hit = np.full(dirs.shape[0], np.inf)
    obj_idx = np.full(dirs.shape[0], -1, dtype=np.int64)
    for i, obj in enumerate(scene.objects):
        t = ray_distances(obj, dirs, time)
        closer = t < t_hit
        t_hit[closer] = t[closer]
        obj_idx[closer] = i
    hit = np.isfinite(t_hit)
    if not hit.any():
        return Frame.empty(frame_index, sensor)

    r = t_hit[hit]
    d = dirs[hit]
    which = obj_idx[hit]
    refl = np.array([o.reflectivity for o in scene.objects])[which]
    gain = np.where(np.array([o.retro for o in scene.objects])[which], optics.retro_gain, 1.0)

    if rng is not None and optics.range_noise_std > 0:
        r = r + rng.normal(0.0, optics.range_noise_std, r.size)
    r = np.maximum(r, optics.min_range)
    pulse = optics.base_pulse * refl * (optics.ref_range / r) ** 2 * gain
    if rng is not None and optics.pulse_jitter > 0:
        pulse = pulse * (1.0 + optics.pulse_jitter * rng.standard_normal(r.size))
    pulse = np.clip(pulse, 0.0, optics.saturation)

    xyz = d * r[:, None]
    theta = np.arcsin(np.clip(d[:, 2], -1.0, 1.0))
    phi = np.arctan2(d[:, 1], d[:, 0])
    return Frame(
        frame_index, sensor,
        xyz[:, 0], xyz[:, 1], xyz[:, 2], r, theta, phi,
        np.ones(r.size, dtype=np.int64), pulse,
        object_ids=which + object_id_offset,
    )
