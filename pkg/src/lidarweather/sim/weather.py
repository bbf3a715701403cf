"""Simplified fog and rain channel models applied to clear-condition frames.

Each input point is treated as one ray (the renderer emits at most one return
per ray). Weather inserts close-range scatter points on rays, attenuates the
object returns, and re-numbers echoes by distance, capping at the sensor's
echo count. All constants are calibration knobs chosen to reproduce the
qualitative chamber observations at desk scale, not physics claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..frames import Frame


@dataclass(frozen=True)
class FogModel:
    """Fog channel knobs.

    ``extinction_visibility_product`` is the Koschmieder constant: the
    extinction coefficient is alpha = product / visibility. Backscatter
    multiplicity per ray is Poisson(backscatter_rate * alpha), capped by the
    free echo slots; scatter ranges follow a truncated exponential with scale
    visibility / range_scale_divisor on [range_min, range_max].
    """

    extinction_visibility_product: float = 3.0
    backscatter_rate: float = 40.0
    range_scale_divisor: float = 6.0
    range_min: float = 1.0
    range_max: float = 10.0
    detection_threshold: float = 0.8
    range_shrink_coeff: float = 0.1
    range_jitter_std: float = 0.05
    pulse_floor: float = 0.8
    pulse_spread: float = 1.5
    # epw grows with fog density; qualitative only, applied to scatter points
    # of "epw" sensors as a factor (1 + epw_density_gain * alpha)
    epw_density_gain: float = 10.0


@dataclass(frozen=True)
class RainModel:
    """Rain channel knobs: mild extinction, sparse droplet echoes, wet-surface
    pulse jitter (downward only) and small range perturbation.

    Droplets on an empty frame are given directions uniform in the configured
    field of view since there are no rays to attach to.
    """

    extinction_per_mmh: float = 2e-5
    droplet_rate_per_mmh: float = 0.5
    droplet_range_min: float = 1.0
    droplet_range_max: float = 15.0
    droplet_pulse: float = 1.2
    droplet_pulse_spread: float = 0.8
    wet_jitter: float = 0.15
    range_jitter_std: float = 0.03
    detection_threshold: float = 0.8
    fov_azimuth_halfwidth: float = math.radians(20.0)
    fov_elevation_halfwidth: float = math.radians(3.0)


DEFAULT_FOG = FogModel()
DEFAULT_RAIN = RainModel()

_MIN_RANGE = 0.05


def _assemble_frame(frame: Frame, ray_key, theta, phi, ranges, pulses, object_ids) -> Frame:
    """Sort candidate returns by range within each ray, number echoes 1..max,
    and drop returns beyond the sensor's echo capacity."""
    ranges = np.maximum(ranges, _MIN_RANGE)
    order = np.lexsort((ranges, ray_key))
    key_s = ray_key[order]
    new_ray = np.empty(key_s.size, dtype=bool)
    if key_s.size:
        new_ray[0] = True
        new_ray[1:] = key_s[1:] != key_s[:-1]
    starts = np.flatnonzero(new_ray)
    # position of each return within its ray, 0-based
    pos = np.arange(key_s.size) - np.repeat(starts, np.diff(np.append(starts, key_s.size)))
    keep = pos < frame.sensor.max_echoes
    sel = order[keep]
    r = ranges[sel]
    th = theta[sel]
    ph = phi[sel]
    ct = np.cos(th)
    return Frame(
        frame.k, frame.sensor,
        r * ct * np.cos(ph), r * ct * np.sin(ph), r * np.sin(th),
        r, th, ph,
        pos[keep] + 1, pulses[sel],
        object_ids=object_ids[sel],
    )


def _object_ids_or_default(frame: Frame) -> np.ndarray:
    if frame.object_ids is not None:
        return frame.object_ids
    return np.full(len(frame), -1, dtype=np.int64)


def apply_fog(frame: Frame, visibility: float, rng: np.random.Generator, *,
              model: FogModel = DEFAULT_FOG) -> Frame:
    """Pass a clear frame through the fog channel at the given visibility [m].

    An infinite visibility is the no-fog limit and returns the frame unchanged.
    Object pulses are scaled by the two-way transmission exp(-2*alpha*r) and
    never increased; returns falling below the detection threshold are dropped
    (retro-reflectors survive through their pulse gain, no special casing).
    """
    if visibility <= 0:
        raise ValueError(f"visibility must be > 0, got {visibility}")
    if math.isinf(visibility):
        return frame

    alpha = model.extinction_visibility_product / visibility
    n = len(frame)

    transmission = np.exp(-2.0 * alpha * frame.r)
    obj_pulse = frame.pulse * transmission
    kept = obj_pulse >= model.detection_threshold

    # measured object ranges contract slightly with density, plus jitter
    obj_r = frame.r[kept] * (1.0 - model.range_shrink_coeff * alpha)
    obj_r = obj_r + rng.normal(0.0, model.range_jitter_std, obj_r.size)

    # backscatter multiplicity per ray, leaving a slot for a surviving return
    n_fog = rng.poisson(model.backscatter_rate * alpha, n)
    n_fog = np.minimum(n_fog, frame.sensor.max_echoes - kept.astype(np.int64))
    total_fog = int(n_fog.sum())
    fog_ray = np.repeat(np.arange(n), n_fog)

    scale = visibility / model.range_scale_divisor
    span = -math.expm1(-(model.range_max - model.range_min) / scale)
    fog_r = model.range_min - scale * np.log1p(-rng.random(total_fog) * span)
    fog_pulse = model.pulse_floor * (1.0 + model.pulse_spread * rng.random(total_fog))
    if frame.sensor.pulse_kind == "epw":
        fog_pulse = fog_pulse * (1.0 + model.epw_density_gain * alpha)

    kept_idx = np.flatnonzero(kept)
    ray_key = np.concatenate([fog_ray, kept_idx])
    theta = np.concatenate([frame.theta[fog_ray], frame.theta[kept_idx]])
    phi = np.concatenate([frame.phi[fog_ray], frame.phi[kept_idx]])
    ranges = np.concatenate([fog_r, obj_r])
    pulses = np.concatenate([fog_pulse, obj_pulse[kept_idx]])
    ids = np.concatenate([np.full(total_fog, -1, dtype=np.int64),
                          _object_ids_or_default(frame)[kept_idx]])
    return _assemble_frame(frame, ray_key, theta, phi, ranges, pulses, ids)


def apply_rain(frame: Frame, rain_rate: float, rng: np.random.Generator, *,
               model: RainModel = DEFAULT_RAIN) -> Frame:
    """Pass a clear frame through the rain channel at the given rate [mm/h].

    Rate 0 returns the frame unchanged. Droplet echoes are inserted with a
    Poisson(droplet_rate_per_mmh * rate) count per frame; each droplet lands
    on a random existing ray ahead of its return (or anywhere in the FOV when
    the frame is empty), demoting the object return behind it.
    """
    if rain_rate < 0:
        raise ValueError(f"rain_rate must be >= 0, got {rain_rate}")
    if rain_rate == 0:
        return frame

    alpha = model.extinction_per_mmh * rain_rate
    n = len(frame)

    transmission = np.exp(-2.0 * alpha * frame.r)
    wet = np.clip(1.0 - model.wet_jitter * np.abs(rng.standard_normal(n)), 0.0, 1.0)
    obj_pulse = frame.pulse * transmission * wet
    kept = obj_pulse >= model.detection_threshold
    obj_r = frame.r[kept] + rng.normal(0.0, model.range_jitter_std, int(kept.sum()))

    n_drop = int(rng.poisson(model.droplet_rate_per_mmh * rain_rate))
    lo = model.droplet_range_min
    if n > 0:
        drop_ray = rng.integers(0, n, n_drop)
        drop_theta = frame.theta[drop_ray]
        drop_phi = frame.phi[drop_ray]
        # keep droplets ahead of the ray's return so they demote it
        hi = np.maximum(lo + 0.01, np.minimum(model.droplet_range_max, 0.95 * frame.r[drop_ray]))
    else:
        drop_ray = n + np.arange(n_drop)  # synthetic ray keys, one per droplet
        drop_theta = rng.uniform(-model.fov_elevation_halfwidth, model.fov_elevation_halfwidth, n_drop)
        drop_phi = rng.uniform(-model.fov_azimuth_halfwidth, model.fov_azimuth_halfwidth, n_drop)
        hi = np.full(n_drop, model.droplet_range_max)
    drop_r = lo + (hi - lo) * rng.random(n_drop)
    drop_pulse = model.droplet_pulse * (1.0 + model.droplet_pulse_spread * rng.random(n_drop))

    kept_idx = np.flatnonzero(kept)
    ray_key = np.concatenate([drop_ray, kept_idx])
    theta = np.concatenate([drop_theta, frame.theta[kept_idx]])
    phi = np.concatenate([drop_phi, frame.phi[kept_idx]])
    ranges = np.concatenate([drop_r, obj_r])
    pulses = np.concatenate([drop_pulse, obj_pulse[kept_idx]])
    ids = np.concatenate([np.full(n_drop, -1, dtype=np.int64),
                          _object_ids_or_default(frame)[kept_idx]])
    return _assemble_frame(frame, ray_key, theta, phi, ranges, pulses, ids)


def emulate_dual_return(frame: Frame) -> Frame:
    """Duplicate single-return rays into identical echo-1/echo-2 points, the
    convention of two-echo sensors that report the strongest and the last
    return of each pulse. Only meaningful for sensors with max_echoes == 2."""
    if frame.sensor.max_echoes != 2 or len(frame) == 0:
        return frame
    key = np.stack([frame.theta, frame.phi], axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    single = counts[inverse] == 1
    dup_idx = np.flatnonzero(single & (frame.echo == 1))
    if dup_idx.size == 0:
        return frame
    idx = np.concatenate([np.arange(len(frame)), dup_idx])
    echo = np.concatenate([frame.echo, np.full(dup_idx.size, 2, dtype=np.int64)])
    return Frame(
        frame.k, frame.sensor,
        frame.x[idx], frame.y[idx], frame.z[idx],
        frame.r[idx], frame.theta[idx], frame.phi[idx],
        echo, frame.pulse[idx],
        object_ids=None if frame.object_ids is None else frame.object_ids[idx],
    )
