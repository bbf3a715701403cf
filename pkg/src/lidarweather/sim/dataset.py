"""Labeled synthetic datasets: (scene x weather profile) cells of rendered frames."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..frames import DEFAULT_SENSOR, Frame, GroundTruth, SensorDescriptor, WeatherLabel
from .scene import DEFAULT_OPTICS, OpticsModel, RayGrid, SceneObject, SceneSpec, render_clear
from .weather import DEFAULT_FOG, DEFAULT_RAIN, FogModel, RainModel, apply_fog, apply_rain


@dataclass(frozen=True)
class WeatherProfile:
    """One weather condition cell; carries exactly the fields its label implies."""

    label: WeatherLabel
    visibility: float | None = None
    rain_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "label", WeatherLabel(self.label))
        if self.label is WeatherLabel.FOG:
            if self.visibility is None:
                raise ValueError("fog profile requires a visibility")
            if self.rain_rate is not None:
                raise ValueError("fog profile must not carry a rain rate")
        elif self.label is WeatherLabel.RAIN:
            if self.rain_rate is None:
                raise ValueError("rain profile requires a rain rate")
            if self.visibility is not None:
                raise ValueError("rain profile must not carry a visibility")
        else:
            if self.visibility is not None or self.rain_rate is not None:
                raise ValueError("clear profile carries neither visibility nor rain rate")

    @classmethod
    def clear(cls) -> "WeatherProfile":
        return cls(WeatherLabel.CLEAR)

    @classmethod
    def rain(cls, rate: float = 55.0) -> "WeatherProfile":
        return cls(WeatherLabel.RAIN, rain_rate=rate)

    @classmethod
    def fog(cls, visibility: float = 40.0) -> "WeatherProfile":
        return cls(WeatherLabel.FOG, visibility=visibility)

    def truth(self) -> GroundTruth:
        return GroundTruth(self.label, visibility=self.visibility, rain_rate=self.rain_rate)


@dataclass(frozen=True)
class SimulatedSample:
    """One generated frame with its ground truth and originating scenario."""

    frame: Frame
    truth: GroundTruth | None
    scenario_id: str = ""


@dataclass(frozen=True)
class SyntheticDataset:
    """Samples plus the global object-name table the frames' object_ids index."""

    samples: tuple[SimulatedSample, ...]
    object_names: tuple[str, ...] = ()
    sensor: SensorDescriptor = DEFAULT_SENSOR

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "object_names", tuple(self.object_names))


@dataclass(frozen=True)
class SimModels:
    """Bundle of the channel/optics knobs used when generating a dataset."""

    optics: OpticsModel = DEFAULT_OPTICS
    fog: FogModel = DEFAULT_FOG
    rain: RainModel = DEFAULT_RAIN
    frame_dt: float = 0.1
    dual_return_duplication: bool = False


DEFAULT_MODELS = SimModels()


def object_name_table(scenes) -> tuple[str, ...]:
    """Global object-id table: scene order, then object order, as 'scenario/name'."""
    names = []
    for scene in scenes:
        for obj in scene.objects:
            names.append(f"{scene.scenario_id}/{obj.name}")
    return tuple(names)


def _render_cell_frame(scene, profile, cell_idx, frame_idx, frames_per_cell, seed,
                       sensor, models, id_offset) -> Frame:
    from .weather import emulate_dual_return

    rng = np.random.default_rng(np.random.SeedSequence([seed, cell_idx, frame_idx]))
    time = frame_idx * models.frame_dt
    frame = render_clear(
        scene, time, sensor=sensor, optics=models.optics, rng=rng,
        frame_index=cell_idx * frames_per_cell + frame_idx,
        object_id_offset=id_offset,
    )
    if profile.label is WeatherLabel.FOG:
        frame = apply_fog(frame, profile.visibility, rng, model=models.fog)
    elif profile.label is WeatherLabel.RAIN:
        frame = apply_rain(frame, profile.rain_rate, rng, model=models.rain)
    if models.dual_return_duplication:
        frame = emulate_dual_return(frame)
    return frame


def generate_dataset(scenes, profiles, frames_per_cell: int, seed: int, *,
                     sensor: SensorDescriptor = DEFAULT_SENSOR,
                     models: SimModels = DEFAULT_MODELS) -> SyntheticDataset:
    """Render every (scene, profile) cell for frames_per_cell frames.

    Frames are seeded per (cell, frame) through a counter-based SeedSequence,
    so the output is byte-identical for a fixed seed regardless of generation
    order.
    """
    scenes = list(scenes)
    profiles = list(profiles)
    if not scenes:
        raise ValueError("generate_dataset requires at least one scene")
    if not profiles:
        raise ValueError("generate_dataset requires at least one profile")
    if frames_per_cell < 1:
        raise ValueError(f"frames_per_cell must be >= 1, got {frames_per_cell}")

    offsets = {}
    running = 0
    for scene in scenes:
        offsets[scene.scenario_id] = running
        running += len(scene.objects)

    samples = []
    for s_idx, scene in enumerate(scenes):
        for p_idx, profile in enumerate(profiles):
            cell_idx = s_idx * len(profiles) + p_idx
            truth = profile.truth()
            for f_idx in range(frames_per_cell):
                frame = _render_cell_frame(
                    scene, profile, cell_idx, f_idx, frames_per_cell, seed,
                    sensor, models, offsets[scene.scenario_id],
                )
                samples.append(SimulatedSample(frame, truth, scene.scenario_id))
    return SyntheticDataset(tuple(samples), object_name_table(scenes), sensor)


def default_scenes(ray_grid: RayGrid | None = None) -> list[SceneSpec]:
    """Three chamber-style scenarios: a static object lineup, a dynamic traffic
    scene, and diffuse targets drifting out of view."""
    grid = ray_grid if ray_grid is not None else RayGrid()
    # stationary chamber furniture shared by every setup
    wall = SceneObject("back_wall", "box", (22.5, 0.0, 0.0), reflectivity=0.25,
                       size=(0.6, 14.0, 4.0))
    post = SceneObject("reflector_post", "cylinder", (19.0, 1.2, 0.0), reflectivity=0.9,
                       retro=True, radius=0.06, height=2.2)
    setup_a = SceneSpec("setup_a_static", (
        wall,
        SceneObject("target_05", "cylinder", (18.0, -1.0, 0.0), reflectivity=0.05,
                    radius=0.25, height=1.7),
        SceneObject("target_50", "cylinder", (16.0, 0.0, 0.0), reflectivity=0.5,
                    radius=0.25, height=1.7),
        SceneObject("target_90", "cylinder", (14.0, 0.5, 0.0), reflectivity=0.9,
                    radius=0.25, height=1.7),
        post,
    ), grid)
    setup_b = SceneSpec("setup_b_traffic", (
        wall,
        SceneObject("car", "box", (19.0, 0.0, 0.0), reflectivity=0.85, size=(4.4, 1.8, 1.4),
                    velocity=(-0.25, 0.0, 0.0), motion_period=12.0),
        SceneObject("pedestrian", "cylinder", (12.0, -2.0, 0.0), reflectivity=0.45,
                    radius=0.25, height=1.75, velocity=(0.0, 0.4, 0.0), motion_period=10.0),
        post,
    ), grid)
    setup_c = SceneSpec("setup_c_departing", (
        wall,
        SceneObject("cart_a", "box", (10.0, -0.6, 0.0), reflectivity=0.35, size=(0.8, 0.8, 1.2),
                    velocity=(1.1, 0.0, 0.0), motion_period=11.0),
        SceneObject("cart_b", "box", (13.0, 0.8, 0.0), reflectivity=0.6, size=(0.8, 0.8, 1.2),
                    velocity=(0.8, 0.3, 0.0), motion_period=9.0),
        post,
    ), grid)
    return [setup_a, setup_b, setup_c]


def default_profiles() -> list[WeatherProfile]:
    """Clear, chamber-style stabilized rain, and mid-range dense fog."""
    return [WeatherProfile.clear(), WeatherProfile.rain(55.0), WeatherProfile.fog(30.0)]


def _object_from_dict(d: dict) -> SceneObject:
    kwargs = dict(d)
    for key in ("center", "size", "velocity"):
        if key in kwargs:
            kwargs[key] = tuple(float(v) for v in kwargs[key])
    return SceneObject(**kwargs)


def _ray_grid_from_dict(d: dict) -> RayGrid:
    kwargs = {}
    if "azimuth_start_deg" in d:
        kwargs["azimuth_start"] = math.radians(float(d["azimuth_start_deg"]))
    if "azimuth_stop_deg" in d:
        kwargs["azimuth_stop"] = math.radians(float(d["azimuth_stop_deg"]))
    if "azimuth_steps" in d:
        kwargs["azimuth_steps"] = int(d["azimuth_steps"])
    if "elevations_deg" in d:
        kwargs["elevations"] = tuple(math.radians(float(v)) for v in d["elevations_deg"])
    return RayGrid(**kwargs)


def _profile_from_dict(d: dict) -> WeatherProfile:
    label = WeatherLabel.from_name(d["label"])
    if label is WeatherLabel.FOG:
        return WeatherProfile.fog(float(d.get("visibility", 40.0)))
    if label is WeatherLabel.RAIN:
        return WeatherProfile.rain(float(d.get("rain_rate", 55.0)))
    return WeatherProfile.clear()


@dataclass(frozen=True)
class SimConfig:
    """Parsed simulation config: scenes, profiles and generation knobs."""

    scenes: tuple[SceneSpec, ...]
    profiles: tuple[WeatherProfile, ...]
    frames_per_cell: int = 100
    seed: int = 0
    sensor: SensorDescriptor = DEFAULT_SENSOR
    models: SimModels = DEFAULT_MODELS


def load_sim_config(path) -> SimConfig:
    """Load a JSON scene+profile config; missing sections fall back to defaults.

    Schema (all sections optional)::

        {
          "ray_grid": {"azimuth_start_deg": -20, "azimuth_stop_deg": 20,
                       "azimuth_steps": 81, "elevations_deg": [-3, ..., 3]},
          "sensor": {"pulse_kind": "intensity", "max_echoes": 3},
          "scenes": [{"scenario_id": "...", "objects": [{...SceneObject fields,
                      angles in meters/degrees as noted...}]}],
          "profiles": [{"label": "clear"}, {"label": "rain", "rain_rate": 55},
                       {"label": "fog", "visibility": 30}],
          "frames_per_cell": 100,
          "seed": 0,
          "fog": {...FogModel fields...},
          "rain": {...RainModel fields...},
          "optics": {...OpticsModel fields...},
          "frame_dt": 0.1,
          "dual_return_duplication": false
        }
    """
    raw = json.loads(Path(path).read_text())
    grid = _ray_grid_from_dict(raw.get("ray_grid", {}))
    if "scenes" in raw:
        scenes = tuple(
            SceneSpec(s["scenario_id"], tuple(_object_from_dict(o) for o in s["objects"]), grid)
            for s in raw["scenes"]
        )
    else:
        scenes = tuple(default_scenes(grid))
    if "profiles" in raw:
        profiles = tuple(_profile_from_dict(p) for p in raw["profiles"])
    else:
        profiles = tuple(default_profiles())
    sensor = SensorDescriptor(**raw["sensor"]) if "sensor" in raw else DEFAULT_SENSOR
    models = SimModels(
        optics=OpticsModel(**raw.get("optics", {})),
        fog=FogModel(**raw.get("fog", {})),
        rain=RainModel(**raw.get("rain", {})),
        frame_dt=float(raw.get("frame_dt", 0.1)),
        dual_return_duplication=bool(raw.get("dual_return_duplication", False)),
    )
    return SimConfig(
        scenes=scenes,
        profiles=profiles,
        frames_per_cell=int(raw.get("frames_per_cell", 100)),
        seed=int(raw.get("seed", 0)),
        sensor=sensor,
        models=models,
    )
