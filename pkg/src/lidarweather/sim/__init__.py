"""Synthetic desk-scale scenes passed through a simplified fog/rain lidar channel."""

from .scene import OpticsModel, RayGrid, SceneObject, SceneSpec, render_clear
from .weather import FogModel, RainModel, apply_fog, apply_rain
from .dataset import (
    SimConfig,
    SimModels,
    SimulatedSample,
    SyntheticDataset,
    WeatherProfile,
    default_profiles,
    default_scenes,
    generate_dataset,
    load_sim_config,
)

__all__ = [
    "OpticsModel", "RayGrid", "SceneObject", "SceneSpec", "render_clear",
    "FogModel", "RainModel", "apply_fog", "apply_rain",
    "SimConfig", "SimModels", "SimulatedSample", "SyntheticDataset", "WeatherProfile",
    "default_profiles", "default_scenes", "generate_dataset", "load_sim_config",
]
