# Copyright 2025 The dualnav Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from .config import DisturbanceConfig, EnvConfig, ExpertConfig, SceneGenConfig, SensorConfig, WaypointConfig
from .disturbance import Disturbance, DisturbanceKind, DisturbanceState, apply_disturbance
from .expert import ExpertAction, expert_action
from .scene import (
    BlockedPositionError,
    MalformedSceneError,
    Scene,
    SceneLoadError,
    UnreachableGoalError,
    list_scene_files,
    load_scene,
)
from .sensing import SurrogateObservation, render_panorama
from .simulator import NavEnv, SimulatorError
from .waypoint import WaypointProposal, surrogate_wp


__all__ = [
    "BlockedPositionError",
    "Disturbance",
    "DisturbanceConfig",
    "DisturbanceKind",
    "DisturbanceState",
    "EnvConfig",
    "ExpertAction",
    "ExpertConfig",
    "MalformedSceneError",
    "NavEnv",
    "Scene",
    "SceneGenConfig",
    "SceneLoadError",
    "SensorConfig",
    "SimulatorError",
    "SurrogateObservation",
    "UnreachableGoalError",
    "WaypointConfig",
    "WaypointProposal",
    "apply_disturbance",
    "expert_action",
    "list_scene_files",
    "load_scene",
    "render_panorama",
    "surrogate_wp",
]
