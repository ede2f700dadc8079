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
"""
Environment config
"""

from dataclasses import dataclass, field
from typing import Optional

from ..mapping.geometry import FORWARD_STEP, TURN_ANGLE, CameraSpec


@dataclass
class SensorConfig:
    hfov: float = 90.0
    """horizontal field of view of each panoramic view, degrees"""
    vfov: float = 90.0
    """vertical field of view, degrees"""
    image_size: int = 28
    """depth images are image_size x image_size"""
    patch_size: int = 14
    """P, depth images are pooled to P x P patches"""
    camera_height: float = 1.25
    min_height: float = 0.2
    """lower bound of the kept height band, meters"""
    max_height: float = 1.8
    """upper bound of the kept height band, meters"""
    ceiling_height: float = 2.5
    max_depth: float = 10.0
    """hits farther than this are reported as invalid (0)"""
    num_distance_rays: int = 16
    """ray distances per patch column in the feature descriptor"""
    feature_seed: int = 20250101
    """seed of the fixed random projection shared by every scene"""
    # below are auto keys
    feature_dim: int = field(default=32, init=False)

    def camera(self) -> CameraSpec:
        return CameraSpec(
            height=self.camera_height, vfov=self.vfov, min_height=self.min_height, max_height=self.max_height
        )


@dataclass
class WaypointConfig:
    peak_range: float = 2.0
    """range in meters where the surrogate waypoint distribution peaks"""
    range_width: float = 0.5
    min_range: float = 0.5
    max_range: float = 5.0
    clearance: float = 0.3
    """free space required beyond a sub-cell along its bearing, meters"""
    openness_bonus: float = 1.0


@dataclass
class ExpertConfig:
    lookahead: float = 2.5
    """the next expert waypoint is the farthest visible path point within this radius"""
    stop_radius: float = 1.0
    """the expert stops once the geodesic distance to the goal is within this radius"""


@dataclass
class DisturbanceConfig:
    kind: Optional[str] = None
    """`fov_loss`, `local_noise`, `memory_decay` or None"""
    level: float = 0.0
    seed: int = 0
    max_blur_width: int = 9
    """box blur width at level 1, in pixels"""

    def post_init(self):
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"Disturbance level must be in [0, 1], got {self.level}.")


@dataclass
class SceneGenConfig:
    num_per_family: int = 50
    num_train_per_family: int = 40
    min_start_goal_distance: float = 4.0
    max_tries: int = 100


@dataclass
class EnvConfig:
    sensor: SensorConfig = field(default_factory=SensorConfig)
    waypoint: WaypointConfig = field(default_factory=WaypointConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    scene_gen: SceneGenConfig = field(default_factory=SceneGenConfig)
    agent_radius: float = 0.1
    raster_res: float = 0.1
    """occupancy raster resolution for reachability, A* and geodesic fields"""
    forward_step: float = FORWARD_STEP
    turn_angle: float = TURN_ANGLE
    success_radius: float = 3.0
