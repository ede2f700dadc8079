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
The continuous navigation environment: a scene, the agent's pose and its executed trajectory.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..mapping.geometry import GridSpec, LowLevelAction, Pose, compose_pose, ego_to_world, subcell_centers
from .config import EnvConfig
from .expert import ExpertAction, expert_action, path_length, shortest_path
from .instruction import generate_instruction
from .scene import Scene, ray_box_distances
from .sensing import SurrogateObservation, render_panorama


class SimulatorError(RuntimeError):
    pass


@dataclass
class StepResult:
    pose: Pose
    collided: bool


class NavEnv:
    """Single-episode environment. Scenes are shared read-only; all mutable state lives here."""

    def __init__(self, scene: Scene, config: Optional[EnvConfig] = None, max_instruction_length: int = 24):
        self.scene = scene
        self.config = config or EnvConfig()
        self.max_instruction_length = max_instruction_length
        self.trajectory: list[Pose] = []
        self.num_collisions = 0

    @property
    def pose(self) -> Pose:
        if not self.trajectory:
            raise SimulatorError("Environment is not reset.")

        return self.trajectory[-1]

    @cached_property
    def goal(self) -> NDArray:
        return np.asarray(self.scene.goal, dtype=np.float64)

    @cached_property
    def reference_path(self) -> list[NDArray]:
        return shortest_path(self.scene, self.scene.start.position, self.goal)

    @cached_property
    def geodesic_length(self) -> float:
        """Shortest start to goal length used by SPL."""
        return path_length(self.reference_path)

    @cached_property
    def instruction(self) -> list[int]:
        rng = np.random.default_rng(self.scene.seed)
        landmarks = [(lm.label, lm.position) for lm in self.scene.landmarks]
        return generate_instruction(self.reference_path, landmarks, rng, max_length=self.max_instruction_length)

    def reset(self) -> SurrogateObservation:
        self.trajectory = [self.scene.start]
        self.num_collisions = 0
        return self.observe()

    def observe(self) -> SurrogateObservation:
        return render_panorama(self.scene, self.pose, self.config.sensor)

    def _clamp_forward(self, pose: Pose, target: Pose) -> Pose:
        """Farthest free point along the segment, found by bisection."""
        low, high = 0.0, 1.0
        for _ in range(12):
            mid = (low + high) / 2.0
            point = pose.position + mid * (target.position - pose.position)
            if self.scene.segment_clear(pose.position, point):
                low = mid
            else:
                high = mid

        point = pose.position + low * (target.position - pose.position)
        return Pose(float(point[0]), float(point[1]), pose.heading)

    def step(self, action: LowLevelAction) -> StepResult:
        pose = self.pose
        target = compose_pose(pose, action, self.config.forward_step, self.config.turn_angle)
        collided = False
        if LowLevelAction(action) == LowLevelAction.FORWARD and not self.scene.segment_clear(
            pose.position, target.position
        ):
            target = self._clamp_forward(pose, target)
            collided = True
            self.num_collisions += 1

        if not self.scene.is_free(target.position):
            raise SimulatorError(f"Agent left free space at {target.to_list()}.")

        self.trajectory.append(target)
        return StepResult(pose=target, collided=collided)

    def reachable_lattice(self, spec: GridSpec, pose: Optional[Pose] = None) -> NDArray:
        """(mU, nV) mask of heatmap sub-cells in free space and in straight-line reach of the pose."""
        pose = pose or self.pose
        points = ego_to_world(subcell_centers(spec).reshape(-1, 2), pose)
        reachable = self.scene.free_mask(points)
        offsets = points - pose.position
        distances = np.linalg.norm(offsets, axis=-1)
        moving = reachable & (distances > 1e-9)
        if moving.any() and len(self.scene.inflated_boxes) > 0:
            directions = offsets[moving] / distances[moving, None]
            hits = ray_box_distances(pose.position, directions, self.scene.inflated_boxes)
            reachable[moving] = hits >= distances[moving]

        return reachable.reshape(spec.sub_shape)

    def free_positions(self, spec: GridSpec, pose: Optional[Pose] = None) -> NDArray:
        """World positions of the lattice sub-cells in free space, for random replacement waypoints."""
        pose = pose or self.pose
        points = ego_to_world(subcell_centers(spec).reshape(-1, 2), pose)
        return points[self.scene.free_mask(points)]

    def expert_action(self, pose: Optional[Pose] = None) -> ExpertAction:
        return expert_action(self.scene, pose or self.pose, self.goal, lookahead=self.config.expert.lookahead)

    def geodesic_to_goal(self, pose: Optional[Pose] = None) -> float:
        return self.scene.geodesic_to_goal((pose or self.pose).position)

    def distance_to_goal(self, pose: Optional[Pose] = None) -> float:
        return (pose or self.pose).distance_to(self.goal)

    def turn_toward(self, target: NDArray, pose: Optional[Pose] = None) -> float:
        """Signed heading change in degrees that faces the target."""
        pose = pose or self.pose
        bearing = math.degrees(math.atan2(target[1] - pose.y, target[0] - pose.x))
        return (bearing - pose.heading + 180.0) % 360.0 - 180.0
