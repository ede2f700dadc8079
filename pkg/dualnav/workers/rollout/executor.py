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
Low-level executor: turns a chosen waypoint into turn and forward actions, re-planning around obstacles.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from ...envs.expert import shortest_path
from ...envs.scene import SceneLoadError
from ...envs.simulator import NavEnv
from ...mapping.geometry import LowLevelAction


@dataclass
class ExecutionResult:
    actions: list[LowLevelAction] = field(default_factory=list)
    reached: bool = False
    num_collisions: int = 0


class LowLevelExecutor:
    def __init__(self, max_actions: int = 60, arrival_tolerance: float = 0.125, heading_tolerance: float = 7.5):
        self.max_actions = max_actions
        self.arrival_tolerance = arrival_tolerance
        self.heading_tolerance = heading_tolerance

    def _plan(self, env: NavEnv, target: NDArray) -> list[NDArray]:
        try:
            return shortest_path(env.scene, env.pose.position, target)[1:]
        except SceneLoadError:
            return [target]

    def _act(self, env: NavEnv, action: LowLevelAction, result: ExecutionResult) -> bool:
        """Returns False once the budget is spent or the move collided."""
        step = env.step(action)
        result.actions.append(action)
        result.num_collisions += int(step.collided)
        return not step.collided and len(result.actions) < self.max_actions

    def _go_to(self, env: NavEnv, point: NDArray, result: ExecutionResult) -> bool:
        """Turn toward the point in fixed increments and step forward, re-aiming before every step."""
        forward_step = env.config.forward_step
        while len(result.actions) < self.max_actions:
            distance = float(np.linalg.norm(point - env.pose.position))
            if distance <= self.arrival_tolerance:
                return True

            turn = env.turn_toward(point)
            if abs(turn) > self.heading_tolerance:
                action = LowLevelAction.TURN_LEFT if turn > 0 else LowLevelAction.TURN_RIGHT
                if not self._act(env, action, result):
                    return False

                continue

            if distance < forward_step / 2.0:
                return True

            if not self._act(env, LowLevelAction.FORWARD, result):
                return False

        return False

    def navigate(self, env: NavEnv, waypoints: Sequence[Sequence[float]]) -> ExecutionResult:
        """Visit the waypoints in order; a collision re-plans the remaining leg on the scene raster."""
        result = ExecutionResult()
        for waypoint in waypoints:
            target = np.asarray(waypoint, dtype=np.float64)
            legs = [target]
            replans = 0
            while legs and len(result.actions) < self.max_actions:
                if self._go_to(env, legs[0], result):
                    legs.pop(0)
                elif len(result.actions) < self.max_actions and replans < 3:
                    replans += 1
                    legs = self._plan(env, target)
                else:
                    break

            if legs:
                return result

        result.reached = True
        return result
