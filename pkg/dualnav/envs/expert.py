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
Shortest-path supervision on the scene's occupancy raster.
"""

import heapq
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from ..mapping.geometry import Pose
from .scene import Scene, UnreachableGoalError


@dataclass
class ExpertAction:
    waypoint: NDArray
    """next expert waypoint a*_t, world meters"""
    path_length: float
    """geodesic length from the pose to the goal"""
    path: list[NDArray]
    """string-pulled polyline from the pose to the goal"""


def astar(scene: Scene, start_cell: tuple[int, int], goal_cell: tuple[int, int]) -> Optional[list[tuple[int, int]]]:
    """A* over free raster cells, 8-connected without corner cutting, Euclidean heuristic."""
    res = scene.raster_res

    def heuristic(cell: tuple[int, int]) -> float:
        return res * math.hypot(cell[0] - goal_cell[0], cell[1] - goal_cell[1])

    frontier = [(heuristic(start_cell), 0.0, start_cell)]
    came_from: dict[tuple[int, int], Optional[tuple[int, int]]] = {start_cell: None}
    cost_so_far = {start_cell: 0.0}
    while frontier:
        _, cost, current = heapq.heappop(frontier)
        if current == goal_cell:
            path = [current]
            while came_from[path[-1]] is not None:
                path.append(came_from[path[-1]])

            return path[::-1]

        if cost > cost_so_far[current]:
            continue

        for neighbor, step_cost in scene.raster_neighbors(current):
            new_cost = cost + step_cost
            if new_cost < cost_so_far.get(neighbor, math.inf):
                cost_so_far[neighbor] = new_cost
                came_from[neighbor] = current
                heapq.heappush(frontier, (new_cost + heuristic(neighbor), new_cost, neighbor))

    return None


def string_pull(scene: Scene, points: Sequence[NDArray]) -> list[NDArray]:
    """Greedy line-of-sight shortcutting: from each kept point, jump to the last point still visible."""
    pulled = [points[0]]
    i = 0
    while i < len(points) - 1:
        j = i + 1
        while j + 1 < len(points) and scene.segment_clear(points[i], points[j + 1]):
            j += 1

        pulled.append(points[j])
        i = j

    return pulled


def shortest_path(scene: Scene, start: Sequence[float], goal: Sequence[float]) -> list[NDArray]:
    start, goal = np.asarray(start[:2], dtype=np.float64), np.asarray(goal[:2], dtype=np.float64)
    if scene.segment_clear(start, goal):
        return [start, goal]

    start_cell, goal_cell = scene.raster_cell(start), scene.raster_cell(goal)
    cells = astar(scene, start_cell, goal_cell) if start_cell and goal_cell else None
    if cells is None:
        raise UnreachableGoalError("unreachable")

    points = [start] + [scene.cell_center(cell) for cell in cells[1:-1]] + [goal]
    return string_pull(scene, points)


def path_length(path: Sequence[NDArray]) -> float:
    return float(sum(np.linalg.norm(b - a) for a, b in zip(path[:-1], path[1:])))


def densify(path: Sequence[NDArray], spacing: float) -> list[NDArray]:
    points = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        num = max(1, int(math.ceil(float(np.linalg.norm(b - a)) / spacing)))
        points.extend(a + (b - a) * (k / num) for k in range(1, num + 1))

    return points


def expert_action(scene: Scene, pose: Pose, goal: Sequence[float], lookahead: float = 2.5) -> ExpertAction:
    """Next expert waypoint: the farthest point of the shortest path within `lookahead` that is in sight."""
    path = shortest_path(scene, pose.position, goal)
    waypoint = path[0]
    for point in densify(path, scene.raster_res):
        if np.linalg.norm(point - pose.position) <= lookahead and scene.segment_clear(pose.position, point):
            waypoint = point

    return ExpertAction(waypoint=np.asarray(waypoint, dtype=np.float64), path_length=path_length(path), path=path)
