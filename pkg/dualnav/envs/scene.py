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
Synthetic 2D floorplans: axis-aligned rectangular obstacles inside a rectangular boundary, plus point
landmarks. Scenes are immutable once loaded; derived rasters are computed lazily and cached.

Scene JSON schema::

    {"version": 1, "bounds": [w, h], "obstacles": [[x, y, w, h], ...],
     "landmarks": [{"label": str, "pos": [x, y], "r": float}, ...],
     "start": [x, y, heading], "goal": [x, y], "seed": int}
"""

import json
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from ..mapping.geometry import Pose


SCENE_VERSION = 1
# 8-connected moves without corner cutting, (di, dj, cost in cells)
MOVES = [
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, math.sqrt(2)), (1, -1, math.sqrt(2)), (-1, 1, math.sqrt(2)), (-1, -1, math.sqrt(2)),
]  # fmt: skip


class SceneLoadError(ValueError):
    pass


class MalformedSceneError(SceneLoadError):
    pass


class BlockedPositionError(SceneLoadError):
    pass


class UnreachableGoalError(SceneLoadError):
    pass


@dataclass(frozen=True)
class Landmark:
    label: str
    position: tuple[float, float]
    radius: float = 0.3


def boxes_from_rects(rects: Sequence[Sequence[float]], margin: float = 0.0) -> NDArray:
    """(x, y, w, h) rectangles to (M, 4) [x0, y0, x1, y1] boxes grown by `margin`."""
    if len(rects) == 0:
        return np.zeros((0, 4), dtype=np.float64)

    rects = np.asarray(rects, dtype=np.float64)
    return np.stack(
        [
            rects[:, 0] - margin,
            rects[:, 1] - margin,
            rects[:, 0] + rects[:, 2] + margin,
            rects[:, 1] + rects[:, 3] + margin,
        ],
        axis=-1,
    )


def _slab(origin: float, direction: NDArray, low: NDArray, high: NDArray) -> tuple[NDArray, NDArray]:
    """Entry/exit parameters of rays (R,) against slabs (M,), shape (R, M)."""
    parallel = (direction == 0.0)[:, None]
    inside = ((origin > low) & (origin < high))[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_low = (low[None, :] - origin) / direction[:, None]
        t_high = (high[None, :] - origin) / direction[:, None]

    t_enter = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t_low, t_high))
    t_exit = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t_low, t_high))
    return t_enter, t_exit


def ray_box_distances(origin: Sequence[float], directions: NDArray, boxes: NDArray) -> NDArray:
    """Distance along each unit direction (R, 2) to the first box hit, inf when nothing is hit."""
    if len(boxes) == 0:
        return np.full(len(directions), np.inf)

    x_enter, x_exit = _slab(origin[0], directions[:, 0], boxes[:, 0], boxes[:, 2])
    y_enter, y_exit = _slab(origin[1], directions[:, 1], boxes[:, 1], boxes[:, 3])
    t_enter = np.maximum(x_enter, y_enter)
    t_exit = np.minimum(x_exit, y_exit)
    hit = (t_enter <= t_exit) & (t_exit > 0.0)
    return np.where(hit, np.maximum(t_enter, 0.0), np.inf).min(axis=1)


@dataclass(frozen=True)
class Scene:
    bounds: tuple[float, float]
    obstacles: tuple[tuple[float, float, float, float], ...]
    landmarks: tuple[Landmark, ...]
    start: Pose
    goal: tuple[float, float]
    seed: int = 0
    name: str = ""
    agent_radius: float = 0.1
    raster_res: float = 0.1

    @cached_property
    def obstacle_boxes(self) -> NDArray:
        return boxes_from_rects(self.obstacles)

    @cached_property
    def inflated_boxes(self) -> NDArray:
        return boxes_from_rects(self.obstacles, margin=self.agent_radius)

    def free_mask(self, points: NDArray) -> NDArray:
        """Whether the agent's disc fits at each (N, 2) world point."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        r = self.agent_radius
        width, height = self.bounds
        inside = (points[:, 0] >= r) & (points[:, 0] <= width - r)
        inside &= (points[:, 1] >= r) & (points[:, 1] <= height - r)
        boxes = self.inflated_boxes
        if len(boxes) == 0:
            return inside

        px, py = points[:, 0:1], points[:, 1:2]
        blocked = (px > boxes[:, 0]) & (px < boxes[:, 2]) & (py > boxes[:, 1]) & (py < boxes[:, 3])
        return inside & ~blocked.any(axis=1)

    def is_free(self, point: Sequence[float]) -> bool:
        return bool(self.free_mask(np.asarray(point, dtype=np.float64))[0])

    def segment_clear(self, a: Sequence[float], b: Sequence[float]) -> bool:
        """Whether the agent can travel the straight segment a -> b without touching an inflated obstacle."""
        if not (self.is_free(a) and self.is_free(b)):
            return False

        a = np.asarray(a, dtype=np.float64)
        delta = np.asarray(b, dtype=np.float64) - a
        length = float(np.linalg.norm(delta))
        if length == 0.0 or len(self.inflated_boxes) == 0:
            return True

        distances = ray_box_distances(a, (delta / length)[None, :], self.inflated_boxes)
        return bool(distances[0] >= length)

    def cast_rays(self, origin: Sequence[float], angles: NDArray) -> NDArray:
        """Planar range to the first wall or obstacle along each world angle (radians)."""
        angles = np.asarray(angles, dtype=np.float64)
        directions = np.stack([np.cos(angles), np.sin(angles)], axis=-1).reshape(-1, 2)
        width, height = self.bounds
        walls = np.array([[0.0, 0.0, width, height]])
        x_enter, x_exit = _slab(origin[0], directions[:, 0], walls[:, 0], walls[:, 2])
        y_enter, y_exit = _slab(origin[1], directions[:, 1], walls[:, 1], walls[:, 3])
        to_walls = np.minimum(x_exit, y_exit)[:, 0]
        to_obstacles = ray_box_distances(origin, directions, self.obstacle_boxes)
        return np.minimum(to_walls, to_obstacles).reshape(angles.shape)

    @cached_property
    def raster_shape(self) -> tuple[int, int]:
        return int(math.ceil(self.bounds[0] / self.raster_res)), int(math.ceil(self.bounds[1] / self.raster_res))

    @cached_property
    def raster_centers(self) -> NDArray:
        rows, cols = self.raster_shape
        xs = (np.arange(rows) + 0.5) * self.raster_res
        ys = (np.arange(cols) + 0.5) * self.raster_res
        grid_x, grid_y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([grid_x, grid_y], axis=-1)

    @cached_property
    def free_raster(self) -> NDArray:
        """(nx, ny) bool occupancy raster, True where the agent fits at the cell centre."""
        return self.free_mask(self.raster_centers.reshape(-1, 2)).reshape(self.raster_shape)

    @cached_property
    def components(self) -> NDArray:
        labels, _ = ndimage.label(self.free_raster)
        return labels

    def raster_cell(self, point: Sequence[float]) -> Optional[tuple[int, int]]:
        """Free raster cell holding `point`, or the nearest free cell within two cells; None otherwise."""
        rows, cols = self.raster_shape
        i = min(max(int(point[0] // self.raster_res), 0), rows - 1)
        j = min(max(int(point[1] // self.raster_res), 0), cols - 1)
        if self.free_raster[i, j]:
            return i, j

        best, best_distance = None, np.inf
        for di in range(-2, 3):
            for dj in range(-2, 3):
                ni, nj = i + di, j + dj
                if 0 <= ni < rows and 0 <= nj < cols and self.free_raster[ni, nj]:
                    distance = float(np.linalg.norm(self.raster_centers[ni, nj] - np.asarray(point[:2])))
                    if distance < best_distance:
                        best, best_distance = (ni, nj), distance

        return best

    def cell_center(self, cell: tuple[int, int]) -> NDArray:
        return self.raster_centers[cell[0], cell[1]]

    def raster_neighbors(self, cell: tuple[int, int]) -> list[tuple[tuple[int, int], float]]:
        """Free 8-neighbours of a cell without corner cutting, with metric step costs."""
        rows, cols = self.raster_shape
        free = self.free_raster
        result = []
        for di, dj, cost in MOVES:
            ni, nj = cell[0] + di, cell[1] + dj
            if not (0 <= ni < rows and 0 <= nj < cols and free[ni, nj]):
                continue

            if di != 0 and dj != 0 and not (free[cell[0] + di, cell[1]] and free[cell[0], cell[1] + dj]):
                continue

            result.append(((ni, nj), cost * self.raster_res))

        return result

    @cached_property
    def raster_graph(self) -> coo_matrix:
        rows, cols = self.raster_shape
        free = self.free_raster
        src_i, src_j = np.nonzero(free)
        sources, targets, weights = [], [], []
        for di, dj, cost in MOVES:
            dst_i, dst_j = src_i + di, src_j + dj
            valid = (dst_i >= 0) & (dst_i < rows) & (dst_j >= 0) & (dst_j < cols)
            valid[valid] = free[dst_i[valid], dst_j[valid]]
            if di != 0 and dj != 0:
                valid[valid] = free[dst_i[valid], src_j[valid]] & free[src_i[valid], dst_j[valid]]

            sources.append(src_i[valid] * cols + src_j[valid])
            targets.append(dst_i[valid] * cols + dst_j[valid])
            weights.append(np.full(int(valid.sum()), cost * self.raster_res))

        return coo_matrix(
            (np.concatenate(weights), (np.concatenate(sources), np.concatenate(targets))),
            shape=(rows * cols, rows * cols),
        )

    @cached_property
    def goal_field(self) -> NDArray:
        """(nx, ny) geodesic distance from every raster cell to the goal, inf where unreachable."""
        goal_cell = self.raster_cell(self.goal)
        rows, cols = self.raster_shape
        distances = dijkstra(self.raster_graph.tocsr(), directed=True, indices=goal_cell[0] * cols + goal_cell[1])
        goal_offset = float(np.linalg.norm(self.cell_center(goal_cell) - np.asarray(self.goal)))
        return distances.reshape(rows, cols) + goal_offset

    def geodesic_to_goal(self, point: Sequence[float]) -> float:
        cell = self.raster_cell(point)
        if cell is None:
            return float("inf")

        return float(self.goal_field[cell]) + float(np.linalg.norm(self.cell_center(cell) - np.asarray(point[:2])))

    def validate(self) -> None:
        if not self.is_free(self.start.position):
            raise BlockedPositionError("start blocked")

        if not self.is_free(self.goal):
            raise BlockedPositionError("goal blocked")

        start_cell, goal_cell = self.raster_cell(self.start.position), self.raster_cell(self.goal)
        if start_cell is None or goal_cell is None or self.components[start_cell] != self.components[goal_cell]:
            raise UnreachableGoalError("unreachable")

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": SCENE_VERSION,
            "bounds": list(self.bounds),
            "obstacles": [list(rect) for rect in self.obstacles],
            "landmarks": [{"label": lm.label, "pos": list(lm.position), "r": lm.radius} for lm in self.landmarks],
            "start": self.start.to_list(),
            "goal": list(self.goal),
            "seed": self.seed,
        }


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise MalformedSceneError(message)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_vector(value: Any, size: int) -> bool:
    return isinstance(value, list) and len(value) == size and all(_is_number(v) for v in value)


def scene_from_dict(data: Any, name: str = "", agent_radius: float = 0.1, raster_res: float = 0.1) -> Scene:
    """Validate a decoded scene JSON and build the scene. Raises a `SceneLoadError` subclass."""
    _require(isinstance(data, dict), "scene must be a JSON object")
    _require(data.get("version") == SCENE_VERSION, f"unsupported scene version {data.get('version')}")
    for key in ("bounds", "obstacles", "landmarks", "start", "goal", "seed"):
        _require(key in data, f"missing key `{key}`")

    _require(isinstance(data["obstacles"], list) and isinstance(data["landmarks"], list), "bad obstacle list")
    bounds = data["bounds"]
    _require(_is_vector(bounds, 2) and min(bounds) > 0, "bad bounds")
    obstacles = []
    for rect in data["obstacles"]:
        _require(_is_vector(rect, 4), f"bad obstacle {rect}")
        _require(rect[2] > 0 and rect[3] > 0, f"obstacle with non-positive size {rect}")
        obstacles.append(tuple(float(v) for v in rect))

    landmarks = []
    for item in data["landmarks"]:
        _require(isinstance(item, dict) and isinstance(item.get("label"), str), f"bad landmark {item}")
        pos = item.get("pos")
        _require(_is_vector(pos, 2), f"bad landmark {item}")
        _require(_is_number(item.get("r", 0.3)) and item.get("r", 0.3) >= 0, f"bad landmark radius {item}")
        landmarks.append(Landmark(item["label"], (float(pos[0]), float(pos[1])), float(item.get("r", 0.3))))

    start, goal = data["start"], data["goal"]
    _require(_is_vector(start, 3), "bad start")
    _require(_is_vector(goal, 2), "bad goal")
    _require(isinstance(data["seed"], int), "bad seed")
    scene = Scene(
        bounds=(float(bounds[0]), float(bounds[1])),
        obstacles=tuple(obstacles),
        landmarks=tuple(landmarks),
        start=Pose(*start),
        goal=(float(goal[0]), float(goal[1])),
        seed=int(data["seed"]),
        name=name,
        agent_radius=agent_radius,
        raster_res=raster_res,
    )
    scene.validate()
    return scene


def load_scene(path: str, agent_radius: float = 0.1, raster_res: float = 0.1) -> Scene:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise MalformedSceneError(f"invalid JSON in {path}: {e}") from e

    name = os.path.splitext(os.path.basename(path))[0]
    return scene_from_dict(data, name=name, agent_radius=agent_radius, raster_res=raster_res)


def save_scene(scene: Scene, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scene.to_dict(), f, indent=2)


def list_scene_files(scene_dir: str) -> list[str]:
    if not os.path.isdir(scene_dir):
        raise FileNotFoundError(f"Scene directory not found: {scene_dir}.")

    files = sorted(os.path.join(scene_dir, name) for name in os.listdir(scene_dir) if name.endswith(".json"))
    if not files:
        raise FileNotFoundError(f"No scene files in {scene_dir}.")

    return files
