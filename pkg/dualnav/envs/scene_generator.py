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
Procedural scene families: open rooms with clutter, corridor chains and multi-room floors with doorways.
"""

import os
from typing import Callable

import numpy as np

from ..mapping.geometry import Pose
from .config import SceneGenConfig
from .instruction import LANDMARK_LABELS
from .scene import Landmark, Scene, SceneLoadError, save_scene


WALL = 0.2
DOOR = 1.2
Rect = tuple[float, float, float, float]


def open_room(rng: np.random.Generator) -> tuple[tuple[float, float], list[Rect]]:
    width, height = float(rng.uniform(8.0, 12.0)), float(rng.uniform(8.0, 12.0))
    obstacles = []
    for _ in range(int(rng.integers(2, 5))):
        w, h = float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.5, 1.5))
        obstacles.append((float(rng.uniform(1.0, width - w - 1.0)), float(rng.uniform(1.0, height - h - 1.0)), w, h))

    return (width, height), obstacles


def corridor_chain(rng: np.random.Generator) -> tuple[tuple[float, float], list[Rect]]:
    """Parallel walls with a gap at alternating ends, forming one winding corridor."""
    num_lanes = int(rng.integers(2, 4))
    lane = float(rng.uniform(1.8, 2.6))
    width, height = float(rng.uniform(10.0, 14.0)), num_lanes * lane + (num_lanes - 1) * WALL
    obstacles = []
    for k in range(1, num_lanes):
        y = k * lane + (k - 1) * WALL
        if k % 2 == 1:
            obstacles.append((0.0, y, width - DOOR, WALL))
        else:
            obstacles.append((DOOR, y, width - DOOR, WALL))

    return (width, height), obstacles


def multi_room(rng: np.random.Generator) -> tuple[tuple[float, float], list[Rect]]:
    """2 x 2 rooms split by a cross of walls, each wall segment with one doorway."""
    width, height = float(rng.uniform(9.0, 13.0)), float(rng.uniform(9.0, 13.0))
    mid_x, mid_y = width / 2.0 - WALL / 2.0, height / 2.0 - WALL / 2.0
    obstacles = []
    for low, high in ((0.0, mid_y), (mid_y + WALL, height)):  # vertical wall at mid_x
        door = float(rng.uniform(low + 0.5, high - DOOR - 0.5))
        obstacles += [(mid_x, low, WALL, door - low), (mid_x, door + DOOR, WALL, high - door - DOOR)]

    for low, high in ((0.0, mid_x), (mid_x + WALL, width)):  # horizontal wall at mid_y
        door = float(rng.uniform(low + 0.5, high - DOOR - 0.5))
        obstacles += [(low, mid_y, door - low, WALL), (door + DOOR, mid_y, high - door - DOOR, WALL)]

    return (width, height), [rect for rect in obstacles if rect[2] > 0 and rect[3] > 0]


SCENE_FAMILIES: dict[str, Callable[[np.random.Generator], tuple[tuple[float, float], list[Rect]]]] = {
    "open_room": open_room,
    "corridor_chain": corridor_chain,
    "multi_room": multi_room,
}


def _free_point(scene: Scene, rng: np.random.Generator, margin: float = 0.5) -> np.ndarray:
    width, height = scene.bounds
    for _ in range(1000):
        point = np.array([rng.uniform(margin, width - margin), rng.uniform(margin, height - margin)])
        if scene.is_free(point):
            return point

    raise SceneLoadError("no free space")


def sample_scene(
    family: str, seed: int, cfg: SceneGenConfig, name: str = "", agent_radius: float = 0.1, raster_res: float = 0.1
) -> Scene:
    """Draw a valid scene of a family, retrying layouts and start/goal pairs until one validates."""
    if family not in SCENE_FAMILIES:
        raise NotImplementedError(f"Unknown scene family: {family}.")

    rng = np.random.default_rng(seed)
    for _ in range(cfg.max_tries):
        bounds, obstacles = SCENE_FAMILIES[family](rng)
        layout = Scene(
            bounds=bounds,
            obstacles=tuple(obstacles),
            landmarks=(),
            start=Pose(0.0, 0.0, 0.0),
            goal=(0.0, 0.0),
            agent_radius=agent_radius,
            raster_res=raster_res,
        )
        try:
            start = _free_point(layout, rng)
            goal = _free_point(layout, rng)
            if np.linalg.norm(goal - start) < cfg.min_start_goal_distance:
                continue

            labels = rng.choice(len(LANDMARK_LABELS), size=int(rng.integers(3, 6)), replace=False)
            landmarks = tuple(
                Landmark(LANDMARK_LABELS[i], tuple(float(c) for c in _free_point(layout, rng)), 0.3) for i in labels
            )
            scene = Scene(
                bounds=bounds,
                obstacles=tuple(obstacles),
                landmarks=landmarks,
                start=Pose(float(start[0]), float(start[1]), float(rng.uniform(0.0, 360.0))),
                goal=(float(goal[0]), float(goal[1])),
                seed=seed,
                name=name,
                agent_radius=agent_radius,
                raster_res=raster_res,
            )
            scene.validate()
            return scene
        except SceneLoadError:
            continue

    raise SceneLoadError(f"Could not sample a valid {family} scene in {cfg.max_tries} tries.")


def generate_scenes(
    out_dir: str, cfg: SceneGenConfig, seed: int, agent_radius: float = 0.1, raster_res: float = 0.1
) -> dict[str, list[str]]:
    """Write `{family}_{idx:03d}.json` files into `out_dir/train` and `out_dir/eval`."""
    if cfg.num_train_per_family > cfg.num_per_family:
        raise ValueError("num_train_per_family cannot exceed num_per_family.")

    seeds = np.random.SeedSequence(seed).generate_state(len(SCENE_FAMILIES) * cfg.num_per_family)
    paths = {"train": [], "eval": []}
    for family_idx, family in enumerate(SCENE_FAMILIES):
        for idx in range(cfg.num_per_family):
            split = "train" if idx < cfg.num_train_per_family else "eval"
            name = f"{family}_{idx:03d}"
            scene_seed = int(seeds[family_idx * cfg.num_per_family + idx])
            scene = sample_scene(family, scene_seed, cfg, name=name, agent_radius=agent_radius, raster_res=raster_res)
            os.makedirs(os.path.join(out_dir, split), exist_ok=True)
            path = os.path.join(out_dir, split, f"{name}.json")
            save_scene(scene, path)
            paths[split].append(path)

        print(f"Generated {cfg.num_per_family} {family} scenes.")

    return paths
