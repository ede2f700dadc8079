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
Robustness disturbances applied to the per-step episode state. A disturbance removes or replaces
`floor(level * n + 0.5)` of the n affected items; level 0 returns the state untouched.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import uniform_filter1d

from ..mapping.topo_mapper import TopoGraph
from .sensing import SurrogateObservation


class DisturbanceKind(str, Enum):
    FOV_LOSS = "fov_loss"
    LOCAL_NOISE = "local_noise"
    MEMORY_DECAY = "memory_decay"


@dataclass(frozen=True)
class Disturbance:
    kind: DisturbanceKind
    level: float
    seed: int = 0
    max_blur_width: int = 9
    """local_noise: box blur width at level 1, pixels"""

    def __post_init__(self):
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"Disturbance level must be in [0, 1], got {self.level}.")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "Disturbance":
        """`kind:level`, e.g. `fov_loss:0.5`."""
        kind, _, level = text.partition(":")
        try:
            return cls(DisturbanceKind(kind), float(level or 0.0), seed=seed)
        except ValueError as e:
            raise ValueError(f"Invalid disturbance `{text}`: {e}") from e

    def count(self, num_items: int) -> int:
        return min(num_items, int(math.floor(self.level * num_items + 0.5)))


@dataclass
class DisturbanceState:
    """The parts of an episode step a disturbance can touch. Fields a kind does not use may be None."""

    observation: Optional[SurrogateObservation] = None
    candidates: Optional[NDArray] = None
    """(k, 2) world positions of sampled candidate waypoints"""
    free_positions: Optional[NDArray] = None
    """(M, 2) world positions the fov_loss replacements are drawn from"""
    graph: Optional[TopoGraph] = None
    removed_nodes: tuple[int, ...] = ()


def fov_loss(candidates: NDArray, free_positions: NDArray, count: int, rng: np.random.Generator) -> NDArray:
    """Replace `count` randomly chosen candidates by uniform draws from `free_positions`."""
    candidates = np.array(candidates, dtype=np.float64, copy=True)
    if count == 0 or len(free_positions) == 0:
        return candidates

    replaced = rng.choice(len(candidates), size=count, replace=False)
    candidates[replaced] = free_positions[rng.integers(len(free_positions), size=count)]
    return candidates


def local_noise(
    obs: SurrogateObservation, level: float, count: int, max_blur_width: int, rng: np.random.Generator
) -> SurrogateObservation:
    """Box blur along depth image rows with a level-scaled width, then zero the features of `count` views."""
    width = 1 + int(round(level * (max_blur_width - 1)))
    depth = obs.depth_images
    if width > 1:
        depth = uniform_filter1d(depth, size=width, axis=-1, mode="nearest")

    features = obs.patch_features.copy()
    if count > 0:
        features[rng.choice(len(features), size=count, replace=False)] = 0.0

    return SurrogateObservation(patch_features=features, depth_images=depth)


def memory_decay(graph: TopoGraph, count: int, rng: np.random.Generator) -> tuple[TopoGraph, list[int]]:
    """Delete `count` random non-current visited nodes (and the observed nodes they orphan) from a copy."""
    pool = [node_id for node_id in graph.visited_ids() if node_id != graph.current_id]
    if count == 0 or not pool:
        return graph, []

    graph = graph.copy()
    chosen = sorted(int(x) for x in rng.choice(pool, size=min(count, len(pool)), replace=False))
    return graph, graph.remove_visited(chosen)


def apply_disturbance(d: Disturbance, state: DisturbanceState, rng: np.random.Generator) -> DisturbanceState:
    if d.level == 0:
        return state

    if d.kind == DisturbanceKind.FOV_LOSS:
        if state.candidates is None or state.free_positions is None:
            raise ValueError("fov_loss needs candidates and free positions.")

        count = d.count(len(state.candidates))
        return replace(state, candidates=fov_loss(state.candidates, state.free_positions, count, rng))
    elif d.kind == DisturbanceKind.LOCAL_NOISE:
        if state.observation is None:
            raise ValueError("local_noise needs an observation.")

        count = d.count(len(state.observation.patch_features))
        return replace(state, observation=local_noise(state.observation, d.level, count, d.max_blur_width, rng))
    elif d.kind == DisturbanceKind.MEMORY_DECAY:
        if state.graph is None:
            raise ValueError("memory_decay needs a graph.")

        pool = [node_id for node_id in state.graph.visited_ids() if node_id != state.graph.current_id]
        graph, removed = memory_decay(state.graph, d.count(len(pool)), rng)
        return replace(state, graph=graph, removed_nodes=tuple(removed))
    else:
        raise NotImplementedError(f"Unknown disturbance kind: {d.kind}.")
