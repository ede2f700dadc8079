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
Expert training batches: teacher-forced episodes on shortest-path supervision with their per-step map
snapshots, expert targets and ground-truth guidance heatmaps.
"""

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from torch.utils.data import Dataset

from ..envs.config import EnvConfig
from ..envs.scene import Scene
from ..envs.simulator import NavEnv
from ..mapping.geometry import GridSpec, Pose
from ..mapping.grid_mapper import GridMap
from ..mapping.topo_mapper import STOP_NODE_ID, TopoGraph
from ..models.heatmap import HeatmapConfig, ground_truth_heatmap
from ..workers.rollout import DualMapRollout, EpisodeResult, RolloutConfig


@dataclass
class TrainStep:
    t: int
    pose: Pose
    graph: TopoGraph
    """persisted stage-2 graph, input of the action and masked-word heads"""
    stage1_graph: TopoGraph
    """stage-1 graph, input of the heatmap head"""
    grid: GridMap
    expert_target: int
    """stop node or an observed node of `graph`"""
    target_heatmap: NDArray
    """(mU, nV) rho-scaled Gaussian at the next expert waypoint"""


@dataclass
class TrainBatch:
    scene: str
    tokens: list[int]
    steps: list[TrainStep]

    def __len__(self) -> int:
        return len(self.steps)


def build_batch(result: EpisodeResult, spec: GridSpec, heatmap_config: HeatmapConfig) -> Optional[TrainBatch]:
    """Turn an episode with snapshots into a batch. Steps without an expert target are skipped,
    None when no step is left.
    """
    record = result.record
    if len(result.snapshots) != len(record.steps):
        raise ValueError("The episode was run without snapshots.")

    steps = []
    for step, snapshot in zip(record.steps, result.snapshots):
        target = snapshot.expert_target
        if target is None or snapshot.expert_waypoint is None:
            continue

        if target != STOP_NODE_ID and target not in snapshot.graph.observed_ids():
            raise ValueError(f"Expert target {target} is not an action target at step {step.t}.")

        pose = Pose(*step.pose)
        heatmap, _ = ground_truth_heatmap(snapshot.expert_waypoint, pose, spec, heatmap_config)
        steps.append(
            TrainStep(
                t=step.t,
                pose=pose,
                graph=snapshot.graph,
                stage1_graph=snapshot.stage1_graph,
                grid=snapshot.grid,
                expert_target=target,
                target_heatmap=heatmap.values,
            )
        )

    if not steps:
        return None

    return TrainBatch(scene=record.scene, tokens=list(record.instruction), steps=steps)


def expert_rollout_config(config: RolloutConfig) -> RolloutConfig:
    """Expert episodes ignore the predicted heatmap."""
    return replace(config, heatmap=replace(config.heatmap, delta=0.0))


class ExpertDataset(Dataset):
    """
    One teacher-forced episode per scene, built on first access and cached.
    Expert episodes do not depend on the agent's parameters: the heatmap has zero weight and every step
    with an expert target executes it.
    """

    def __init__(
        self,
        scenes: Sequence[Scene],
        rollout: DualMapRollout,
        env_config: EnvConfig,
        seed: int = 1,
        max_instruction_length: int = 24,
    ):
        self.scenes = list(scenes)
        self.rollout = DualMapRollout(rollout.agent, expert_rollout_config(rollout.config), env_config)
        self.env_config = env_config
        self.max_instruction_length = max_instruction_length
        self.seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(len(self.scenes))]
        self._cache: dict[int, Optional[TrainBatch]] = {}

    def __len__(self):
        return len(self.scenes)

    def __getitem__(self, index: int) -> Optional[TrainBatch]:
        if index not in self._cache:
            env = NavEnv(self.scenes[index], self.env_config, self.max_instruction_length)
            seed = self.seeds[index]
            result = self.rollout.run_episode(
                env, np.random.default_rng(seed), teacher_prob=1.0, keep_snapshots=True, seed=seed
            )
            if result.record.failed:
                print(f"Expert episode failed on scene {result.record.scene}: {result.record.error}")
                self._cache[index] = None
            else:
                self._cache[index] = build_batch(result, self.rollout.spec, self.rollout.config.heatmap)

        return self._cache[index]
