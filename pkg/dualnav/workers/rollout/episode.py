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
The two-stage decision loop. Every step samples candidates from the waypoint distribution, predicts a
guidance heatmap from a first map update, re-samples candidates from the fused heatmap, and decides on
a second map update. Both updates branch from the previous step's maps; only the second one persists.
"""

import math
from typing import Optional, Sequence

import networkx as nx
import numpy as np
import torch
from numpy.typing import NDArray

from ...envs.config import EnvConfig
from ...envs.disturbance import Disturbance, DisturbanceKind, DisturbanceState, apply_disturbance
from ...envs.scene import SceneLoadError
from ...envs.sensing import SurrogateObservation
from ...envs.simulator import NavEnv, SimulatorError
from ...envs.waypoint import surrogate_wp
from ...mapping.geometry import Pose, view_index_for_bearing, world_to_ego
from ...mapping.grid_mapper import build_grid_map
from ...mapping.topo_mapper import STOP_NODE_ID, Candidate, TopoGraph
from ...models.action_heads import fuse_action, sample_action
from ...models.agent import DualMapAgent
from ...models.heatmap import fuse_heatmaps, predict_heatmap, sample_waypoints
from .base import BaseRollout
from .config import RolloutConfig
from .executor import LowLevelExecutor
from .record import MAX_STEPS, STOP_ACTION, EpisodeRecord, EpisodeResult, StepRecord, StepSnapshot


def make_candidates(positions: NDArray, pose: Pose, obs: SurrogateObservation) -> list[Candidate]:
    """Attach to every candidate the feature of the view facing it."""
    view_features = obs.view_features
    candidates = []
    for position, ego in zip(positions, world_to_ego(positions, pose)):
        view_index = view_index_for_bearing(math.degrees(math.atan2(ego[1], ego[0])))
        candidates.append(Candidate(np.asarray(position, dtype=np.float64), view_index, view_features[view_index]))

    return candidates


def expert_target(graph: TopoGraph, env: NavEnv, stop_radius: float) -> Optional[int]:
    """Stop within `stop_radius` of the goal (geodesic), else the observed node closest to the goal.
    None when no observed node exists.
    """
    if env.geodesic_to_goal() <= stop_radius:
        return STOP_NODE_ID

    observed = graph.observed_ids()
    if not observed:
        return None

    distances = [env.scene.geodesic_to_goal(graph.nodes[node_id].position) for node_id in observed]
    return observed[int(np.argmin(distances))]


def route(graph: TopoGraph, target: int) -> list[NDArray]:
    """Positions to visit to reach a target node, through the graph when it is not adjacent."""
    position = graph.nodes[target].position
    if graph.current_id is None or graph.graph.has_edge(graph.current_id, target):
        return [position]

    try:
        path = graph.path_between(graph.current_id, target)
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return [position]

    return [graph.nodes[node_id].position for node_id in path[1:]]


def _positions(points: NDArray) -> list[list[float]]:
    return [[float(x), float(y)] for x, y in np.asarray(points).reshape(-1, 2)]


class DualMapRollout(BaseRollout):
    def __init__(self, agent: DualMapAgent, config: RolloutConfig, env_config: Optional[EnvConfig] = None):
        config.post_init()
        self.agent = agent
        self.config = config
        self.env_config = env_config or EnvConfig()
        self.spec = config.grid_spec()
        self.executor = LowLevelExecutor(
            max_actions=config.max_actions_per_step,
            arrival_tolerance=config.arrival_tolerance,
            heading_tolerance=config.heading_tolerance,
        )

    def _disturb(
        self, disturbance: Optional[Disturbance], kind: DisturbanceKind, state: DisturbanceState, rng
    ) -> DisturbanceState:
        if disturbance is None or disturbance.kind != kind:
            return state

        return apply_disturbance(disturbance, state, rng)

    @torch.no_grad()
    def run_episode(
        self,
        env: NavEnv,
        rng: np.random.Generator,
        disturbance: Optional[Disturbance] = None,
        teacher_prob: float = 0.0,
        sample_actions: bool = False,
        keep_snapshots: bool = False,
        seed: int = 0,
    ) -> EpisodeResult:
        config, spec, sensor = self.config, self.spec, self.env_config.sensor
        heatmap_cfg = config.heatmap
        self.agent.eval()
        env.reset()
        try:
            geodesic_length = env.geodesic_length
        except SceneLoadError:
            geodesic_length = None

        record = EpisodeRecord(
            scene=env.scene.name,
            seed=seed,
            instruction=list(env.instruction),
            goal=[float(v) for v in env.goal],
            geodesic_length=geodesic_length,
        )
        result = EpisodeResult(record=record)
        disturbance_rng = np.random.default_rng(
            [disturbance.seed if disturbance else 0, int(rng.integers(2**32))]
        )
        graph = TopoGraph(feature_dim=sensor.feature_dim, dedup_radius=config.dedup_radius)
        try:
            for t in range(config.max_steps):
                pose = env.pose
                step_seed = int(rng.integers(2**63))
                teacher_draw = float(rng.random())

                decayed = self._disturb(
                    disturbance, DisturbanceKind.MEMORY_DECAY, DisturbanceState(graph=graph), disturbance_rng
                )
                graph = decayed.graph
                obs = self._disturb(
                    disturbance,
                    DisturbanceKind.LOCAL_NOISE,
                    DisturbanceState(observation=env.observe()),
                    disturbance_rng,
                ).observation

                proposal, sampled = surrogate_wp(
                    obs,
                    pose,
                    spec,
                    sensor,
                    self.env_config.waypoint,
                    heatmap_cfg,
                    np.random.default_rng(step_seed),
                    reachable=env.reachable_lattice(spec),
                )
                free_positions = env.free_positions(spec)
                w = self._disturb(
                    disturbance,
                    DisturbanceKind.FOV_LOSS,
                    DisturbanceState(candidates=sampled.positions, free_positions=free_positions),
                    disturbance_rng,
                ).candidates

                grid = build_grid_map(obs.to_panorama(), pose, spec, hfov=sensor.hfov, camera=sensor.camera())
                stage1 = graph.copy().update(pose, make_candidates(w, pose, obs), obs.mean_feature, t)
                encoding = self.agent.encode(record.instruction, stage1, grid, config.neighborhood_radius)
                heatmap = predict_heatmap(encoding.fused_grid, self.agent.heatmap_head, spec)

                fused = fuse_heatmaps(heatmap, proposal.distribution, heatmap_cfg.effective_delta)
                adjusted = sample_waypoints(
                    fused,
                    heatmap_cfg.k_candidates,
                    proposal.nav_mask,
                    np.random.default_rng(step_seed),
                    pose,
                    spec,
                    min_separation=heatmap_cfg.min_separation,
                )
                w_hat = self._disturb(
                    disturbance,
                    DisturbanceKind.FOV_LOSS,
                    DisturbanceState(candidates=adjusted.positions, free_positions=free_positions),
                    disturbance_rng,
                ).candidates

                stage2 = graph.copy().update(pose, make_candidates(w_hat, pose, obs), obs.mean_feature, t)
                encoding = self.agent.encode(record.instruction, stage2, grid, config.neighborhood_radius)
                scores = self.agent.actions(encoding, stage2)

                target = None
                if teacher_prob > 0 or keep_snapshots:
                    target = expert_target(stage2, env, self.env_config.expert.stop_radius)

                forced = target is not None and teacher_draw < teacher_prob
                if forced:
                    action = target
                elif sample_actions:
                    generator = torch.Generator().manual_seed(step_seed)
                    action = sample_action(scores, generator, self.agent.config.expert)
                else:
                    action = fuse_action(scores, stage2.current_candidates, self.agent.config.expert)

                step = StepRecord(
                    t=t,
                    pose=pose.to_list(),
                    candidates=_positions(w),
                    adjusted_candidates=_positions(w_hat),
                    action=int(action),
                    teacher_forced=forced,
                    gamma=float(scores.gamma),
                    proposal_fallback=proposal.fallback,
                    sample_fallback=adjusted.fallback,
                    proposal_digest=proposal.distribution.digest(),
                    heatmap_digest=heatmap.digest(),
                    fused_digest=fused.digest(),
                    fused_argmax=list(fused.argmax()),
                    stage1_graph_digest=stage1.digest(),
                    graph_digest=stage2.digest(),
                    grid_digest=grid.digest(),
                    removed_nodes=list(decayed.removed_nodes),
                    num_excluded=encoding.num_excluded,
                )
                if config.record_heatmaps:
                    step.heatmaps = {
                        "proposal": proposal.distribution.values.tolist(),
                        "heatmap": heatmap.values.tolist(),
                        "fused": fused.values.tolist(),
                    }

                record.steps.append(step)
                if keep_snapshots:
                    result.snapshots.append(
                        StepSnapshot(
                            graph=stage2,
                            stage1_graph=stage1,
                            grid=grid,
                            proposal=proposal.distribution,
                            heatmap=heatmap,
                            fused=fused,
                            expert_target=target,
                            expert_waypoint=[float(v) for v in env.expert_action(pose).waypoint],
                        )
                    )

                graph = stage2
                if action == STOP_NODE_ID:
                    record.stop_reason = STOP_ACTION
                    break

                step.target = [float(v) for v in stage2.nodes[action].position]
                execution = self.executor.navigate(env, route(stage2, action))
                step.num_actions = len(execution.actions)
                step.reached = execution.reached
            else:
                record.stop_reason = MAX_STEPS
        except (SimulatorError, SceneLoadError) as e:
            record.failed = True
            record.error = f"{type(e).__name__}: {e}"

        record.trajectory = [p.to_list() for p in env.trajectory]
        record.num_collisions = env.num_collisions
        return result

    def run_episodes(self, envs: Sequence[NavEnv], seeds: Sequence[int], **kwargs) -> list[EpisodeResult]:
        return [
            self.run_episode(env, np.random.default_rng(seed), seed=seed, **kwargs) for env, seed in zip(envs, seeds)
        ]
