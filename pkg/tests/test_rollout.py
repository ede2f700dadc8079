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

import numpy as np
import pytest
import torch

from dualnav.envs import EnvConfig, NavEnv, SimulatorError, render_panorama
from dualnav.envs.disturbance import Disturbance
from dualnav.envs.scene import scene_from_dict
from dualnav.mapping.geometry import Pose
from dualnav.mapping.topo_mapper import STOP_NODE_ID, Candidate, TopoGraph
from dualnav.models import DualMapAgent, HeatmapConfig, ModelConfig
from dualnav.workers.rollout import (
    DualMapRollout,
    EpisodeRecord,
    LowLevelExecutor,
    RolloutConfig,
    expert_target,
    read_records,
    write_records,
)
from dualnav.workers.rollout.episode import make_candidates, route
from dualnav.workers.rollout.record import MAX_STEPS, STOP_ACTION


def _scene(start=(2.0, 5.0, 0.0), goal=(8.0, 5.0), obstacles=()):
    return scene_from_dict(
        {
            "version": 1,
            "bounds": [10.0, 10.0],
            "obstacles": [list(rect) for rect in obstacles],
            "landmarks": [{"label": "lamp", "pos": [8.5, 6.0], "r": 0.3}],
            "start": list(start),
            "goal": list(goal),
            "seed": 4,
        },
        name="room",
    )


def _rollout(max_steps: int = 3, delta: float = 1e-5) -> DualMapRollout:
    torch.manual_seed(0)
    agent = DualMapAgent(ModelConfig())
    config = RolloutConfig(max_steps=max_steps, heatmap=HeatmapConfig(delta=delta))
    return DualMapRollout(agent, config, EnvConfig())


def test_episode_is_deterministic():
    rollout = _rollout()
    first = rollout.run_episode(NavEnv(_scene()), np.random.default_rng(11), seed=11).record
    second = rollout.run_episode(NavEnv(_scene()), np.random.default_rng(11), seed=11).record
    assert first.to_dict() == second.to_dict()
    assert 1 <= len(first.steps) <= 3
    assert first.trajectory[0] == [2.0, 5.0, 0.0]

    other = rollout.run_episode(NavEnv(_scene()), np.random.default_rng(12), seed=12).record
    assert other.steps[0].candidates != first.steps[0].candidates


def test_persisted_graph_comes_from_adjusted_candidates():
    rollout = _rollout(delta=1.0)
    scene = _scene()
    result = rollout.run_episode(NavEnv(scene), np.random.default_rng(5), keep_snapshots=True, seed=5)
    steps = result.record.steps
    assert len(result.snapshots) == len(steps)
    sensor = rollout.env_config.sensor
    previous = TopoGraph(sensor.feature_dim)
    for step, snapshot in zip(steps, result.snapshots):
        assert snapshot.graph.digest() == step.graph_digest
        assert snapshot.stage1_graph.digest() == step.stage1_graph_digest
        pose = Pose(*step.pose)
        obs = render_panorama(scene, pose, sensor)
        candidates = make_candidates(np.array(step.adjusted_candidates), pose, obs)
        rebuilt = previous.copy().update(pose, candidates, obs.mean_feature, step.t)
        assert rebuilt.digest() == step.graph_digest
        previous = snapshot.graph


def test_zero_delta_keeps_candidates():
    rollout = _rollout(delta=0.0)
    record = rollout.run_episode(NavEnv(_scene()), np.random.default_rng(2), seed=2).record
    for step in record.steps:
        assert step.adjusted_candidates == step.candidates
        assert step.fused_digest == step.proposal_digest


def test_zero_action_heads_stop_immediately():
    rollout = _rollout()
    for parameter in rollout.agent.action_heads.parameters():
        torch.nn.init.zeros_(parameter)

    record = rollout.run_episode(NavEnv(_scene()), np.random.default_rng(0)).record
    assert len(record.steps) == 1
    assert record.steps[0].action == STOP_NODE_ID
    assert record.stop_reason == STOP_ACTION
    assert len(record.trajectory) == 1


def test_teacher_forcing_hits_step_cap():
    rollout = _rollout(max_steps=2)
    record = rollout.run_episode(NavEnv(_scene()), np.random.default_rng(0), teacher_prob=1.0).record
    assert len(record.steps) == 2
    assert record.stop_reason == MAX_STEPS
    assert all(step.teacher_forced for step in record.steps)
    assert all(step.action != STOP_NODE_ID for step in record.steps)


def test_teacher_forcing_stops_at_goal():
    rollout = _rollout()
    record = rollout.run_episode(
        NavEnv(_scene(start=(7.5, 5.0, 0.0))), np.random.default_rng(0), teacher_prob=1.0
    ).record
    assert len(record.steps) == 1
    assert record.stop_reason == STOP_ACTION
    assert record.steps[0].teacher_forced


def test_simulator_failure_is_flagged(monkeypatch):
    def broken(self, spec, pose=None):
        raise SimulatorError("sensor offline")

    monkeypatch.setattr(NavEnv, "reachable_lattice", broken)
    record = _rollout().run_episode(NavEnv(_scene()), np.random.default_rng(0)).record
    assert record.failed
    assert "sensor offline" in record.error
    assert record.trajectory == [[2.0, 5.0, 0.0]]


def test_disturbed_episode_records_candidates():
    rollout = _rollout(delta=0.0)
    record = rollout.run_episode(
        NavEnv(_scene()), np.random.default_rng(2), disturbance=Disturbance.parse("fov_loss:1.0", seed=1)
    ).record
    clean = rollout.run_episode(NavEnv(_scene()), np.random.default_rng(2)).record
    assert record.steps[0].candidates != clean.steps[0].candidates
    assert not record.failed


def test_expert_target_and_route():
    scene = _scene()
    env = NavEnv(scene)
    env.reset()
    feature = np.ones(32)
    graph = TopoGraph(32).update(
        env.pose, [Candidate((4.0, 5.0), 0, feature), Candidate((2.0, 7.0), 3, feature)], feature, 0
    )
    ahead, side = graph.current_candidates
    assert expert_target(graph, env, stop_radius=1.0) == ahead
    assert expert_target(TopoGraph(32), env, stop_radius=1.0) is None
    assert route(graph, ahead)[0].tolist() == [4.0, 5.0]

    graph.update(Pose(4.0, 5.0), [Candidate((6.0, 5.0), 0, feature)], feature, 1)
    path = route(graph, side)
    assert [p.tolist() for p in path] == [[2.0, 5.0], [2.0, 7.0]]

    near = NavEnv(_scene(start=(7.5, 5.0, 0.0)))
    near.reset()
    assert expert_target(graph, near, stop_radius=1.0) == STOP_NODE_ID


@pytest.mark.parametrize("obstacles", [(), ((4.0, 3.0, 0.4, 4.0),)])
def test_executor_reaches_target(obstacles):
    env = NavEnv(_scene(obstacles=obstacles))
    env.reset()
    result = LowLevelExecutor(max_actions=200).navigate(env, [[6.0, 5.0]])
    assert result.reached
    assert env.pose.distance_to([6.0, 5.0]) <= 0.25
    assert all(env.scene.is_free(p.position) for p in env.trajectory)


def test_records_round_trip(tmp_path):
    record = _rollout(max_steps=1).run_episode(NavEnv(_scene()), np.random.default_rng(0), seed=0).record
    path = str(tmp_path / "records.jsonl")
    write_records([record, record], path)
    loaded = read_records(path)
    assert len(loaded) == 2
    assert loaded[0].to_dict() == record.to_dict()

    data = record.to_dict()
    data["schema_version"] = 0
    with pytest.raises(ValueError):
        EpisodeRecord.from_dict(data)
