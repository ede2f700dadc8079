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

import copy
import json
import os

import numpy as np
import pandas as pd
import pytest
import torch

from dualnav.envs.scene import scene_from_dict
from dualnav.mapping.topo_mapper import STOP_NODE_ID
from dualnav.trainer import NavConfig, NavTrainer
from dualnav.trainer.core_algos import PretrainTask
from dualnav.trainer.data import ExpertDataset
from dualnav.utils.checkpoint import CHECKPOINT_TRACKER


def _scene(name: str, goal_y: float):
    return scene_from_dict(
        {
            "version": 1,
            "bounds": [8.0, 8.0],
            "obstacles": [[3.5, 1.0, 0.3, 2.0]],
            "landmarks": [{"label": "plant", "pos": [7.0, goal_y], "r": 0.3}],
            "start": [1.5, 4.0, 0.0],
            "goal": [6.5, goal_y],
            "seed": len(name),
        },
        name=name,
    )


@pytest.fixture
def config(tmp_path) -> NavConfig:
    config = NavConfig()
    config.rollout.max_steps = 2
    config.trainer.pretrain_iterations = 2
    config.trainer.finetune_iterations = 1
    config.trainer.log_freq = 1
    config.trainer.save_checkpoint_path = str(tmp_path / "ckpt")
    config.deep_post_init()
    return config


@pytest.fixture
def scenes():
    return [_scene("left", 4.0), _scene("right", 6.0)]


def test_expert_batches(config, scenes):
    trainer = NavTrainer(config, scenes)
    batch = trainer.dataset[0]
    assert batch is not None
    assert batch.scene == "left"
    assert 1 <= len(batch) <= 2
    for step in batch.steps:
        assert step.expert_target == STOP_NODE_ID or step.expert_target in step.graph.observed_ids()
        assert step.target_heatmap.shape == (55, 55)
        assert step.target_heatmap.max() == pytest.approx(10.0)

    other = ExpertDataset(scenes, trainer.rollout, config.env, seed=config.trainer.seed)
    assert [step.expert_target for step in other[0].steps] == [step.expert_target for step in batch.steps]
    assert other[0].tokens == batch.tokens
    assert trainer.dataset[0] is batch


def test_zero_weight_removes_gradient(config, scenes):
    trainer = NavTrainer(config, scenes)
    batch = trainer.dataset[0]
    report = trainer.update(batch, {PretrainTask.MLM: 0.0, PretrainTask.HSAP: 1.0, PretrainTask.GAHP: 0.0})
    assert report.mlm.item() == 0.0
    assert report.total.item() == pytest.approx(report.hsap.item())
    assert report.grad_norms["mlm_head"] == 0.0
    assert report.grad_norms["heatmap_head"] == 0.0
    assert report.grad_norms["action_heads"] > 0.0

    report = trainer.update(batch, {PretrainTask.MLM: 1.0, PretrainTask.HSAP: 0.0, PretrainTask.GAHP: 0.0})
    assert report.mlm.item() > 0.0
    assert report.grad_norms["action_heads"] == 0.0
    assert report.grad_norms["mlm_head"] > 0.0

    report = trainer.update(batch, {PretrainTask.MLM: 0.0, PretrainTask.HSAP: 0.0, PretrainTask.GAHP: 1.0})
    assert report.gahp.item() > 0.0
    assert report.grad_norms["heatmap_head"] > 0.0
    assert report.grad_norms["action_heads"] == 0.0


def test_fit_and_resume(config, scenes):
    trainer = NavTrainer(config, scenes)
    trainer.fit()
    assert trainer.global_step == 3

    save_path = config.trainer.save_checkpoint_path
    losses = pd.read_csv(os.path.join(save_path, "losses.csv"))
    assert list(losses.columns) == ["iteration", "mlm", "hsap", "gahp", "total"]
    assert losses["iteration"].tolist() == [1, 2, 3]
    assert np.isfinite(losses["total"]).all()

    with open(os.path.join(save_path, CHECKPOINT_TRACKER)) as f:
        tracker = json.load(f)

    assert tracker["last_global_step"] == 3
    with open(os.path.join(save_path, "global_step_3", "extra_state.json")) as f:
        extra_state = json.load(f)

    assert extra_state["stage"] == "finetune"
    assert extra_state["config_hash"] == config.config_hash()

    resumed = NavTrainer(config, scenes)
    resumed._load_checkpoint()
    assert resumed.global_step == 3
    assert resumed.rng.bit_generator.state == trainer.rng.bit_generator.state
    for name, tensor in trainer.agent.state_dict().items():
        assert np.array_equal(tensor.numpy(), resumed.agent.state_dict()[name].numpy()), name


def test_trainer_needs_scenes(config):
    with pytest.raises(ValueError):
        NavTrainer(config, [])


def test_fit_is_reproducible(config, scenes, tmp_path):
    runs = []
    for name in ("first", "second"):
        run_config = copy.deepcopy(config)
        run_config.trainer.save_checkpoint_path = str(tmp_path / name)
        trainer = NavTrainer(run_config, scenes)
        trainer.fit()
        losses = pd.read_csv(os.path.join(run_config.trainer.save_checkpoint_path, "losses.csv"))
        runs.append((losses, trainer.agent.state_dict()))

    (first_losses, first_state), (second_losses, second_state) = runs
    pd.testing.assert_frame_equal(first_losses, second_losses, check_exact=True)
    assert first_state.keys() == second_state.keys()
    for name, tensor in first_state.items():
        assert torch.equal(tensor, second_state[name]), name
