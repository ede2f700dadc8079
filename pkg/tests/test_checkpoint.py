# Copyright 2024 Bytedance Ltd. and/or its affiliates
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

import json
import os
import shutil
import uuid

import pytest
import torch

from dualnav.models import DualMapAgent, ModelConfig
from dualnav.utils.checkpoint import CHECKPOINT_TRACKER, CheckpointManager, find_latest_ckpt, remove_obsolete_ckpt
from dualnav.utils.checkpoint.archive import MANIFEST_NAME, PARAMS_NAME, load_archive, read_manifest, save_archive


@pytest.fixture
def save_checkpoint_path():
    ckpt_dir = os.path.join("checkpoints", str(uuid.uuid4()))
    os.makedirs(ckpt_dir, exist_ok=True)
    yield ckpt_dir
    shutil.rmtree(ckpt_dir, ignore_errors=True)


def test_find_latest_ckpt(save_checkpoint_path):
    with open(os.path.join(save_checkpoint_path, CHECKPOINT_TRACKER), "w") as f:
        json.dump({"last_global_step": 10}, f, ensure_ascii=False, indent=2)

    assert find_latest_ckpt(save_checkpoint_path)[0] is None
    os.makedirs(os.path.join(save_checkpoint_path, "global_step_10"), exist_ok=True)
    assert find_latest_ckpt(save_checkpoint_path)[0] == os.path.join(save_checkpoint_path, "global_step_10")


def test_remove_obsolete_ckpt(save_checkpoint_path):
    for step in range(5, 30, 5):
        os.makedirs(os.path.join(save_checkpoint_path, f"global_step_{step}"), exist_ok=True)

    remove_obsolete_ckpt(save_checkpoint_path, global_step=30, best_global_step=10, save_limit=3)
    for step in range(5, 30, 5):
        is_exist = step in [10, 25]
        assert os.path.exists(os.path.join(save_checkpoint_path, f"global_step_{step}")) == is_exist


@pytest.mark.parametrize("dtype", ["fp32", "fp64"])
def test_agent_checkpoint_round_trip(save_checkpoint_path, dtype: str):
    torch.manual_seed(0)
    agent = DualMapAgent(ModelConfig(dtype=dtype))
    path = os.path.join(save_checkpoint_path, "global_step_1")
    CheckpointManager(agent).save_checkpoint(path, {"global_step": 1, "stage": "pretrain"})

    torch.manual_seed(1)
    restored = DualMapAgent(ModelConfig(dtype=dtype))
    extra_state = CheckpointManager(restored).load_checkpoint(path)
    assert extra_state == {"global_step": 1, "stage": "pretrain"}
    for (name, expected), (_, actual) in zip(agent.state_dict().items(), restored.state_dict().items()):
        assert torch.equal(expected, actual), name

    manifest = read_manifest(path)
    assert manifest["dtype"] == ("float32" if dtype == "fp32" else "float64")
    names = [entry["name"] for entry in manifest["tensors"]]
    assert names == sorted(agent.state_dict().keys())


def test_checkpoint_mismatch(save_checkpoint_path):
    agent = DualMapAgent(ModelConfig())
    path = CheckpointManager(agent).save_checkpoint(os.path.join(save_checkpoint_path, "global_step_2"))
    with pytest.raises(ValueError):
        CheckpointManager(DualMapAgent(ModelConfig(hidden_dim=16))).load_checkpoint(path)

    with pytest.raises(FileNotFoundError):
        CheckpointManager(agent).load_checkpoint(os.path.join(save_checkpoint_path, "global_step_3"))

    assert CheckpointManager(agent).load_checkpoint(None) == {}


def test_archive_layout(save_checkpoint_path):
    state_dict = {"b": torch.arange(3, dtype=torch.float32), "a": torch.ones(2, 2, dtype=torch.float32)}
    manifest = save_archive(state_dict, save_checkpoint_path)
    assert [entry["offset"] for entry in manifest["tensors"]] == [0, 16]
    assert os.path.getsize(os.path.join(save_checkpoint_path, PARAMS_NAME)) == 28
    loaded = load_archive(save_checkpoint_path)
    assert torch.equal(loaded["a"], state_dict["a"])
    assert torch.equal(loaded["b"], state_dict["b"])

    with pytest.raises(ValueError):
        save_archive({"steps": torch.arange(3)}, save_checkpoint_path)

    with open(os.path.join(save_checkpoint_path, PARAMS_NAME), "wb") as f:
        f.write(b"\x00" * 8)

    with pytest.raises(ValueError, match="truncated"):
        load_archive(save_checkpoint_path)

    with open(os.path.join(save_checkpoint_path, MANIFEST_NAME), "w") as f:
        json.dump({"format_version": 99}, f)

    with pytest.raises(ValueError):
        read_manifest(save_checkpoint_path)
