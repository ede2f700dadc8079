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
"""
Navigation config
"""

import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Optional, Tuple

from ..envs.config import EnvConfig
from ..models.config import ModelConfig
from ..utils.py_functional import stable_hash
from ..workers.rollout.config import RolloutConfig


def recursive_post_init(dataclass_obj):
    if hasattr(dataclass_obj, "post_init"):
        dataclass_obj.post_init()

    for attr in fields(dataclass_obj):
        if is_dataclass(getattr(dataclass_obj, attr.name)):
            recursive_post_init(getattr(dataclass_obj, attr.name))


@dataclass
class AlgorithmConfig:
    mlm_weight: float = 1.0
    hsap_weight: float = 1.0
    gahp_weight: float = 1.0
    """forced to 0 when the guidance heatmap is disabled"""
    mask_prob: float = 0.15
    """masked-word probability per instruction token"""
    lr: float = 1e-2
    """plain SGD learning rate"""


@dataclass
class TrainerConfig:
    pretrain_iterations: int = 2000
    finetune_iterations: int = 500
    seed: int = 1
    scene_dir: str = "scenes"
    """holds `train/` and `eval/` scene splits"""
    max_train_scenes: Optional[int] = None
    """use only the first n training scenes"""
    project_name: str = "dualnav"
    """project name for logger"""
    experiment_name: str = "demo"
    """experiment name for logger"""
    logger: Tuple[str] = ("console",)
    """trackers, any of `console`, `tensorboard`, `wandb`"""
    log_freq: int = 50
    """iterations between tracker logs"""
    num_workers: int = 1
    """parallel evaluation workers, ray is used above 1"""
    val_freq: int = -1
    """validation frequency, -1 means no validation"""
    val_episodes_to_log: int = 0
    """number of evaluated episodes to log per validation"""
    save_freq: int = -1
    """save frequency, -1 means saving at the end only"""
    save_limit: int = -1
    """max number of checkpoints to save, -1 means no limit"""
    save_checkpoint_path: Optional[str] = None
    """save checkpoint path, if not specified, use `checkpoints/project_name/experiment_name`"""
    load_checkpoint_path: Optional[str] = None
    """load checkpoint path"""
    find_last_checkpoint: bool = True
    """automatically find the last checkpoint in the save checkpoint path to resume training"""

    def post_init(self):
        if self.save_checkpoint_path is None:
            self.save_checkpoint_path = os.path.join("checkpoints", self.project_name, self.experiment_name)

        self.save_checkpoint_path = os.path.abspath(self.save_checkpoint_path)
        if self.load_checkpoint_path is not None:
            if os.path.exists(self.load_checkpoint_path):
                self.load_checkpoint_path = os.path.abspath(self.load_checkpoint_path)
            else:
                print(f"Model checkpoint {self.load_checkpoint_path} not found.")
                self.load_checkpoint_path = None


@dataclass
class EvalConfig:
    split: str = "eval"
    episodes_per_scene: int = 1
    max_scenes: Optional[int] = None
    deltas: Tuple[float, ...] = (0.0, 1e-6, 1e-5, 1e-4)
    """guidance weights of the delta sweep"""
    disturbance_kinds: Tuple[str, ...] = ("fov_loss", "local_noise", "memory_decay")
    disturbance_levels: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    experts: Tuple[str, ...] = ("topo", "grid", "hybrid")
    sweep: str = "delta"
    """sweep kind, support `delta`, `ablation`, `disturbance`"""
    render: bool = False
    """write top-down trajectory renders and heatmap maps for the first episodes"""
    render_episodes: int = 2
    pixels_per_meter: float = 20.0


@dataclass
class NavConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def post_init(self):
        self.env.sensor.feature_dim = self.model.hidden_dim
        self.model.grid_u = self.rollout.grid_u
        self.model.grid_v = self.rollout.grid_v
        self.model.upsample_m = self.rollout.upsample_m
        self.model.upsample_n = self.rollout.upsample_n
        if self.model.max_steps < self.rollout.max_steps:
            raise ValueError(
                f"model.max_steps ({self.model.max_steps}) must cover rollout.max_steps ({self.rollout.max_steps})."
            )

        if not self.rollout.heatmap.use_guidance:
            self.algorithm.gahp_weight = 0.0

    def deep_post_init(self):
        recursive_post_init(self)

    def to_dict(self):
        return asdict(self)

    def config_hash(self) -> str:
        return stable_hash(self.to_dict())
