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

from .config import AlgorithmConfig, EvalConfig, NavConfig, TrainerConfig
from .core_algos import LossReport, PretrainTask, forcing_schedule, gahp_loss, hsap_loss, mask_for_mlm
from .data import ExpertDataset, TrainBatch, TrainStep, build_batch
from .evaluator import EvalOutput, Evaluator, run_sweep, sweep_variants
from .metrics import EpisodeMetrics, MetricsReport, compute_metrics
from .nav_trainer import NavTrainer


__all__ = [
    "AlgorithmConfig",
    "EpisodeMetrics",
    "EvalConfig",
    "EvalOutput",
    "Evaluator",
    "ExpertDataset",
    "LossReport",
    "MetricsReport",
    "NavConfig",
    "NavTrainer",
    "PretrainTask",
    "TrainBatch",
    "TrainStep",
    "TrainerConfig",
    "build_batch",
    "compute_metrics",
    "forcing_schedule",
    "gahp_loss",
    "hsap_loss",
    "mask_for_mlm",
    "run_sweep",
    "sweep_variants",
]
