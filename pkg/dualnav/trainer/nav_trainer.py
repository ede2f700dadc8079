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
Trainer of the dual-map agent: pretraining on cached expert episodes with the masked-word, action and
heatmap objectives, then fine-tuning on the agent's own rollouts while teacher forcing is annealed.
"""

import json
import os
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from ..envs.scene import Scene
from ..envs.simulator import NavEnv
from ..models.action_heads import fused_logits
from ..models.agent import DualMapAgent
from ..utils import torch_functional as VF
from ..utils.checkpoint import CHECKPOINT_TRACKER, CheckpointManager, find_latest_ckpt, remove_obsolete_ckpt
from ..utils.logger import Tracker
from ..utils.model_utils import print_model_size
from ..utils.py_functional import append_to_dict, convert_dict_to_str, timer, unflatten_dict
from ..workers.rollout import DualMapRollout
from .config import NavConfig
from .core_algos import (
    LossReport,
    PretrainTask,
    compute_mlm_loss,
    forcing_schedule,
    gahp_loss,
    hsap_loss,
    mask_for_mlm,
    task_weights,
)
from .data import ExpertDataset, TrainBatch, build_batch
from .evaluator import Evaluator
from .metrics import compute_report_metrics, reduce_metrics


LOSS_COLUMNS = ["iteration", "mlm", "hsap", "gahp", "total"]


class NavTrainer:
    def __init__(
        self,
        config: NavConfig,
        train_scenes: Sequence[Scene],
        val_scenes: Optional[Sequence[Scene]] = None,
        agent: Optional[DualMapAgent] = None,
    ):
        if not train_scenes:
            raise ValueError("At least one training scene is required.")

        self.config = config
        torch.manual_seed(config.trainer.seed)
        self.agent = agent or DualMapAgent(config.model)
        print_model_size(self.agent)
        self.optimizer = torch.optim.SGD(self.agent.parameters(), lr=config.algorithm.lr)
        self.rollout = DualMapRollout(self.agent, config.rollout, config.env)
        self.train_scenes = list(train_scenes)
        self.val_scenes = list(val_scenes or [])
        self.dataset = ExpertDataset(
            self.train_scenes,
            self.rollout,
            config.env,
            seed=config.trainer.seed,
            max_instruction_length=config.model.max_instruction_length,
        )
        self.checkpoint_manager = CheckpointManager(self.agent)
        self.rng = np.random.default_rng(config.trainer.seed)
        self.global_step = 0
        self.best_global_step = 0
        self.val_success = 0.0
        self.best_val_success = -1.0
        self.loss_history: list[dict[str, Any]] = []
        self.logger: Optional[Tracker] = None

    @property
    def total_iterations(self) -> int:
        return self.config.trainer.pretrain_iterations + self.config.trainer.finetune_iterations

    def compute_losses(
        self, batch: TrainBatch, weights: dict[PretrainTask, float], rng: np.random.Generator
    ) -> LossReport:
        """Weighted objectives of one batch. Tasks with a zero weight are not computed."""
        agent, radius = self.agent, self.config.rollout.neighborhood_radius
        zero = torch.zeros((), dtype=agent.dtype)
        logits, targets, predicted, target_heatmaps = [], [], [], []
        for step in batch.steps:
            encoding = agent.encode(batch.tokens, step.graph, step.grid, radius)
            if weights[PretrainTask.HSAP] > 0:
                scores = agent.actions(encoding, step.graph)
                logits.append(fused_logits(scores, self.config.model.expert))
                targets.append(scores.index_of(step.expert_target))

            if weights[PretrainTask.GAHP] > 0:
                stage1 = agent.encode(batch.tokens, step.stage1_graph, step.grid, radius)
                predicted.append(agent.heatmap(stage1))
                target_heatmaps.append(torch.as_tensor(step.target_heatmap, dtype=agent.dtype))

        hsap = hsap_loss(logits, targets) if logits else zero
        gahp = gahp_loss(predicted, target_heatmaps) if predicted else zero
        mlm = zero
        if weights[PretrainTask.MLM] > 0:
            masked, positions = mask_for_mlm(batch.tokens, rng, self.config.algorithm.mask_prob)
            step = batch.steps[int(rng.integers(len(batch.steps)))]
            encoding = agent.encode(masked, step.graph, step.grid, radius)
            mlm = compute_mlm_loss(agent.mlm_logits(encoding), batch.tokens, positions)

        total = zero
        for task, loss in ((PretrainTask.MLM, mlm), (PretrainTask.HSAP, hsap), (PretrainTask.GAHP, gahp)):
            if weights[task] > 0:
                total = total + weights[task] * loss

        return LossReport(mlm=mlm, hsap=hsap, gahp=gahp, total=total)

    def update(self, batch: TrainBatch, weights: dict[PretrainTask, float]) -> LossReport:
        self.agent.train()
        self.optimizer.zero_grad()
        report = self.compute_losses(batch, weights, self.rng)
        if not torch.isfinite(report.total):
            raise ValueError(f"Non-finite loss at step {self.global_step}: {report.to_metrics()}.")

        if report.total.requires_grad:
            report.total.backward()

        report.grad_norms = VF.grad_norms(self.agent)
        self.optimizer.step()
        return report

    def _next_expert_batch(self) -> TrainBatch:
        for _ in range(len(self.dataset)):
            batch = self.dataset[int(self.rng.integers(len(self.dataset)))]
            if batch is not None:
                return batch

        batches = [self.dataset[i] for i in range(len(self.dataset))]
        batches = [batch for batch in batches if batch is not None]
        if not batches:
            raise ValueError("No training scene produced an expert batch.")

        return batches[int(self.rng.integers(len(batches)))]

    def _finetune_batch(self, iteration: int, metrics: dict[str, Any]) -> Optional[TrainBatch]:
        config = self.config
        index = int(self.rng.integers(len(self.train_scenes)))
        env = NavEnv(self.train_scenes[index], config.env, config.model.max_instruction_length)
        seed = int(self.rng.integers(2**32))
        teacher_prob = forcing_schedule(iteration, config.trainer.finetune_iterations)
        result = self.rollout.run_episode(
            env,
            np.random.default_rng(seed),
            teacher_prob=teacher_prob,
            sample_actions=True,
            keep_snapshots=True,
            seed=seed,
        )
        metrics["finetune/teacher_prob"] = teacher_prob
        metrics["finetune/episode_steps"] = len(result.record.steps)
        if result.record.failed:
            print(f"Fine-tuning episode failed on scene {result.record.scene}: {result.record.error}")
            return None

        return build_batch(result, self.rollout.spec, config.rollout.heatmap)

    def _save_checkpoint(self) -> None:
        # path: {save_checkpoint_path}/global_step_{global_step}
        if self.val_success > self.best_val_success:
            self.best_val_success = self.val_success
            self.best_global_step = self.global_step

        remove_obsolete_ckpt(
            self.config.trainer.save_checkpoint_path,
            self.global_step,
            self.best_global_step,
            self.config.trainer.save_limit,
        )
        folder_path = os.path.join(self.config.trainer.save_checkpoint_path, f"global_step_{self.global_step}")
        extra_state = {
            "global_step": self.global_step,
            "stage": self.stage,
            "config_hash": self.config.config_hash(),
            "rng_state": self.rng.bit_generator.state,
        }
        self.checkpoint_manager.save_checkpoint(folder_path, extra_state)
        checkpointer_tracker_info = {
            "best_global_step": self.best_global_step,
            "best_val_success": round(self.best_val_success, 4),
            "last_global_step": self.global_step,
            "last_agent_path": os.path.abspath(folder_path),
        }
        checkpointer_tracker_path = os.path.join(self.config.trainer.save_checkpoint_path, CHECKPOINT_TRACKER)
        with open(checkpointer_tracker_path, "w") as f:
            json.dump(checkpointer_tracker_info, f, ensure_ascii=False, indent=2)

    def _load_checkpoint(self) -> None:
        if self.config.trainer.load_checkpoint_path is not None:
            load_checkpoint_path = self.config.trainer.load_checkpoint_path
        elif self.config.trainer.find_last_checkpoint:
            load_checkpoint_path, tracker_info = find_latest_ckpt(self.config.trainer.save_checkpoint_path)
            if tracker_info is not None:
                self.best_val_success = tracker_info.get("best_val_success", -1.0)
                self.best_global_step = tracker_info.get("best_global_step", 0)
        else:
            load_checkpoint_path = None

        if load_checkpoint_path is None:
            return

        if "global_step_" not in load_checkpoint_path.strip(os.path.sep).split(os.path.sep)[-1]:
            raise ValueError("`load_checkpoint_path` should end with `global_step_*`.")

        print(f"Load from checkpoint: {load_checkpoint_path}.")
        self.global_step = int(load_checkpoint_path.strip(os.path.sep).split("global_step_")[-1])
        extra_state = self.checkpoint_manager.load_checkpoint(load_checkpoint_path)
        if "rng_state" in extra_state:
            self.rng.bit_generator.state = extra_state["rng_state"]

    @property
    def stage(self) -> str:
        return "pretrain" if self.global_step <= self.config.trainer.pretrain_iterations else "finetune"

    def _validate(self) -> dict[str, Any]:
        print("Start validation...")
        output = Evaluator(self.config, self.agent).evaluate(self.val_scenes, keep_snapshots=False)
        self.val_success = output.report.aggregate["sr"]
        num_samples = self.config.trainer.val_episodes_to_log
        if num_samples > 0 and self.logger is not None:
            self.logger.log_episodes(output.episode_samples(num_samples), self.global_step)

        print("Finish validation.")
        return compute_report_metrics(output.report, prefix="val")

    def save_loss_curve(self, path: str) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        pd.DataFrame(self.loss_history, columns=LOSS_COLUMNS).to_csv(path, index=False)

    def fit(self, stages: Sequence[str] = ("pretrain", "finetune")) -> None:
        config = self.config.trainer
        self.logger = Tracker(loggers=list(config.logger), config=self.config.to_dict())
        self._load_checkpoint()
        weights = task_weights(self.config.algorithm)
        # no masked-word loss on the agent's own trajectories
        finetune_weights = {**weights, PretrainTask.MLM: 0.0}
        ends = {"pretrain": config.pretrain_iterations, "finetune": self.total_iterations}
        last_step = max(ends[stage] for stage in stages)
        main_tqdm = tqdm(range(last_step), desc="Running step", position=0)
        main_tqdm.update(self.global_step)
        window: dict[str, list[float]] = {}
        val_metrics: Optional[dict[str, Any]] = None
        while self.global_step < last_step:
            pretraining = self.global_step < config.pretrain_iterations
            if pretraining and "pretrain" not in stages:
                main_tqdm.update(config.pretrain_iterations - self.global_step)
                self.global_step = config.pretrain_iterations
                continue

            self.global_step += 1
            metrics, timing_raw = {}, {}
            with timer("step", timing_raw):
                with timer("gen", timing_raw):
                    if pretraining:
                        batch = self._next_expert_batch()
                    else:
                        iteration = self.global_step - config.pretrain_iterations - 1
                        batch = self._finetune_batch(iteration, metrics)

                if batch is not None:
                    with timer("update", timing_raw):
                        report = self.update(batch, weights if pretraining else finetune_weights)

                    metrics.update(report.to_metrics())
                    self.loss_history.append(
                        {
                            "iteration": self.global_step,
                            "mlm": metrics["loss/mlm"],
                            "hsap": metrics["loss/hsap"],
                            "gahp": metrics["loss/gahp"],
                            "total": metrics["loss/total"],
                        }
                    )

                if self.val_scenes and config.val_freq > 0 and self.global_step % config.val_freq == 0:
                    with timer("validation", timing_raw):
                        val_metrics = self._validate()

                    metrics.update(val_metrics)

                if config.save_freq > 0 and self.global_step % config.save_freq == 0:
                    with timer("save_checkpoint", timing_raw):
                        self._save_checkpoint()

            metrics.update({f"timing_s/{name}": value for name, value in timing_raw.items()})
            append_to_dict(window, metrics)

            if self.global_step % config.log_freq == 0 or self.global_step == last_step:
                self.logger.log(data=reduce_metrics(window), step=self.global_step)
                window = {}

            main_tqdm.update()

        if self.val_scenes:
            if val_metrics is None or config.val_freq <= 0 or self.global_step % config.val_freq != 0:
                val_metrics = self._validate()
                self.logger.log(data=val_metrics, step=self.global_step)

            print(f"Final validation metrics:\n{convert_dict_to_str(unflatten_dict(val_metrics))}")

        if config.save_freq <= 0 or self.global_step % config.save_freq != 0:
            self._save_checkpoint()

        self.save_loss_curve(os.path.join(config.save_checkpoint_path, "losses.csv"))
