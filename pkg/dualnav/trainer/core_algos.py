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
Core functions of the pretraining objectives: masked-word prediction, action prediction on the fused
scores, and guidance heatmap regression, plus the teacher-forcing schedule of fine-tuning.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..envs.instruction import MASK_ID
from ..utils import torch_functional as VF


if TYPE_CHECKING:
    from .config import AlgorithmConfig


class PretrainTask(str, Enum):
    """
    Using an enumeration class to avoid spelling errors in loss names
    """

    MLM = "mlm"
    HSAP = "hsap"
    GAHP = "gahp"


@dataclass
class LossReport:
    mlm: torch.Tensor
    hsap: torch.Tensor
    gahp: torch.Tensor
    total: torch.Tensor
    """weighted sum of the tasks with a non-zero weight"""
    grad_norms: dict[str, float] = field(default_factory=dict)
    """per top-level parameter group, filled after the backward pass"""

    def to_metrics(self) -> dict[str, Any]:
        metrics = {
            "loss/mlm": self.mlm.detach().item(),
            "loss/hsap": self.hsap.detach().item(),
            "loss/gahp": self.gahp.detach().item(),
            "loss/total": self.total.detach().item(),
        }
        metrics.update({f"grad_norm/{group}": value for group, value in self.grad_norms.items()})
        return metrics


def task_weights(algorithm_config: "AlgorithmConfig") -> dict[PretrainTask, float]:
    return {
        PretrainTask.MLM: algorithm_config.mlm_weight,
        PretrainTask.HSAP: algorithm_config.hsap_weight,
        PretrainTask.GAHP: algorithm_config.gahp_weight,
    }


def mask_for_mlm(
    tokens: Sequence[int], rng: np.random.Generator, mask_prob: float = 0.15
) -> tuple[list[int], list[int]]:
    """Mask every position independently with `mask_prob`, forcing one uniformly drawn position when
    none was drawn.

    Returns:
        masked tokens, ascending masked positions
    """
    if len(tokens) == 0:
        raise ValueError("Cannot mask an empty instruction.")

    if not 0.0 <= mask_prob <= 1.0:
        raise ValueError(f"mask_prob must be in [0, 1], got {mask_prob}.")

    drawn = rng.random(len(tokens)) < mask_prob
    if not drawn.any():
        drawn[int(rng.integers(len(tokens)))] = True

    positions = [int(i) for i in np.flatnonzero(drawn)]
    masked = [MASK_ID if drawn[i] else int(token) for i, token in enumerate(tokens)]
    return masked, positions


def compute_mlm_loss(logits: torch.Tensor, labels: Sequence[int], positions: Sequence[int]) -> torch.Tensor:
    """Mean negative log-likelihood of the original tokens at the masked positions.

    Args:
        logits: `(torch.Tensor)`
            shape: (L, vocab)
        labels: original token ids, length L
        positions: masked positions
    """
    if not positions:
        raise ValueError("At least one masked position is required.")

    rows = torch.as_tensor(list(positions), dtype=torch.long, device=logits.device)
    targets = torch.as_tensor([labels[i] for i in positions], dtype=torch.long, device=logits.device)
    return -VF.log_probs_from_logits(logits[rows], targets).mean()


def hsap_loss(step_logits: Sequence[torch.Tensor], target_indices: Sequence[int]) -> torch.Tensor:
    """Mean over steps of the negative log-softmax of the fused score at the expert target.

    Args:
        step_logits: per step, fused scores of shape (T_t,)
        target_indices: per step, index of the expert target in that step's target list
    """
    if len(step_logits) != len(target_indices):
        raise ValueError(f"Got {len(step_logits)} score vectors for {len(target_indices)} targets.")

    if not step_logits:
        raise ValueError("hsap_loss needs at least one step.")

    losses = []
    for logits, index in zip(step_logits, target_indices):
        if not 0 <= index < logits.shape[-1]:
            raise ValueError(f"Expert target index {index} is outside the {logits.shape[-1]} action targets.")

        losses.append(-F.log_softmax(logits, dim=-1)[index])

    return torch.stack(losses).mean()


def gahp_loss(predicted: Sequence[torch.Tensor], targets: Sequence[torch.Tensor]) -> torch.Tensor:
    """Mean squared error over all sub-cells of all steps."""
    if len(predicted) != len(targets) or not predicted:
        raise ValueError(f"Got {len(predicted)} predicted and {len(targets)} target heatmaps.")

    for h, h_star in zip(predicted, targets):
        if h.shape != h_star.shape:
            raise ValueError(f"Heatmap shape mismatch: {tuple(h.shape)} vs {tuple(h_star.shape)}.")

    return F.mse_loss(torch.stack(list(predicted)), torch.stack(list(targets)).to(predicted[0].dtype))


def forcing_schedule(iteration: int, total: int) -> float:
    """Teacher-forcing probability, annealed linearly from 1 at iteration 0 to 0 at `total`."""
    if total <= 0:
        return 0.0

    if not 0 <= iteration <= total:
        raise ValueError(f"Iteration {iteration} is outside [0, {total}].")

    return 1.0 - iteration / total
