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
Contain small torch utilities
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .model_utils import parameter_groups


def log_probs_from_logits(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Compute log probs on the label ids given logits.

    Args:
        logits (torch.Tensor): shape (..., num_classes)
        labels (torch.Tensor): shape (...)

    Returns:
        torch.Tensor: log probs of the labels, shape (...)
    """
    batch_dim = logits.shape[:-1]
    num_classes = logits.shape[-1]
    logits = logits.contiguous().view(-1, num_classes)
    labels = labels.contiguous().view(-1)
    output = -F.cross_entropy(logits, labels, reduction="none")
    return output.view(*batch_dim)


def grad_norms(model: nn.Module) -> dict[str, float]:
    """L2 norm of the current gradients per top-level parameter group. Groups without gradients report 0."""
    params = dict(model.named_parameters())
    norms = {}
    for group, names in parameter_groups(model).items():
        total = 0.0
        for name in names:
            if params[name].grad is not None:
                total += params[name].grad.detach().double().pow(2).sum().item()

        norms[group] = float(np.sqrt(total))

    return norms


@dataclass
class GradCheckResult:
    max_relative_error: float
    worst_coordinate: Optional[tuple[str, int]]
    """(parameter name, flat index) with the largest error"""
    non_finite: list[tuple[str, int]] = field(default_factory=list)
    """coordinates whose analytic or numeric gradient is not finite"""
    num_samples: int = 0

    def passed(self, tolerance: float) -> bool:
        return not self.non_finite and self.max_relative_error < tolerance


def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    params: dict[str, torch.Tensor],
    num_samples: int = 20,
    rng: Optional[np.random.Generator] = None,
    step: float = 1e-4,
    abs_floor: float = 1e-6,
) -> GradCheckResult:
    """Compare autograd gradients against central differences at randomly sampled coordinates.

    The relative error of a coordinate is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
    Run the loss in float64 for a meaningful comparison at `step` = 1e-4.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    names = list(params.keys())
    tensors = [params[name] for name in names]
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, tensors, allow_unused=True)
    analytic = [torch.zeros_like(t) if g is None else g.detach() for t, g in zip(tensors, analytic)]

    sizes = np.array([t.numel() for t in tensors], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    num_samples = min(num_samples, int(offsets[-1]))
    coordinates = rng.choice(int(offsets[-1]), size=num_samples, replace=False)

    result = GradCheckResult(max_relative_error=0.0, worst_coordinate=None, num_samples=num_samples)
    with torch.no_grad():
        for coordinate in coordinates:
            param_index = int(np.searchsorted(offsets, coordinate, side="right") - 1)
            flat_index = int(coordinate - offsets[param_index])
            flat_param = tensors[param_index].data.view(-1)
            original = flat_param[flat_index].item()

            flat_param[flat_index] = original + step
            loss_plus = loss_fn().item()
            flat_param[flat_index] = original - step
            loss_minus = loss_fn().item()
            flat_param[flat_index] = original

            numeric = (loss_plus - loss_minus) / (2.0 * step)
            exact = analytic[param_index].reshape(-1)[flat_index].item()
            key = (names[param_index], flat_index)
            if not (np.isfinite(numeric) and np.isfinite(exact)):
                result.non_finite.append(key)
                result.max_relative_error = float("inf")
                result.worst_coordinate = key
                continue

            error = abs(exact - numeric) / max(abs(exact), abs(numeric), abs_floor)
            if error > result.max_relative_error:
                result.max_relative_error = error
                result.worst_coordinate = key

    return result
