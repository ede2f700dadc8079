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
Hybrid action prediction: graph scores over every navigable target, grid scores over the current
candidates, and a learned weight gamma mixing the two.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from ..mapping.topo_mapper import STOP_NODE_ID


@dataclass
class ActionScores:
    target_ids: list[int]
    """stop node followed by every observed node, ascending"""
    graph_scores: torch.Tensor
    """(T,) aligned with target_ids"""
    grid_ids: list[int]
    """current candidates whose node projects inside the grid"""
    grid_scores: torch.Tensor
    """(C,) aligned with grid_ids"""
    gamma: torch.Tensor
    """scalar in [0, 1]"""

    def index_of(self, node_id: int) -> int:
        if node_id not in self.target_ids:
            raise ValueError(f"Node {node_id} is not an action target {self.target_ids}.")

        return self.target_ids.index(node_id)


class ActionHeads(nn.Module):
    def __init__(self, hidden_dim: int):
        super().__init__()
        self.graph_head = nn.Linear(hidden_dim, 1)
        self.grid_head = nn.Linear(hidden_dim, 1)
        self.gamma_head = nn.Linear(2 * hidden_dim, 1)


def predict_actions(
    aligned_graph: torch.Tensor,
    node_ids: Sequence[int],
    fused_grid: torch.Tensor,
    target_ids: Sequence[int],
    candidate_cells: dict[int, Optional[tuple[int, int]]],
    heads: ActionHeads,
) -> ActionScores:
    """`candidate_cells` maps each current candidate to its projected cell, None when off the grid."""
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    target_rows = torch.as_tensor([index[node_id] for node_id in target_ids], dtype=torch.long)
    graph_scores = heads.graph_head(aligned_graph[target_rows]).squeeze(-1)

    grid_ids = [node_id for node_id, cell in candidate_cells.items() if cell is not None]
    if grid_ids:
        cells = torch.as_tensor([candidate_cells[node_id] for node_id in grid_ids], dtype=torch.long)
        grid_scores = heads.grid_head(fused_grid[cells[:, 0], cells[:, 1]]).squeeze(-1)
    else:
        grid_scores = fused_grid.new_zeros(0)

    pooled = torch.cat([aligned_graph[index[STOP_NODE_ID]], fused_grid.mean(dim=(0, 1))], dim=-1)
    gamma = torch.sigmoid(heads.gamma_head(pooled)).squeeze(-1)
    return ActionScores(
        target_ids=list(target_ids),
        graph_scores=graph_scores,
        grid_ids=grid_ids,
        grid_scores=grid_scores,
        gamma=gamma,
    )


def effective_gamma(scores: ActionScores, expert: str = "hybrid") -> torch.Tensor:
    if expert == "topo":
        return torch.ones_like(scores.gamma)
    elif expert == "grid":
        return torch.zeros_like(scores.gamma)
    elif expert == "hybrid":
        return scores.gamma
    else:
        raise NotImplementedError(f"Unknown expert mode: {expert}.")


def fused_logits(scores: ActionScores, expert: str = "hybrid") -> torch.Tensor:
    """(T,) gamma * graph + (1 - gamma) * grid on current candidates with a cell, graph score elsewhere."""
    if not scores.grid_ids:
        return scores.graph_scores

    gamma = effective_gamma(scores, expert)
    rows = torch.as_tensor([scores.index_of(node_id) for node_id in scores.grid_ids], dtype=torch.long)
    mixed = gamma * scores.graph_scores[rows] + (1.0 - gamma) * scores.grid_scores
    return scores.graph_scores.index_put((rows,), mixed)


def fuse_action(scores: ActionScores, current_candidates: Sequence[int], expert: str = "hybrid") -> int:
    """Graph argmax when it is not a current candidate; otherwise the fused argmax over the current
    candidates. Ties go to the lowest node id.
    """
    graph_scores = scores.graph_scores.detach().double().cpu().numpy()
    graph_choice = scores.target_ids[int(np.argmax(graph_scores))]
    current = sorted(node_id for node_id in current_candidates if node_id in scores.target_ids)
    if graph_choice not in current:
        return graph_choice

    fused = fused_logits(scores, expert).detach().double().cpu().numpy()
    candidate_scores = np.array([fused[scores.index_of(node_id)] for node_id in current])
    return current[int(np.argmax(candidate_scores))]


def sample_action(scores: ActionScores, generator: torch.Generator, expert: str = "hybrid") -> int:
    """Draw a target from the softmax over the fused logits."""
    probs = torch.softmax(fused_logits(scores, expert).detach().double().cpu(), dim=-1)
    return scores.target_ids[int(torch.multinomial(probs, 1, generator=generator).item())]
