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
Instruction encoder and the two cross-modal transformers: the topology transformer over graph nodes and
the grid transformer over map cells.
"""

from typing import Sequence, Union

import torch
from einops import rearrange
from torch import nn

from ..envs.instruction import UNK_ID
from .attention import AttentionWeights, CrossModalLayer, stack_forward
from .config import ModelConfig


def _layers(config: ModelConfig, num_layers: int, cross_attention: bool = True) -> nn.ModuleList:
    return nn.ModuleList(
        CrossModalLayer(config.hidden_dim, config.num_heads, config.ffn_dim, cross_attention=cross_attention)
        for _ in range(num_layers)
    )


class InstructionEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.vocab_size = config.vocab_size
        self.max_length = config.max_instruction_length
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_dim)
        self.position_embedding = nn.Embedding(config.max_instruction_length, config.hidden_dim)
        self.layers = _layers(config, config.num_text_layers, cross_attention=False)

    def to_ids(self, tokens: Union[Sequence[int], torch.Tensor]) -> torch.Tensor:
        ids = torch.as_tensor(tokens, dtype=torch.long, device=self.token_embedding.weight.device).reshape(-1)
        if ids.numel() == 0:
            raise ValueError("Instruction must contain at least one token.")

        if ids.numel() > self.max_length:
            raise ValueError(f"Instruction of {ids.numel()} tokens exceeds the maximum of {self.max_length}.")

        return torch.where((ids >= 0) & (ids < self.vocab_size), ids, torch.full_like(ids, UNK_ID))

    def embed(self, tokens: Union[Sequence[int], torch.Tensor]) -> torch.Tensor:
        """Token plus position lookup, (L, D)."""
        ids = self.to_ids(tokens)
        positions = torch.arange(ids.numel(), device=ids.device)
        return self.token_embedding(ids) + self.position_embedding(positions)

    def forward(self, tokens: Union[Sequence[int], torch.Tensor]) -> tuple[torch.Tensor, list[AttentionWeights]]:
        return stack_forward(self.layers, self.embed(tokens))


class NodeEmbedding(nn.Module):
    """Node feature plus learned kind, relative distance, relative heading and time-step embeddings."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.kind_embedding = nn.Embedding(3, config.hidden_dim)
        self.distance_embedding = nn.Embedding(config.num_distance_buckets, config.hidden_dim)
        self.heading_embedding = nn.Embedding(int(round(360.0 / config.heading_bucket)), config.hidden_dim)
        self.time_embedding = nn.Embedding(config.max_steps, config.hidden_dim)

    def forward(
        self,
        features: torch.Tensor,
        kind: torch.Tensor,
        distance: torch.Tensor,
        heading: torch.Tensor,
        time: torch.Tensor,
    ) -> torch.Tensor:
        return (
            features
            + self.kind_embedding(kind)
            + self.distance_embedding(distance)
            + self.heading_embedding(heading)
            + self.time_embedding(time)
        )


class TopologyEncoder(nn.Module):
    """Graph-aware self-attention over nodes, biased per head by the hop-distance bucket of every pair."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.num_heads = config.num_heads
        self.node_embedding = NodeEmbedding(config)
        self.hop_bias = nn.ModuleList(
            nn.Embedding(config.num_hop_buckets, config.num_heads) for _ in range(config.num_layers)
        )
        self.layers = _layers(config, config.num_layers)

    def forward(
        self, embeddings: torch.Tensor, hops: torch.Tensor, instruction: torch.Tensor
    ) -> tuple[torch.Tensor, list[AttentionWeights]]:
        """embeddings (N, D) from `node_embedding`, hops (N, N) bucket ids, instruction (L, D)."""
        biases = [rearrange(bias(hops), "i j h -> h i j") for bias in self.hop_bias]
        return stack_forward(self.layers, embeddings, instruction, biases)


class GridEncoder(nn.Module):
    """Self-attention over flattened cells with a learned per-cell positional embedding."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.grid_u, self.grid_v = config.grid_u, config.grid_v
        self.cell_position = nn.Parameter(torch.zeros(config.grid_u * config.grid_v, config.hidden_dim))
        self.layers = _layers(config, config.num_layers)

    def cell_embedding(self, grid: torch.Tensor) -> torch.Tensor:
        if tuple(grid.shape[:2]) != (self.grid_u, self.grid_v):
            raise ValueError(f"Grid of shape {tuple(grid.shape[:2])} does not match {(self.grid_u, self.grid_v)}.")

        return rearrange(grid, "u v d -> (u v) d") + self.cell_position

    def forward(self, grid: torch.Tensor, instruction: torch.Tensor) -> tuple[torch.Tensor, list[AttentionWeights]]:
        """(U, V, D) -> (U, V, D)"""
        hidden, weights = stack_forward(self.layers, self.cell_embedding(grid), instruction)
        return rearrange(hidden, "(u v) d -> u v d", u=self.grid_u), weights
