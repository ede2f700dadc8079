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
Pre-norm attention layers shared by the instruction encoder and the two cross-modal transformers.
"""

from typing import NamedTuple, Optional

import torch
from torch import nn


class AttentionWeights(NamedTuple):
    self_attn: torch.Tensor
    """(heads, L, L)"""
    cross_attn: Optional[torch.Tensor]
    """(heads, L, S) or None for layers without cross-attention"""


class CrossModalLayer(nn.Module):
    """Self-attention with an optional additive per-head bias, cross-attention to a context sequence,
    then a feed-forward block. Every sub-block is a pre-norm residual, so zeroed output projections
    make the layer the identity.
    """

    def __init__(self, hidden_dim: int, num_heads: int, ffn_dim: int, cross_attention: bool = True):
        super().__init__()
        self.num_heads = num_heads
        self.self_norm = nn.LayerNorm(hidden_dim)
        self.self_attn = nn.MultiheadAttention(hidden_dim, num_heads, dropout=0.0, batch_first=True)
        if cross_attention:
            self.cross_norm = nn.LayerNorm(hidden_dim)
            self.cross_attn = nn.MultiheadAttention(hidden_dim, num_heads, dropout=0.0, batch_first=True)
        else:
            self.cross_norm = None
            self.cross_attn = None

        self.ffn_norm = nn.LayerNorm(hidden_dim)
        self.ffn = nn.Sequential(nn.Linear(hidden_dim, ffn_dim), nn.GELU(), nn.Linear(ffn_dim, hidden_dim))

    def forward(
        self,
        hidden: torch.Tensor,
        context: Optional[torch.Tensor] = None,
        self_bias: Optional[torch.Tensor] = None,
    ) -> tuple[torch.Tensor, AttentionWeights]:
        """hidden (L, D), context (S, D), self_bias (heads, L, L) added to the attention logits."""
        x = hidden.unsqueeze(0)
        normed = self.self_norm(x)
        attn_out, self_weights = self.self_attn(
            normed, normed, normed, attn_mask=self_bias, need_weights=True, average_attn_weights=False
        )
        x = x + attn_out

        cross_weights = None
        if self.cross_attn is not None:
            if context is None:
                raise ValueError("A cross-attention layer needs a context sequence.")

            normed = self.cross_norm(x)
            ctx = context.unsqueeze(0)
            attn_out, cross_weights = self.cross_attn(
                normed, ctx, ctx, need_weights=True, average_attn_weights=False
            )
            x = x + attn_out
            cross_weights = cross_weights[0]

        x = x + self.ffn(self.ffn_norm(x))
        return x[0], AttentionWeights(self_attn=self_weights[0], cross_attn=cross_weights)

    def zero_residual_branches(self) -> None:
        """Zero every output projection so the layer passes its input through unchanged."""
        with torch.no_grad():
            for attn in (self.self_attn, self.cross_attn):
                if attn is not None:
                    attn.out_proj.weight.zero_()
                    attn.out_proj.bias.zero_()

            self.ffn[-1].weight.zero_()
            self.ffn[-1].bias.zero_()


def stack_forward(
    layers: nn.ModuleList,
    hidden: torch.Tensor,
    context: Optional[torch.Tensor] = None,
    biases: Optional[list[torch.Tensor]] = None,
) -> tuple[torch.Tensor, list[AttentionWeights]]:
    weights = []
    for index, layer in enumerate(layers):
        hidden, layer_weights = layer(hidden, context, None if biases is None else biases[index])
        weights.append(layer_weights)

    return hidden, weights
