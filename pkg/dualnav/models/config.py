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
Agent model config
"""

from dataclasses import dataclass, field

from ..envs.instruction import VOCAB_SIZE


EXPERT_MODES = ("topo", "grid", "hybrid")


@dataclass
class ModelConfig:
    hidden_dim: int = 32
    """D, shared by instruction, node and cell features"""
    num_heads: int = 2
    num_layers: int = 2
    """layers of each cross-modal transformer"""
    num_text_layers: int = 1
    """instruction self-attention layers"""
    ffn_dim: int = 64
    max_instruction_length: int = 24
    num_hop_buckets: int = 5
    """graph-aware bias buckets, hops 0, 1, 2, 3 and >= 4"""
    num_distance_buckets: int = 24
    distance_bucket: float = 0.5
    """relative-position distance bucket width, meters"""
    heading_bucket: float = 30.0
    """relative-position heading bucket width, degrees"""
    max_steps: int = 16
    """size of the time-step embedding table"""
    heatmap_ffn_dim: int = 64
    use_map_fusion: bool = True
    """if False, Cell2Node, GF, Node2Cell and MF are bypassed"""
    expert: str = "hybrid"
    """action expert: `topo` (graph scores only), `grid` (grid scores only) or `hybrid`"""
    init_std: float = 0.02
    dtype: str = "fp32"
    """parameter precision, `fp32` or `fp64`"""
    # below are auto keys
    vocab_size: int = field(default=VOCAB_SIZE, init=False)
    grid_u: int = field(default=11, init=False)
    grid_v: int = field(default=11, init=False)
    upsample_m: int = field(default=5, init=False)
    upsample_n: int = field(default=5, init=False)

    def post_init(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(f"hidden_dim {self.hidden_dim} must be divisible by num_heads {self.num_heads}.")

        if self.expert not in EXPERT_MODES:
            raise NotImplementedError(f"Unknown expert mode: {self.expert}.")
