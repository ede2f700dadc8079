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
The dual-map agent: instruction encoding, Cell2Node and GF, the topology and grid transformers,
Node2Cell and MF, and the heatmap, action and masked-word heads on top.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from numpy.typing import NDArray
from torch import nn

from ..mapping.grid_mapper import GridMap
from ..mapping.topo_mapper import STOP_NODE_ID, NodeKind, TopoGraph
from ..utils.torch_dtypes import PrecisionType
from .action_heads import ActionHeads, ActionScores, predict_actions
from .attention import AttentionWeights, CrossModalLayer
from .config import ModelConfig
from .encoder import GridEncoder, InstructionEncoder, TopologyEncoder
from .fusion import FusionHeads, cell2node, graph_fuse, node2cell, project_to_cell
from .heatmap import HeatmapHead


def action_targets(graph: TopoGraph) -> list[int]:
    """The stop node followed by every observed node, ascending."""
    return [STOP_NODE_ID] + graph.observed_ids()


@dataclass
class MapEncoding:
    instruction: torch.Tensor
    """(L, D)"""
    node_ids: list[int]
    aligned_graph: torch.Tensor
    """(N, D) topology transformer output"""
    fused_grid: torch.Tensor
    """(U, V, D) after Node2Cell and MF"""
    candidate_cells: dict[int, Optional[tuple[int, int]]]
    empty_grid: bool = False
    num_outside: int = 0
    num_excluded: int = 0
    attention: dict[str, list[AttentionWeights]] = field(default_factory=dict)


class DualMapAgent(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.instruction_encoder = InstructionEncoder(config)
        self.topology_encoder = TopologyEncoder(config)
        self.grid_encoder = GridEncoder(config)
        self.fusion = FusionHeads(config.hidden_dim, config.init_std)
        self.heatmap_head = HeatmapHead(
            config.hidden_dim, config.heatmap_ffn_dim, config.upsample_m, config.upsample_n
        )
        self.action_heads = ActionHeads(config.hidden_dim)
        self.mlm_layer = CrossModalLayer(config.hidden_dim, config.num_heads, config.ffn_dim)
        self.mlm_norm = nn.LayerNorm(config.hidden_dim)
        self.mlm_head = nn.Linear(config.hidden_dim, config.vocab_size)
        self.reset_parameters()
        self.to(PrecisionType.to_dtype(config.dtype))

    def reset_parameters(self) -> None:
        std = self.config.init_std
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.normal_(module.weight, std=std)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.Embedding):
                nn.init.normal_(module.weight, std=std)

        nn.init.normal_(self.grid_encoder.cell_position, std=std)
        self.fusion.reset_parameters(std)

    @property
    def dtype(self) -> torch.dtype:
        return self.mlm_head.weight.dtype

    def _tensor(self, array: NDArray) -> torch.Tensor:
        return torch.as_tensor(np.asarray(array), dtype=self.dtype, device=self.mlm_head.weight.device)

    def encode(
        self, tokens: Sequence[int], graph: TopoGraph, grid: GridMap, neighborhood_radius: float
    ) -> MapEncoding:
        config = self.config
        instruction, text_weights = self.instruction_encoder(tokens)
        node_ids = graph.node_ids()
        node_features = self._tensor(graph.features())
        empty_grid, num_outside = False, 0
        if config.use_map_fusion:
            intermediate = cell2node(grid, graph)
            empty_grid, num_outside = intermediate.empty_grid, intermediate.num_outside
            node_features = graph_fuse(
                self._tensor(intermediate.features), node_features, self.fusion, intermediate.node_ids, node_ids
            )

        context = graph.context_ids(
            distance_bucket=config.distance_bucket,
            num_distance_buckets=config.num_distance_buckets,
            heading_bucket=config.heading_bucket,
            max_steps=config.max_steps,
        )
        embeddings = self.topology_encoder.node_embedding(
            node_features,
            torch.as_tensor(context.kind),
            torch.as_tensor(context.distance),
            torch.as_tensor(context.heading),
            torch.as_tensor(context.time),
        )
        hops = torch.as_tensor(graph.hop_distances(max_hops=config.num_hop_buckets - 1))
        aligned_graph, graph_weights = self.topology_encoder(embeddings, hops, instruction)
        m_tilde, grid_weights = self.grid_encoder(self._tensor(grid.features), instruction)

        num_excluded = 0
        fused_grid = m_tilde
        if config.use_map_fusion and graph.current_id is not None:
            neighborhood = graph.neighborhood(neighborhood_radius)
            rows = [node_ids.index(node_id) for node_id in neighborhood]
            cells = [
                project_to_cell(graph.nodes[node_id].position, grid.origin_pose, grid.spec) for node_id in neighborhood
            ]
            fused_grid, num_excluded = node2cell(aligned_graph[rows], cells, m_tilde, self.fusion, grid.spec)

        candidate_cells = {
            node_id: project_to_cell(graph.nodes[node_id].position, grid.origin_pose, grid.spec)
            for node_id in graph.current_candidates
            if graph.nodes[node_id].kind == NodeKind.OBSERVED
        }
        return MapEncoding(
            instruction=instruction,
            node_ids=node_ids,
            aligned_graph=aligned_graph,
            fused_grid=fused_grid,
            candidate_cells=candidate_cells,
            empty_grid=empty_grid,
            num_outside=num_outside,
            num_excluded=num_excluded,
            attention={"text": text_weights, "graph": graph_weights, "grid": grid_weights},
        )

    def heatmap(self, encoding: MapEncoding) -> torch.Tensor:
        """(mU, nV) predicted guidance heatmap."""
        return self.heatmap_head(encoding.fused_grid)

    def actions(self, encoding: MapEncoding, graph: TopoGraph) -> ActionScores:
        return predict_actions(
            encoding.aligned_graph,
            encoding.node_ids,
            encoding.fused_grid,
            action_targets(graph),
            encoding.candidate_cells,
            self.action_heads,
        )

    def mlm_logits(self, encoding: MapEncoding) -> torch.Tensor:
        """(L, vocab) masked-word logits, each token attending to the aligned nodes and fused cells."""
        maps = torch.cat([encoding.aligned_graph, encoding.fused_grid.reshape(-1, encoding.fused_grid.shape[-1])])
        hidden, _ = self.mlm_layer(encoding.instruction, maps)
        return self.mlm_head(self.mlm_norm(hidden))
