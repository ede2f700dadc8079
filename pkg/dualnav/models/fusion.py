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
Bidirectional cross-map fusion. Cell2Node moves grid evidence into graph nodes, GF fuses it with the
node features, and Node2Cell broadcasts aligned node features back onto the grid through per-node
discount matrices before MF fuses them with the encoded cells.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from numpy.typing import NDArray
from torch import nn

from ..mapping.geometry import GridSpec, Pose, world_to_cell, world_to_ego
from ..mapping.grid_mapper import GridMap
from ..mapping.topo_mapper import NodeKind, TopoGraph


logger = logging.getLogger(__name__)


def discount_matrix(node_cell: tuple[int, int], spec: GridSpec) -> NDArray:
    """(U, V) weights (d_max - d) / (d_max - d_min) of the cell-unit distance d to the node's cell."""
    u, v = node_cell
    if not (0 <= u < spec.U and 0 <= v < spec.V):
        raise ValueError(f"Node cell {node_cell} is outside the {spec.U}x{spec.V} grid.")

    uu, vv = np.meshgrid(np.arange(spec.U), np.arange(spec.V), indexing="ij")
    distances = np.hypot(uu - u, vv - v)
    d_min, d_max = distances.min(), distances.max()
    if d_max == d_min:
        return np.ones((spec.U, spec.V), dtype=np.float64)

    return (d_max - distances) / (d_max - d_min)


def project_to_cell(position: Sequence[float], pose: Pose, spec: GridSpec) -> Optional[tuple[int, int]]:
    return world_to_cell(world_to_ego(np.asarray(position, dtype=np.float64), pose)[0], spec)


@dataclass
class NodeFeatures:
    """Per-node intermediate features in `node_ids` order."""

    node_ids: list[int]
    features: NDArray
    """(N, D)"""
    empty_grid: bool = False
    num_outside: int = 0
    """observed nodes outside the grid footprint"""


def cell2node(grid: GridMap, graph: TopoGraph) -> NodeFeatures:
    """Current visited node: mean of the occupied cells. Observed nodes: the feature of their cell.
    Every other node keeps a zero feature.
    """
    node_ids = graph.node_ids()
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    features = np.zeros((len(node_ids), grid.feature_dim), dtype=np.float64)
    empty_grid = grid.is_empty()
    if empty_grid:
        logger.warning("Grid map is empty, Cell2Node features stay zero.")
    elif graph.current_id is not None:
        features[index[graph.current_id]] = grid.features[grid.occupied].mean(axis=0)

    num_outside = 0
    for node_id in graph.ids_of(NodeKind.OBSERVED):
        cell = project_to_cell(graph.nodes[node_id].position, grid.origin_pose, grid.spec)
        if cell is None:
            num_outside += 1
        else:
            features[index[node_id]] = grid.features[cell]

    return NodeFeatures(node_ids=node_ids, features=features, empty_grid=empty_grid, num_outside=num_outside)


def _init_identity_half(linear: nn.Linear, hidden_dim: int, std: float) -> None:
    """Weight [noise | I], zero bias: the fused output starts close to the second input."""
    with torch.no_grad():
        nn.init.normal_(linear.weight, std=std)
        linear.weight[:, hidden_dim:] = torch.eye(hidden_dim, dtype=linear.weight.dtype)
        linear.bias.zero_()


class FusionHeads(nn.Module):
    def __init__(self, hidden_dim: int, init_std: float = 0.02):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.graph_fusion = nn.Linear(2 * hidden_dim, hidden_dim)
        self.map_fusion = nn.Linear(2 * hidden_dim, hidden_dim)
        self.reset_parameters(init_std)

    def reset_parameters(self, init_std: float = 0.02) -> None:
        _init_identity_half(self.graph_fusion, self.hidden_dim, init_std)
        _init_identity_half(self.map_fusion, self.hidden_dim, init_std)


def graph_fuse(
    g_prime: torch.Tensor,
    g: torch.Tensor,
    heads: FusionHeads,
    prime_ids: Optional[Sequence[int]] = None,
    node_ids: Optional[Sequence[int]] = None,
) -> torch.Tensor:
    """GF([g'; g]) per node."""
    if prime_ids is not None and node_ids is not None and list(prime_ids) != list(node_ids):
        raise ValueError(f"Cell2Node features cover nodes {list(prime_ids)}, graph has {list(node_ids)}.")

    if g_prime.shape != g.shape:
        raise ValueError(f"Feature shapes differ: {tuple(g_prime.shape)} vs {tuple(g.shape)}.")

    return heads.graph_fusion(torch.cat([g_prime, g], dim=-1))


def broadcast_field(
    node_features: torch.Tensor, node_cells: Sequence[Optional[tuple[int, int]]], spec: GridSpec
) -> tuple[torch.Tensor, int]:
    """B(u, v) = sum_i D_i(u, v) * f_i over nodes with a cell. Returns (B (U, V, D), excluded count)."""
    kept = [i for i, cell in enumerate(node_cells) if cell is not None]
    num_excluded = len(node_cells) - len(kept)
    if num_excluded:
        logger.warning(f"{num_excluded} neighbourhood node(s) project outside the grid and are excluded.")

    field = node_features.new_zeros((spec.U, spec.V, node_features.shape[-1]))
    if kept:
        discounts = np.stack([discount_matrix(node_cells[i], spec) for i in kept], axis=0)
        discounts = torch.as_tensor(discounts, dtype=node_features.dtype, device=node_features.device)
        field = torch.einsum("kuv,kd->uvd", discounts, node_features[kept])

    return field, num_excluded


def node2cell(
    node_features: torch.Tensor,
    node_cells: Sequence[Optional[tuple[int, int]]],
    m_tilde: torch.Tensor,
    heads: FusionHeads,
    spec: GridSpec,
) -> tuple[torch.Tensor, int]:
    """MF([B; M~]) per cell. Returns (fused grid (U, V, D), excluded node count)."""
    field, num_excluded = broadcast_field(node_features, node_cells, spec)
    return heads.map_fusion(torch.cat([field, m_tilde], dim=-1)), num_excluded
