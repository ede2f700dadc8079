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
Global topological memory of visited and observed waypoints plus the virtual stop node.

Node ids are stable integers: the stop node is 0, other nodes are numbered in insertion order. Edges
live in a `networkx.Graph` with the Euclidean distance between their endpoints as `distance`.
"""

import copy
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, NamedTuple, Optional, Sequence

import networkx as nx
import numpy as np
from numpy.typing import NDArray

from ..utils.py_functional import stable_hash
from .geometry import Pose, normalize_heading, world_to_ego


STOP_NODE_ID = 0


class NodeKind(str, Enum):
    VIRTUAL_STOP = "virtual_stop"
    VISITED = "visited"
    OBSERVED = "observed"


NODE_KIND_INDEX = {NodeKind.VIRTUAL_STOP: 0, NodeKind.VISITED: 1, NodeKind.OBSERVED: 2}


class Candidate(NamedTuple):
    position: tuple[float, float]
    """world meters"""
    view_index: int
    feature: NDArray


@dataclass
class TopoNode:
    id: int
    kind: NodeKind
    position: NDArray
    feature: NDArray
    last_step: int
    view_index: Optional[int] = None
    num_candidates: int = 0
    """candidate count of the step that last observed this node"""

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "position": [float(x) for x in self.position],
            "last_step": self.last_step,
            "view_index": self.view_index,
        }


@dataclass
class ContextIds:
    """Per-node integer ids for the learned context embeddings, aligned with `TopoGraph.node_ids()`."""

    kind: NDArray
    distance: NDArray
    heading: NDArray
    time: NDArray


@dataclass
class TopoGraph:
    feature_dim: int
    dedup_radius: float = 0.5
    graph: nx.Graph = field(default_factory=nx.Graph)
    nodes: dict[int, TopoNode] = field(default_factory=dict)
    step: int = -1
    pose: Optional[Pose] = None
    current_id: Optional[int] = None
    current_candidates: list[int] = field(default_factory=list)
    """observed nodes touched by the latest update, in candidate order"""
    next_id: int = 1

    def __post_init__(self):
        if STOP_NODE_ID not in self.nodes:
            self.nodes[STOP_NODE_ID] = TopoNode(
                id=STOP_NODE_ID,
                kind=NodeKind.VIRTUAL_STOP,
                position=np.zeros(2, dtype=np.float64),
                feature=np.zeros(self.feature_dim, dtype=np.float64),
                last_step=0,
            )
            self.graph.add_node(STOP_NODE_ID)

    def __len__(self) -> int:
        return len(self.nodes)

    def node_ids(self) -> list[int]:
        return sorted(self.nodes.keys())

    def ids_of(self, kind: NodeKind) -> list[int]:
        return sorted(node_id for node_id, node in self.nodes.items() if node.kind == kind)

    def visited_ids(self) -> list[int]:
        return self.ids_of(NodeKind.VISITED)

    def observed_ids(self) -> list[int]:
        return self.ids_of(NodeKind.OBSERVED)

    def features(self) -> NDArray:
        return np.stack([self.nodes[node_id].feature for node_id in self.node_ids()], axis=0)

    def positions(self) -> NDArray:
        return np.stack([self.nodes[node_id].position for node_id in self.node_ids()], axis=0)

    def copy(self) -> "TopoGraph":
        return copy.deepcopy(self)

    def _add_edge(self, a: int, b: int) -> None:
        distance = float(np.linalg.norm(self.nodes[a].position - self.nodes[b].position))
        self.graph.add_edge(a, b, distance=distance)

    def _insert(self, kind: NodeKind, position: Sequence[float], feature: NDArray, t: int, **kwargs) -> int:
        node_id = self.next_id
        self.next_id += 1
        self.nodes[node_id] = TopoNode(
            id=node_id,
            kind=kind,
            position=np.asarray(position, dtype=np.float64).copy(),
            feature=np.asarray(feature, dtype=np.float64).copy(),
            last_step=t,
            **kwargs,
        )
        self.graph.add_node(node_id)
        return node_id

    def find_nearby(self, position: Sequence[float]) -> Optional[int]:
        """Closest non-stop node strictly within the dedup radius, lowest id on ties."""
        best_id, best_distance = None, self.dedup_radius
        for node_id in self.node_ids():
            if node_id == STOP_NODE_ID:
                continue

            distance = math.hypot(
                self.nodes[node_id].position[0] - position[0], self.nodes[node_id].position[1] - position[1]
            )
            if distance < best_distance:
                best_id, best_distance = node_id, distance

        return best_id

    def update(self, pose: Pose, candidates: Sequence[Candidate], pano_mean_feature: NDArray, t: int) -> "TopoGraph":
        """Insert or refresh the visited node at `pose` and merge the step's candidates. Mutates in place."""
        if t <= self.step:
            raise ValueError(f"Graph updates need strictly increasing steps, got {t} after {self.step}.")

        previous_id = self.current_id
        current_id = self.find_nearby(pose.position)
        if current_id is None:
            current_id = self._insert(NodeKind.VISITED, pose.position, pano_mean_feature, t)
        else:
            node = self.nodes[current_id]
            node.kind = NodeKind.VISITED
            node.feature = np.asarray(pano_mean_feature, dtype=np.float64).copy()
            node.last_step = t
            node.view_index = None

        if previous_id is not None and previous_id != current_id and previous_id in self.nodes:
            self._add_edge(previous_id, current_id)

        self._add_edge(STOP_NODE_ID, current_id)
        self.current_id = current_id
        self.current_candidates = []
        for candidate in candidates:
            match_id = self.find_nearby(candidate.position)
            if match_id == current_id:
                continue

            if match_id is not None and self.nodes[match_id].kind == NodeKind.VISITED:
                self._add_edge(current_id, match_id)
                continue

            if match_id is None:
                match_id = self._insert(
                    NodeKind.OBSERVED,
                    candidate.position,
                    candidate.feature,
                    t,
                    view_index=int(candidate.view_index),
                    num_candidates=len(candidates),
                )
            else:
                node = self.nodes[match_id]
                node.feature = np.asarray(candidate.feature, dtype=np.float64).copy()
                node.view_index = int(candidate.view_index)
                node.last_step = t
                node.num_candidates = len(candidates)
                self.graph.remove_edges_from(list(self.graph.edges(match_id)))

            self._add_edge(current_id, match_id)
            if match_id not in self.current_candidates:
                self.current_candidates.append(match_id)

        self.step = t
        self.pose = pose
        return self

    def remove_visited(self, node_ids: Sequence[int]) -> list[int]:
        """Delete visited nodes and the observed nodes left without an observer. Returns every removed id."""
        removed = []
        for node_id in node_ids:
            if node_id == self.current_id or self.nodes[node_id].kind != NodeKind.VISITED:
                raise ValueError(f"Only non-current visited nodes can be removed, got {node_id}.")

            orphans = [
                neighbor
                for neighbor in self.graph.neighbors(node_id)
                if self.nodes[neighbor].kind == NodeKind.OBSERVED and self.graph.degree(neighbor) == 1
            ]
            for removed_id in [node_id] + orphans:
                self.graph.remove_node(removed_id)
                del self.nodes[removed_id]
                removed.append(removed_id)

        self.current_candidates = [node_id for node_id in self.current_candidates if node_id in self.nodes]
        return removed

    def neighborhood(self, radius: float) -> list[int]:
        """Visited nodes strictly closer than `radius` to the current visited node."""
        if radius <= 0:
            raise ValueError(f"Neighborhood radius must be positive, got {radius}.")

        if self.current_id is None:
            return []

        center = self.nodes[self.current_id].position
        return [
            node_id
            for node_id in self.visited_ids()
            if float(np.linalg.norm(self.nodes[node_id].position - center)) < radius
        ]

    def hop_distances(self, max_hops: int = 4) -> NDArray:
        """Pairwise hop counts in `node_ids()` order, capped at `max_hops`; unreachable pairs get `max_hops`."""
        node_ids = self.node_ids()
        index = {node_id: i for i, node_id in enumerate(node_ids)}
        hops = np.full((len(node_ids), len(node_ids)), max_hops, dtype=np.int64)
        for source, lengths in nx.all_pairs_shortest_path_length(self.graph, cutoff=max_hops):
            for target, length in lengths.items():
                hops[index[source], index[target]] = min(length, max_hops)

        return hops

    def context_ids(
        self,
        distance_bucket: float = 0.5,
        num_distance_buckets: int = 24,
        heading_bucket: float = 30.0,
        max_steps: int = 16,
    ) -> ContextIds:
        """Relative-position bucket ids against the latest pose plus capped time-step ids."""
        node_ids = self.node_ids()
        pose = self.pose or Pose(0.0, 0.0, 0.0)
        ego = world_to_ego(self.positions(), pose)
        distances = np.linalg.norm(ego, axis=-1)
        bearings = np.degrees(np.arctan2(ego[:, 1], ego[:, 0]))
        heading_ids = np.array(
            [int(normalize_heading(b) // heading_bucket) % int(round(360.0 / heading_bucket)) for b in bearings]
        )
        distance_ids = np.minimum((distances / distance_bucket).astype(np.int64), num_distance_buckets - 1)
        # the stop node has no location: bucket 0 for both
        stop_mask = np.array([node_id == STOP_NODE_ID for node_id in node_ids])
        distance_ids[stop_mask] = 0
        heading_ids[stop_mask] = 0
        return ContextIds(
            kind=np.array([NODE_KIND_INDEX[self.nodes[node_id].kind] for node_id in node_ids], dtype=np.int64),
            distance=distance_ids.astype(np.int64),
            heading=heading_ids.astype(np.int64),
            time=np.array([min(self.nodes[node_id].last_step, max_steps - 1) for node_id in node_ids]),
        )

    def path_between(self, source: int, target: int) -> list[int]:
        """Shortest metric path that never passes through the virtual stop node."""
        walkable = self.graph.subgraph(node_id for node_id in self.graph.nodes if node_id != STOP_NODE_ID)
        return nx.shortest_path(walkable, source, target, weight="distance")

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "current_id": self.current_id,
            "nodes": [self.nodes[node_id].to_dict() for node_id in self.node_ids()],
            "edges": sorted(
                [[min(a, b), max(a, b), float(data["distance"])] for a, b, data in self.graph.edges(data=True)]
            ),
        }

    def digest(self) -> str:
        """Hash of the structure and the node features."""
        data = self.to_dict()
        data["features"] = [self.nodes[node_id].feature.tobytes().hex() for node_id in self.node_ids()]
        return stable_hash(data)


def update_graph(
    graph: TopoGraph, pose: Pose, candidates: Sequence[Candidate], pano_mean_feature: NDArray, t: int
) -> TopoGraph:
    return graph.update(pose, candidates, pano_mean_feature, t)
