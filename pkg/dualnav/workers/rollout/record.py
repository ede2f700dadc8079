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
Episode records, serialized one JSON object per line.
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from ...mapping.grid_mapper import GridMap
from ...mapping.topo_mapper import TopoGraph
from ...models.heatmap import Heatmap


SCHEMA_VERSION = 1
STOP_ACTION = "stop_action"
MAX_STEPS = "max_steps"


@dataclass
class StepRecord:
    t: int
    pose: list[float]
    candidates: list[list[float]]
    """w, sampled from the waypoint distribution"""
    adjusted_candidates: list[list[float]]
    """w-hat, sampled from the fused heatmap"""
    action: int
    """chosen target node id, 0 for stop"""
    target: Optional[list[float]] = None
    teacher_forced: bool = False
    gamma: float = 0.5
    proposal_fallback: bool = False
    sample_fallback: bool = False
    proposal_digest: str = ""
    heatmap_digest: str = ""
    fused_digest: str = ""
    fused_argmax: list[int] = field(default_factory=list)
    stage1_graph_digest: str = ""
    graph_digest: str = ""
    grid_digest: str = ""
    removed_nodes: list[int] = field(default_factory=list)
    num_excluded: int = 0
    num_actions: int = 0
    reached: bool = True
    heatmaps: Optional[dict[str, list[list[float]]]] = None
    """full `proposal`, `heatmap` and `fused` values when requested"""


@dataclass
class EpisodeRecord:
    scene: str
    seed: int
    instruction: list[int]
    goal: list[float]
    geodesic_length: Optional[float]
    trajectory: list[list[float]] = field(default_factory=list)
    """every executed low-level pose, [x, y, heading]"""
    steps: list[StepRecord] = field(default_factory=list)
    stop_reason: str = MAX_STEPS
    failed: bool = False
    error: Optional[str] = None
    num_collisions: int = 0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EpisodeRecord":
        data = dict(data)
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"Unsupported episode record schema version: {version}.")

        data["steps"] = [StepRecord(**step) for step in data.get("steps", [])]
        return cls(**data)


@dataclass
class StepSnapshot:
    """In-memory per-step state kept for training batches and renders."""

    graph: TopoGraph
    """persisted stage-2 graph"""
    stage1_graph: TopoGraph
    grid: GridMap
    proposal: Heatmap
    heatmap: Heatmap
    fused: Heatmap
    expert_target: Optional[int] = None
    expert_waypoint: Optional[list[float]] = None


@dataclass
class EpisodeResult:
    record: EpisodeRecord
    snapshots: list[StepSnapshot] = field(default_factory=list)


def write_records(records: list[EpisodeRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def read_records(path: str) -> list[EpisodeRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(EpisodeRecord.from_dict(json.loads(line)))

    return records
