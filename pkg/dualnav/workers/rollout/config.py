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
Rollout config
"""

from dataclasses import asdict, dataclass, field
from typing import Optional

from ...mapping.geometry import GridSpec
from ...models.heatmap import HeatmapConfig


@dataclass
class RolloutConfig:
    grid_u: int = 11
    grid_v: int = 11
    cell_res: float = 1.0
    """grid cell size in meters"""
    upsample_m: int = 5
    upsample_n: int = 5
    dedup_radius: float = 0.5
    """re-observed waypoints closer than this merge into the existing node"""
    neighborhood_radius: Optional[float] = None
    """visited nodes broadcast by Node2Cell lie within this radius, defaults to the half footprint"""
    max_steps: int = 15
    """decision steps per episode"""
    max_actions_per_step: int = 60
    """low-level action budget of the executor for one decision"""
    arrival_tolerance: float = 0.125
    heading_tolerance: float = 7.5
    """the executor turns until the target bearing is within this many degrees"""
    record_heatmaps: bool = False
    """store full heatmap values in episode records instead of digests only"""
    heatmap: HeatmapConfig = field(default_factory=HeatmapConfig)

    def post_init(self):
        if self.neighborhood_radius is None:
            self.neighborhood_radius = self.grid_u * self.cell_res / 2.0

        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}.")

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.grid_u, self.grid_v, self.cell_res, self.upsample_m, self.upsample_n)

    def to_dict(self):
        return asdict(self)
