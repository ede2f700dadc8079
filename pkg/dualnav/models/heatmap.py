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
Guidance heatmaps on the egocentric sub-cell lattice: ground-truth construction, the prediction head,
weighted fusion with the waypoint distribution, and candidate sampling.

The lattice has (m * U) x (n * V) sub-cells of cell_res / m meters and is centred on the agent: the
centre sub-cell ((27, 27) by default) holds the ego origin. The price of that centred origin is an offset
of half a cell from the floor-indexed raster of the grid map: the m x n sub-cells the head emits for a cell
are centred on the cell's lower corner, not on its centre.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from einops import rearrange
from numpy.typing import NDArray
from torch import nn

from ..mapping.geometry import GridSpec, Pose, ego_to_subcell, ego_to_world, subcell_centers, world_to_ego
from ..utils.render import dump_float_grid


logger = logging.getLogger(__name__)


@dataclass
class HeatmapConfig:
    delta: float = 1e-5
    """weight of the predicted heatmap when fused with the waypoint distribution"""
    rho: float = 10.0
    """peak value of the ground-truth heatmap"""
    sigma: float = 2.0
    """ground-truth Gaussian width, in sub-cells"""
    k_candidates: int = 5
    """candidate waypoints sampled per step"""
    min_separation: int = 1
    """minimum Chebyshev distance between sampled sub-cells"""
    use_guidance: bool = True
    """if False, the predicted heatmap is ignored (delta forced to 0)"""

    def post_init(self):
        if self.delta < 0 or self.rho <= 0 or self.sigma <= 0:
            raise ValueError(f"Invalid heatmap config: delta={self.delta}, rho={self.rho}, sigma={self.sigma}.")

        if self.k_candidates < 1 or self.min_separation < 1:
            raise ValueError("k_candidates and min_separation must be >= 1.")

    @property
    def effective_delta(self) -> float:
        return self.delta if self.use_guidance else 0.0


@dataclass
class Heatmap:
    values: NDArray
    """(mU, nV), egocentric and aligned with the agent's heading"""
    sub_res: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"Heatmap must be 2D, got shape {self.values.shape}.")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def argmax(self) -> tuple[int, int]:
        return tuple(int(x) for x in np.unravel_index(int(np.argmax(self.values)), self.values.shape))

    def is_distribution(self, atol: float = 1e-6) -> bool:
        return bool(np.all(self.values >= 0) and abs(float(self.values.sum()) - 1.0) <= atol)

    def to_text(self) -> str:
        return dump_float_grid(self.values)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()


@dataclass
class SampledWaypoints:
    subcells: NDArray
    """(k, 2) lattice indices in draw order"""
    positions: NDArray
    """(k, 2) world positions of the sub-cell centres"""
    fallback: bool = False
    """True when all mass was masked and the draw was uniform over the mask"""

    def __len__(self) -> int:
        return len(self.subcells)


def ground_truth_heatmap(
    next_waypoint: Sequence[float], pose: Pose, spec: GridSpec, cfg: HeatmapConfig
) -> tuple[Heatmap, bool]:
    """rho-scaled Gaussian centred on the sub-cell holding the waypoint. Returns (heatmap, clamped)."""
    ego = world_to_ego(np.asarray(next_waypoint, dtype=np.float64), pose)[0]
    (center_i, center_j), clamped = ego_to_subcell(ego, spec)
    rows, cols = spec.sub_shape
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    squared = (ii - center_i) ** 2 + (jj - center_j) ** 2
    values = cfg.rho * np.exp(-squared / (2.0 * cfg.sigma**2))
    return Heatmap(values, spec.sub_res[0]), clamped


def fuse_heatmaps(h: Heatmap, p: Heatmap, delta: float) -> Heatmap:
    """delta * h + p, not renormalized."""
    if h.shape != p.shape:
        raise ValueError(f"Heatmap shapes differ: {h.shape} vs {p.shape}.")

    if delta == 0:
        return Heatmap(p.values.copy(), p.sub_res)

    return Heatmap(delta * h.values + p.values, p.sub_res)


def sample_waypoints(
    hm: Heatmap,
    k: int,
    nav_mask: NDArray,
    rng: np.random.Generator,
    pose: Pose,
    spec: GridSpec,
    min_separation: int = 1,
) -> SampledWaypoints:
    """Draw up to k sub-cells without replacement in proportion to the clamped, masked mass.

    Sub-cells closer than `min_separation` (Chebyshev, in sub-cells) to an earlier draw are excluded;
    fewer than k sub-cells are returned when the mass runs out.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}.")

    nav_mask = np.asarray(nav_mask, dtype=bool)
    if nav_mask.shape != hm.shape:
        raise ValueError(f"nav_mask shape {nav_mask.shape} does not match heatmap {hm.shape}.")

    if not nav_mask.any():
        raise ValueError("nav_mask has no reachable sub-cell.")

    mass = np.where(nav_mask, np.clip(hm.values, 0.0, None), 0.0)
    fallback = not mass.sum() > 0
    if fallback:
        logger.warning("All heatmap mass is masked, sampling uniformly over the navigable sub-cells.")
        mass = nav_mask.astype(np.float64)

    rows, cols = hm.shape
    weights = mass.reshape(-1).copy()
    picks = []
    reach = min_separation - 1
    for _ in range(k):
        total = weights.sum()
        if not total > 0:
            break

        index = int(rng.choice(weights.size, p=weights / total))
        i, j = divmod(index, cols)
        picks.append((i, j))
        block = weights.reshape(rows, cols)
        block[max(0, i - reach) : i + reach + 1, max(0, j - reach) : j + reach + 1] = 0.0

    subcells = np.array(picks, dtype=np.int64).reshape(-1, 2)
    ego = subcell_centers(spec)[subcells[:, 0], subcells[:, 1]].reshape(-1, 2)
    return SampledWaypoints(subcells=subcells, positions=ego_to_world(ego, pose), fallback=fallback)


class HeatmapHead(nn.Module):
    """Per-cell feed-forward head emitting the m x n sub-cell values of every cell."""

    def __init__(self, hidden_dim: int, ffn_dim: int, upsample_m: int, upsample_n: int):
        super().__init__()
        self.upsample_m = upsample_m
        self.upsample_n = upsample_n
        self.fc1 = nn.Linear(hidden_dim, ffn_dim)
        self.fc2 = nn.Linear(ffn_dim, upsample_m * upsample_n)

    def forward(self, fused_grid: torch.Tensor) -> torch.Tensor:
        """(U, V, D) -> (m * U, n * V)"""
        sub_values = self.fc2(F.gelu(self.fc1(fused_grid)))
        return rearrange(sub_values, "u v (m n) -> (u m) (v n)", m=self.upsample_m, n=self.upsample_n)


def predict_heatmap(fused_grid: torch.Tensor, head: HeatmapHead, spec: GridSpec) -> Heatmap:
    """Detached numpy view of the head's prediction on the sub-cell lattice of `spec`."""
    if (spec.upsample_m, spec.upsample_n) != (head.upsample_m, head.upsample_n):
        raise ValueError(
            f"Head upsamples by {head.upsample_m}x{head.upsample_n}, grid by {spec.upsample_m}x{spec.upsample_n}."
        )

    with torch.no_grad():
        values = head(fused_grid).double().cpu().numpy()

    return Heatmap(values, spec.cell_res / spec.upsample_m)
