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
Geometric surrogate of a learned waypoint predictor: a distribution over the sub-cell lattice that
prefers free directions and ranges around `peak_range`, read off the panorama's depth images.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..mapping.geometry import NUM_VIEWS, VIEW_SPACING, GridSpec, Pose, pixel_azimuth_offsets, subcell_centers
from ..models.heatmap import Heatmap, HeatmapConfig, SampledWaypoints, sample_waypoints
from .config import SensorConfig, WaypointConfig
from .sensing import SurrogateObservation


logger = logging.getLogger(__name__)


@dataclass
class WaypointProposal:
    distribution: Heatmap
    """non-negative, sums to 1"""
    nav_mask: NDArray
    """sub-cells carrying mass"""
    fallback: bool = False
    """True when no sub-cell was free and the agent's own neighbourhood was used"""


def range_profile(obs: SurrogateObservation, sensor: SensorConfig) -> tuple[NDArray, NDArray]:
    """Ego bearings (deg) and free ranges (m) of every image column, read at the two horizon rows."""
    _, height, width = obs.depth_images.shape
    horizon = obs.depth_images[:, height // 2 - 1 : height // 2 + 1, :]
    ranges = np.where(horizon > 0, horizon, sensor.max_depth).min(axis=1)
    offsets = pixel_azimuth_offsets(width, sensor.hfov)
    bearings = (VIEW_SPACING * np.arange(NUM_VIEWS)[:, None] + offsets[None, :]) % 360.0
    return bearings.reshape(-1), ranges.reshape(-1)


def waypoint_distribution(
    obs: SurrogateObservation,
    spec: GridSpec,
    sensor: SensorConfig,
    cfg: WaypointConfig,
    reachable: Optional[NDArray] = None,
) -> WaypointProposal:
    """Softmax over free sub-cells of a range-peaked logit plus an openness bonus.

    A sub-cell is free when it lies in [min_range, max_range] and the sensed range along every bearing
    within `clearance` of it exceeds its range by `clearance`. `reachable` further restricts the mask.
    """
    bearings, ranges = range_profile(obs, sensor)
    order = np.argsort(bearings)
    bearings, ranges = bearings[order], ranges[order]

    centers = subcell_centers(spec)
    distance = np.linalg.norm(centers, axis=-1)
    bearing = np.degrees(np.arctan2(centers[..., 1], centers[..., 0]))
    half_window = np.degrees(cfg.clearance / np.maximum(distance, cfg.clearance))
    window = bearing[..., None] + half_window[..., None] * np.linspace(-1.0, 1.0, 5)
    profile = np.interp(window, bearings, ranges, period=360.0).min(axis=-1)

    free = (distance >= cfg.min_range) & (distance <= cfg.max_range) & (distance + cfg.clearance < profile)
    if reachable is not None:
        free &= np.asarray(reachable, dtype=bool)

    if not free.any():
        logger.warning("No free sub-cell around the agent, falling back to its own neighbourhood.")
        center_i, center_j = spec.sub_center
        mask = np.zeros(spec.sub_shape, dtype=bool)
        mask[center_i - 1 : center_i + 2, center_j - 1 : center_j + 2] = True
        return WaypointProposal(Heatmap(mask / mask.sum(), spec.sub_res[0]), mask, fallback=True)

    logits = -((distance - cfg.peak_range) ** 2) / (2.0 * cfg.range_width**2)
    logits = logits + cfg.openness_bonus * np.minimum(profile, sensor.max_depth) / sensor.max_depth
    logits = np.where(free, logits - logits[free].max(), -np.inf)
    values = np.exp(logits)
    values /= values.sum()
    return WaypointProposal(Heatmap(values, spec.sub_res[0]), free)


def surrogate_wp(
    obs: SurrogateObservation,
    pose: Pose,
    spec: GridSpec,
    sensor: SensorConfig,
    cfg: WaypointConfig,
    heatmap_cfg: HeatmapConfig,
    rng: np.random.Generator,
    reachable: Optional[NDArray] = None,
) -> tuple[WaypointProposal, SampledWaypoints]:
    """Waypoint distribution P_t and k candidates drawn from it."""
    proposal = waypoint_distribution(obs, spec, sensor, cfg, reachable=reachable)
    sampled = sample_waypoints(
        proposal.distribution,
        heatmap_cfg.k_candidates,
        proposal.nav_mask,
        rng,
        pose,
        spec,
        min_separation=heatmap_cfg.min_separation,
    )
    return proposal, sampled
