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
Panoramic surrogate sensing: ray-cast depth images and deterministic patch features.

Patch features come from a fixed seeded random projection of a per-patch-column descriptor: the
normalized ranges of `num_distance_rays` rays spread over the column, followed by a vocabulary-sized
vector holding, for every visible landmark inside the column, 1 / (1 + distance) at its label's id.
"""

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..mapping.geometry import NUM_VIEWS, VIEW_SPACING, Pose, pixel_azimuth_offsets, pixel_elevations, wrap_angle
from ..mapping.grid_mapper import PanoramaFeatures, pool_depth
from .config import SensorConfig
from .instruction import TOKEN_TO_ID, UNK_ID, VOCAB_SIZE
from .scene import Scene


@dataclass
class SurrogateObservation:
    patch_features: NDArray
    """(12, P, P, D)"""
    depth_images: NDArray
    """(12, H, W) planar ranges, 0 marks an invalid pixel"""

    @property
    def view_features(self) -> NDArray:
        """(12, D) one feature per view, the mean of its patches."""
        return self.patch_features.mean(axis=(1, 2))

    @property
    def mean_feature(self) -> NDArray:
        """Panoramic feature of the whole observation, the mean over views."""
        return self.view_features.mean(axis=0)

    def to_panorama(self) -> PanoramaFeatures:
        patch_size = self.patch_features.shape[1]
        pooled = np.stack([pool_depth(image, patch_size) for image in self.depth_images], axis=0)
        return PanoramaFeatures(patch_features=self.patch_features, pooled_depths=pooled)

    def digest(self) -> str:
        sha = hashlib.sha256()
        sha.update(np.ascontiguousarray(self.patch_features).tobytes())
        sha.update(np.ascontiguousarray(self.depth_images).tobytes())
        return sha.hexdigest()


class FeatureModel:
    """Fixed random projection R^K -> R^D followed by tanh, K = num_rays + vocabulary size."""

    def __init__(self, num_rays: int, feature_dim: int, seed: int):
        self.num_rays = num_rays
        self.feature_dim = feature_dim
        num_inputs = num_rays + VOCAB_SIZE
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((num_inputs, feature_dim)) / math.sqrt(num_inputs)

    def __call__(self, descriptors: NDArray) -> NDArray:
        return np.tanh(descriptors @ self.projection)


_FEATURE_MODELS: dict[tuple[int, int, int], FeatureModel] = {}


def get_feature_model(sensor: SensorConfig) -> FeatureModel:
    key = (sensor.num_distance_rays, sensor.feature_dim, sensor.feature_seed)
    if key not in _FEATURE_MODELS:
        _FEATURE_MODELS[key] = FeatureModel(*key)

    return _FEATURE_MODELS[key]


def column_edges(num_columns: int, hfov: float) -> NDArray:
    """Azimuth offsets in degrees of the num_columns + 1 column boundaries of a view."""
    bounds = np.arange(num_columns + 1, dtype=np.float64)
    return np.degrees(np.arctan(math.tan(math.radians(hfov) / 2.0) * (2.0 * bounds - num_columns) / num_columns))


def render_depth(scene: Scene, pose: Pose, sensor: SensorConfig) -> NDArray:
    """(12, H, W) planar depth: the nearer of the wall hit and the floor or ceiling hit of each pixel."""
    size = sensor.image_size
    offsets = pixel_azimuth_offsets(size, sensor.hfov)
    bases = np.array([(pose.heading + VIEW_SPACING * i) % 360.0 for i in range(NUM_VIEWS)])
    wall_ranges = scene.cast_rays(pose.position, np.radians(bases[:, None] + offsets[None, :]))

    tan_elevation = np.tan(np.radians(pixel_elevations(size, sensor.vfov)))
    with np.errstate(divide="ignore"):
        floor_range = np.where(tan_elevation < 0, sensor.camera_height / -tan_elevation, np.inf)
        ceiling_range = np.where(
            tan_elevation > 0, (sensor.ceiling_height - sensor.camera_height) / tan_elevation, np.inf
        )

    surface_range = np.minimum(floor_range, ceiling_range)
    depth = np.minimum(wall_ranges[:, None, :], surface_range[None, :, None])
    return np.where(depth <= sensor.max_depth, depth, 0.0)


def render_patch_features(scene: Scene, pose: Pose, sensor: SensorConfig) -> NDArray:
    patch_size = sensor.patch_size
    num_rays = sensor.num_distance_rays
    edges = column_edges(patch_size, sensor.hfov)
    fractions = (np.arange(num_rays) + 0.5) / num_rays
    ray_offsets = edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * fractions[None, :]
    bases = np.array([(pose.heading + VIEW_SPACING * i) % 360.0 for i in range(NUM_VIEWS)])
    ranges = scene.cast_rays(pose.position, np.radians(bases[:, None, None] + ray_offsets[None, :, :]))
    ranges = np.minimum(ranges, sensor.max_depth) / sensor.max_depth

    landmark_vectors = np.zeros((NUM_VIEWS, patch_size, VOCAB_SIZE), dtype=np.float64)
    if scene.landmarks:
        offsets = np.array([np.asarray(lm.position) - pose.position for lm in scene.landmarks])
        distances = np.linalg.norm(offsets, axis=-1)
        bearings = np.degrees(np.arctan2(offsets[:, 1], offsets[:, 0]))
        radii = np.array([lm.radius for lm in scene.landmarks])
        token_ids = np.array([TOKEN_TO_ID.get(lm.label, UNK_ID) for lm in scene.landmarks])
        line_of_sight = scene.cast_rays(pose.position, np.radians(bearings))
        visible = (distances <= sensor.max_depth) & (line_of_sight >= distances - radii - 1e-9)
        angular_radius = np.degrees(np.arcsin(np.clip(radii / np.maximum(distances, 1e-9), 0.0, 1.0)))

        centers = bases[:, None] + 0.5 * (edges[:-1] + edges[1:])[None, :]
        half_widths = 0.5 * (edges[1:] - edges[:-1])
        gap = np.abs(wrap_angle(bearings[None, None, :] - centers[:, :, None]))
        inside = gap <= half_widths[None, :, None] + angular_radius[None, None, :]
        weights = np.where(inside & visible[None, None, :], 1.0 / (1.0 + distances[None, None, :]), 0.0)
        one_hot = np.eye(VOCAB_SIZE)[token_ids]
        landmark_vectors = weights @ one_hot

    descriptors = np.concatenate([ranges, landmark_vectors], axis=-1)
    column_features = get_feature_model(sensor)(descriptors)
    shape = (NUM_VIEWS, patch_size, patch_size, sensor.feature_dim)
    return np.broadcast_to(column_features[:, None, :, :], shape).copy()


def render_panorama(scene: Scene, pose: Pose, sensor: Optional[SensorConfig] = None) -> SurrogateObservation:
    sensor = sensor or SensorConfig()
    return SurrogateObservation(
        patch_features=render_patch_features(scene, pose, sensor), depth_images=render_depth(scene, pose, sensor)
    )
