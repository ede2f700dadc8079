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
Egocentric bird's-eye-view grid map built from one panoramic observation: depths are average pooled to
the patch layout, back-projected, and the patch features of the points landing in a cell are averaged.
"""

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np
from einops import rearrange
from numpy.typing import NDArray

from ..utils.render import dump_float_grid
from .geometry import (
    INVALID_DEPTH,
    NUM_VIEWS,
    CameraSpec,
    FeaturedPoints,
    GridSpec,
    Pose,
    ViewRay,
    backproject_view,
    points_to_cells,
)


@dataclass
class PanoramaFeatures:
    patch_features: NDArray
    """(12, P, P, D) patch-level view features"""
    pooled_depths: NDArray
    """(12, P, P) pooled depths, 0 marks an invalid entry"""

    def __post_init__(self):
        self.patch_features = np.asarray(self.patch_features, dtype=np.float64)
        self.pooled_depths = np.asarray(self.pooled_depths, dtype=np.float64)
        if self.patch_features.ndim != 4 or self.patch_features.shape[0] != NUM_VIEWS:
            raise ValueError(f"patch_features must be (12, P, P, D), got {self.patch_features.shape}.")

        if self.pooled_depths.shape != self.patch_features.shape[:3]:
            raise ValueError(
                f"pooled_depths {self.pooled_depths.shape} does not match patch layout {self.patch_features.shape}."
            )

        if not np.all(np.isfinite(self.patch_features)):
            raise ValueError("Patch features must be finite.")

    @property
    def patch_size(self) -> int:
        return self.patch_features.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.patch_features.shape[-1]

    def view_features(self) -> NDArray:
        """(12, D) per-view features, the mean over the view's patches."""
        return self.patch_features.mean(axis=(1, 2))


@dataclass(frozen=True)
class GridMap:
    spec: GridSpec
    features: NDArray
    """(U, V, D) mean feature per cell, zero where the cell is empty"""
    counts: NDArray
    """(U, V) number of points per cell"""
    origin_pose: Pose
    num_points: int = 0
    """valid, in-band points before range rejection"""

    def __post_init__(self):
        self.features.flags.writeable = False
        self.counts.flags.writeable = False

    @classmethod
    def empty(cls, spec: GridSpec, feature_dim: int, pose: Pose) -> "GridMap":
        return cls(
            spec=spec,
            features=np.zeros((spec.U, spec.V, feature_dim), dtype=np.float64),
            counts=np.zeros((spec.U, spec.V), dtype=np.int64),
            origin_pose=pose,
        )

    @property
    def feature_dim(self) -> int:
        return self.features.shape[-1]

    @property
    def occupied(self) -> NDArray:
        return self.counts > 0

    def is_empty(self) -> bool:
        return not bool(self.counts.any())

    def to_text(self) -> str:
        return dump_float_grid(self.features)

    def digest(self) -> str:
        sha = hashlib.sha256()
        sha.update(np.ascontiguousarray(self.features).tobytes())
        sha.update(np.ascontiguousarray(self.counts).tobytes())
        sha.update(repr(self.origin_pose.to_list()).encode())
        return sha.hexdigest()


def pool_depth(depth_image: NDArray, patch_size: int) -> NDArray:
    """Average pool a depth image into patch_size x patch_size blocks, ignoring invalid (<= 0) depths.

    Images not divisible by patch_size are padded by edge replication first. Blocks without a valid
    depth yield the invalid sentinel 0.
    """
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}.")

    depth_image = np.asarray(depth_image, dtype=np.float64)
    pad_rows = -depth_image.shape[0] % patch_size
    pad_cols = -depth_image.shape[1] % patch_size
    if pad_rows or pad_cols:
        depth_image = np.pad(depth_image, ((0, pad_rows), (0, pad_cols)), mode="edge")

    blocks = rearrange(depth_image, "(p1 h) (p2 w) -> p1 p2 (h w)", p1=patch_size, p2=patch_size)
    valid = np.isfinite(blocks) & (blocks > INVALID_DEPTH)
    counts = valid.sum(axis=-1)
    sums = np.where(valid, blocks, 0.0).sum(axis=-1)
    return np.where(counts > 0, sums / np.maximum(counts, 1), INVALID_DEPTH)


def rasterize(points: FeaturedPoints, spec: GridSpec) -> tuple[NDArray, NDArray]:
    """Mean-aggregate featured ego points into cells. Returns (features (U, V, D), counts (U, V))."""
    feature_dim = points.features.shape[-1]
    sums = np.zeros((spec.U, spec.V, feature_dim), dtype=np.float64)
    counts = np.zeros((spec.U, spec.V), dtype=np.int64)
    cells, in_range = points_to_cells(points.positions, spec)
    cells = cells[in_range]
    np.add.at(sums, (cells[:, 0], cells[:, 1]), points.features[in_range])
    np.add.at(counts, (cells[:, 0], cells[:, 1]), 1)
    features = np.where(counts[..., None] > 0, sums / np.maximum(counts, 1)[..., None], 0.0)
    return features, counts


def collect_points(
    pano: PanoramaFeatures, pose: Pose, hfov: float = 90.0, camera: Optional[CameraSpec] = None
) -> FeaturedPoints:
    """Back-project every view of a panorama and attach each point's patch feature."""
    positions, features = [], []
    for view_index in range(NUM_VIEWS):
        projection = backproject_view(pano.pooled_depths[view_index], ViewRay(view_index, hfov), pose, camera)
        positions.append(projection.ego_points)
        view_patches = rearrange(pano.patch_features[view_index], "p1 p2 d -> (p1 p2) d")
        features.append(view_patches[projection.indices])

    return FeaturedPoints(np.concatenate(positions, axis=0), np.concatenate(features, axis=0))


def build_grid_map(
    pano: PanoramaFeatures,
    pose: Pose,
    spec: GridSpec,
    hfov: float = 90.0,
    camera: Optional[CameraSpec] = None,
) -> GridMap:
    points = collect_points(pano, pose, hfov=hfov, camera=camera)
    features, counts = rasterize(points, spec)
    return GridMap(spec=spec, features=features, counts=counts, origin_pose=pose, num_points=len(points))
