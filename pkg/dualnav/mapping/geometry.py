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
Planar pose arithmetic, per-view depth back-projection and ego <-> grid conversions.

Conventions used everywhere in the package:
  - world and ego frames are right-handed, heading 0 deg = +x, angles grow counter-clockwise;
  - the ego frame is centred on the agent with +x along its heading and +y to its left;
  - panoramic view i looks at azimuth 30 * i deg in the ego frame.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray


NUM_VIEWS = 12
VIEW_SPACING = 30.0
FORWARD_STEP = 0.25
TURN_ANGLE = 15.0
INVALID_DEPTH = 0.0


class LowLevelAction(str, Enum):
    """The low-level action space of the continuous environment."""

    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"


def normalize_heading(heading: float) -> float:
    heading = float(heading) % 360.0
    if heading >= 360.0:  # -1e-20 % 360 rounds up to 360
        heading = 0.0

    return heading


def wrap_angle(angle: Union[float, NDArray]) -> Union[float, NDArray]:
    """Wrap degrees into [-180, 180)."""
    return (np.asarray(angle) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0
    """degrees in [0, 360)"""

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError(f"Pose must be finite, got ({self.x}, {self.y}, {self.heading}).")

        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def position(self) -> NDArray:
        return np.array([self.x, self.y], dtype=np.float64)

    def distance_to(self, point: Sequence[float]) -> float:
        return math.hypot(point[0] - self.x, point[1] - self.y)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.heading]


@dataclass(frozen=True)
class GridSpec:
    U: int = 11
    """cell count along ego +x (rows)"""
    V: int = 11
    """cell count along ego +y (cols)"""
    cell_res: float = 1.0
    """meters per cell"""
    upsample_m: int = 5
    """heatmap sub-cells per cell along rows"""
    upsample_n: int = 5
    """heatmap sub-cells per cell along cols"""

    def __post_init__(self):
        if self.U < 3 or self.V < 3 or self.U % 2 == 0 or self.V % 2 == 0:
            raise ValueError(f"Grid size must be odd and >= 3, got {self.U}x{self.V}.")

        if not self.cell_res > 0:
            raise ValueError(f"cell_res must be positive, got {self.cell_res}.")

        if self.upsample_m < 1 or self.upsample_n < 1:
            raise ValueError(f"Upsample factors must be >= 1, got {self.upsample_m}x{self.upsample_n}.")

    @property
    def center(self) -> tuple[int, int]:
        return (self.U - 1) // 2, (self.V - 1) // 2

    @property
    def shape(self) -> tuple[int, int]:
        return self.U, self.V

    @property
    def sub_shape(self) -> tuple[int, int]:
        return self.upsample_m * self.U, self.upsample_n * self.V

    @property
    def sub_center(self) -> tuple[int, int]:
        rows, cols = self.sub_shape
        return (rows - 1) // 2, (cols - 1) // 2

    @property
    def sub_res(self) -> tuple[float, float]:
        return self.cell_res / self.upsample_m, self.cell_res / self.upsample_n

    @property
    def half_footprint(self) -> float:
        return self.U * self.cell_res / 2.0


@dataclass(frozen=True)
class ViewRay:
    view_index: int
    hfov: float = 90.0

    def __post_init__(self):
        if not 0 <= self.view_index < NUM_VIEWS:
            raise ValueError(f"view_index must be in [0, {NUM_VIEWS}), got {self.view_index}.")

    @property
    def azimuth(self) -> float:
        return VIEW_SPACING * self.view_index


@dataclass(frozen=True)
class CameraSpec:
    height: float = 1.25
    """camera height above the floor in meters"""
    vfov: float = 90.0
    min_height: float = 0.2
    max_height: float = 1.8


@dataclass
class FeaturedPoints:
    """Semantically enriched point cloud: one ego-frame position and one feature per point."""

    positions: NDArray
    """(N, 2) ego meters"""
    features: NDArray
    """(N, D)"""

    def __post_init__(self):
        assert len(self.positions) == len(self.features), "positions and features must align."
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.features))):
            raise ValueError("Point positions and features must be finite.")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class ViewProjection:
    ego_points: NDArray
    """(N, 2) ego-frame planar positions"""
    world_points: NDArray
    """(N, 2) the same points in the world frame"""
    indices: NDArray
    """(N,) flat row-major index of the source patch entry"""
    num_invalid: int
    """entries dropped for an invalid depth"""
    num_out_of_band: int
    """entries dropped by the height band"""


def compose_pose(
    pose: Pose, action: LowLevelAction, forward_step: float = FORWARD_STEP, turn_angle: float = TURN_ANGLE
) -> Pose:
    """Apply one low-level action. No collision handling: the simulator clamps."""
    action = LowLevelAction(action)
    if action == LowLevelAction.FORWARD:
        rad = math.radians(pose.heading)
        return Pose(pose.x + forward_step * math.cos(rad), pose.y + forward_step * math.sin(rad), pose.heading)
    elif action == LowLevelAction.TURN_LEFT:
        return Pose(pose.x, pose.y, pose.heading + turn_angle)
    elif action == LowLevelAction.TURN_RIGHT:
        return Pose(pose.x, pose.y, pose.heading - turn_angle)
    else:
        return pose


def pixel_azimuth_offsets(num_columns: int, hfov: float) -> NDArray:
    """Planar pinhole azimuth offset in degrees of every image column, column 0 the most clockwise."""
    cols = np.arange(num_columns, dtype=np.float64)
    ratio = (2.0 * cols + 1.0 - num_columns) / num_columns
    return np.degrees(np.arctan(math.tan(math.radians(hfov) / 2.0) * ratio))


def pixel_elevations(num_rows: int, vfov: float) -> NDArray:
    """Elevation in degrees of every image row, row 0 the top one."""
    rows = np.arange(num_rows, dtype=np.float64)
    ratio = (num_rows - 2.0 * rows - 1.0) / num_rows
    return np.degrees(np.arctan(math.tan(math.radians(vfov) / 2.0) * ratio))


def ego_to_world(points: NDArray, pose: Pose) -> NDArray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    rad = math.radians(pose.heading)
    cos, sin = math.cos(rad), math.sin(rad)
    world_x = pose.x + cos * points[:, 0] - sin * points[:, 1]
    world_y = pose.y + sin * points[:, 0] + cos * points[:, 1]
    return np.stack([world_x, world_y], axis=-1)


def world_to_ego(points: NDArray, pose: Pose) -> NDArray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    rad = math.radians(pose.heading)
    cos, sin = math.cos(rad), math.sin(rad)
    dx, dy = points[:, 0] - pose.x, points[:, 1] - pose.y
    return np.stack([cos * dx + sin * dy, -sin * dx + cos * dy], axis=-1)


def backproject_view(
    depth_patch: NDArray, ray: ViewRay, pose: Pose, camera: Optional[CameraSpec] = None
) -> ViewProjection:
    """Lift a P x P pooled depth patch of one panoramic view into ego-frame planar points.

    Depth is the planar range along the pixel's azimuth. Entries <= 0 or non-finite are invalid, and
    entries whose hit height falls outside the camera's height band are removed before the vertical
    dimension is discarded.
    """
    camera = camera or CameraSpec()
    depth_patch = np.asarray(depth_patch, dtype=np.float64)
    rows, cols = depth_patch.shape
    azimuths = np.radians(ray.azimuth + pixel_azimuth_offsets(cols, ray.hfov))
    elevations = np.radians(pixel_elevations(rows, camera.vfov))

    valid = np.isfinite(depth_patch) & (depth_patch > INVALID_DEPTH)
    safe_depth = np.where(valid, depth_patch, 0.0)
    heights = camera.height + safe_depth * np.tan(elevations)[:, None]
    in_band = (heights >= camera.min_height) & (heights <= camera.max_height)
    keep = valid & in_band

    flat_index = np.flatnonzero(keep)
    row_index, col_index = np.divmod(flat_index, cols)
    depth = depth_patch.reshape(-1)[flat_index]
    ego_points = np.stack(
        [depth * np.cos(azimuths[col_index]), depth * np.sin(azimuths[col_index])], axis=-1
    ).reshape(-1, 2)
    return ViewProjection(
        ego_points=ego_points,
        world_points=ego_to_world(ego_points, pose),
        indices=flat_index,
        num_invalid=int((~valid).sum()),
        num_out_of_band=int((valid & ~in_band).sum()),
    )


def points_to_cells(ego_points: NDArray, spec: GridSpec) -> tuple[NDArray, NDArray]:
    """Vectorized floor indexing. Returns (cells (N, 2) int, in-range mask (N,))."""
    ego_points = np.asarray(ego_points, dtype=np.float64).reshape(-1, 2)
    center_u, center_v = spec.center
    u = np.floor(ego_points[:, 0] / spec.cell_res).astype(np.int64) + center_u
    v = np.floor(ego_points[:, 1] / spec.cell_res).astype(np.int64) + center_v
    in_range = (u >= 0) & (u < spec.U) & (v >= 0) & (v < spec.V)
    return np.stack([u, v], axis=-1), in_range


def world_to_cell(ego_pos: Sequence[float], spec: GridSpec) -> Optional[tuple[int, int]]:
    """Cell (u, v) holding an ego-frame position, or None when it falls outside the grid."""
    cells, in_range = points_to_cells(np.asarray(ego_pos, dtype=np.float64), spec)
    if not in_range[0]:
        return None

    return int(cells[0, 0]), int(cells[0, 1])


def cell_center(cell: tuple[int, int], spec: GridSpec) -> tuple[float, float]:
    center_u, center_v = spec.center
    return (cell[0] - center_u + 0.5) * spec.cell_res, (cell[1] - center_v + 0.5) * spec.cell_res


def ego_to_subcell(ego_pos: Sequence[float], spec: GridSpec) -> tuple[tuple[int, int], bool]:
    """Heatmap sub-cell holding an ego position; the lattice centre sub-cell is centred on the agent.

    Positions off the lattice are clamped to its border and flagged with `clamped=True`.
    """
    res_x, res_y = spec.sub_res
    rows, cols = spec.sub_shape
    center_i, center_j = spec.sub_center
    i = int(math.floor(ego_pos[0] / res_x + 0.5)) + center_i
    j = int(math.floor(ego_pos[1] / res_y + 0.5)) + center_j
    clamped_i, clamped_j = min(max(i, 0), rows - 1), min(max(j, 0), cols - 1)
    return (clamped_i, clamped_j), (clamped_i, clamped_j) != (i, j)


def subcell_centers(spec: GridSpec) -> NDArray:
    """Ego positions of every heatmap sub-cell centre, shape (mU, nV, 2)."""
    res_x, res_y = spec.sub_res
    rows, cols = spec.sub_shape
    center_i, center_j = spec.sub_center
    xs = (np.arange(rows, dtype=np.float64) - center_i) * res_x
    ys = (np.arange(cols, dtype=np.float64) - center_j) * res_y
    grid_x, grid_y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([grid_x, grid_y], axis=-1)


def view_index_for_bearing(bearing: float) -> int:
    """Panoramic view whose centre azimuth is closest to an ego bearing in degrees."""
    return int(math.floor(normalize_heading(bearing) / VIEW_SPACING + 0.5)) % NUM_VIEWS
