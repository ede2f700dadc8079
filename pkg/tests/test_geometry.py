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

import math

import numpy as np
import pytest

from dualnav.mapping.geometry import (
    GridSpec,
    LowLevelAction,
    Pose,
    ViewRay,
    backproject_view,
    cell_center,
    compose_pose,
    ego_to_subcell,
    ego_to_world,
    view_index_for_bearing,
    world_to_cell,
    world_to_ego,
)


def _center_column_patch(depth: float, size: int = 3) -> np.ndarray:
    """Only the centre entry is valid, and it lies at camera height."""
    patch = np.zeros((size, size))
    patch[size // 2, size // 2] = depth
    return patch


def test_compose_pose():
    assert compose_pose(Pose(0, 0, 0), LowLevelAction.FORWARD) == Pose(0.25, 0, 0)
    pose = Pose(1, 1, 90)
    moved = compose_pose(pose, LowLevelAction.FORWARD)
    assert moved.x == pytest.approx(1.0, abs=1e-12)
    assert moved.y == pytest.approx(1.25)
    assert moved.heading == 90.0
    assert compose_pose(pose, LowLevelAction.STOP) == pose

    pose = Pose(0, 0, 0)
    for _ in range(24):
        pose = compose_pose(pose, LowLevelAction.TURN_LEFT)

    assert pose == Pose(0, 0, 0)


@pytest.mark.parametrize("k", [1, 5, 24, 37])
def test_turns_cancel(k):
    start = Pose(2.5, -1.0, 33.0)
    pose = start
    for _ in range(k):
        pose = compose_pose(pose, LowLevelAction.TURN_LEFT)

    for _ in range(k):
        pose = compose_pose(pose, LowLevelAction.TURN_RIGHT)

    assert pose == start


def test_pose_validation():
    assert Pose(0, 0, -90).heading == 270.0
    assert Pose(0, 0, 720).heading == 0.0
    with pytest.raises(ValueError):
        Pose(float("nan"), 0.0)


def test_grid_spec_validation():
    for kwargs in ({"U": 10}, {"V": 1}, {"cell_res": 0.0}, {"upsample_m": 0}):
        with pytest.raises(ValueError):
            GridSpec(**kwargs)


def test_backproject_on_axis():
    projection = backproject_view(_center_column_patch(2.0), ViewRay(0), Pose(0, 0, 0))
    np.testing.assert_allclose(projection.ego_points, [[2.0, 0.0]], atol=1e-12)
    assert projection.num_invalid == 8

    # view 3 looks along ego +y, counter-clockwise from the heading
    projection = backproject_view(_center_column_patch(2.0), ViewRay(3), Pose(0, 0, 0))
    np.testing.assert_allclose(projection.ego_points, [[0.0, 2.0]], atol=1e-12)


def test_backproject_world_frame():
    projection = backproject_view(_center_column_patch(2.0), ViewRay(0), Pose(1.0, 1.0, 90.0))
    np.testing.assert_allclose(projection.world_points, [[1.0, 3.0]], atol=1e-12)


def test_backproject_ranges():
    rng = np.random.default_rng(0)
    depths = rng.uniform(0.5, 1.5, size=(7, 7))
    depths[0, 0] = 0.0
    projection = backproject_view(depths, ViewRay(4), Pose(0.3, -2.0, 12.0))
    ranges = np.linalg.norm(projection.ego_points, axis=-1)
    np.testing.assert_allclose(ranges, depths.reshape(-1)[projection.indices], rtol=1e-9)
    assert 0 not in projection.indices
    assert projection.num_invalid == 1
    assert len(projection.indices) + projection.num_invalid + projection.num_out_of_band == depths.size


def test_backproject_height_band():
    # the top row looks 45 degrees up at most, far hits land above the band
    depths = np.full((3, 3), 5.0)
    projection = backproject_view(depths, ViewRay(0), Pose(0, 0, 0))
    assert projection.num_out_of_band > 0
    assert set(projection.indices // 3) == {1}


def test_world_to_cell():
    spec = GridSpec()
    assert world_to_cell((0.0, 0.0), spec) == (5, 5)
    assert world_to_cell((1.4, -0.6), spec) == (6, 4)
    assert world_to_cell((6.0, 0.0), spec) is None
    assert world_to_cell((-5.5, 0.0), spec) == (0, 5)
    assert world_to_cell((-5.51, 0.0), spec) is None


@pytest.mark.parametrize("spec", [GridSpec(), GridSpec(U=5, V=7, cell_res=0.5), GridSpec(U=3, V=3, cell_res=2.0)])
def test_cell_center_round_trip(spec):
    assert world_to_cell((0.0, 0.0), spec) == spec.center
    for u in range(spec.U):
        for v in range(spec.V):
            assert world_to_cell(cell_center((u, v), spec), spec) == (u, v)


def test_ego_world_round_trip():
    rng = np.random.default_rng(1)
    points = rng.uniform(-10, 10, size=(50, 2))
    pose = Pose(3.0, -4.0, 123.0)
    np.testing.assert_allclose(world_to_ego(ego_to_world(points, pose), pose), points, atol=1e-9)


def test_ego_to_subcell():
    spec = GridSpec()
    assert ego_to_subcell((0.0, 0.0), spec) == ((27, 27), False)
    assert ego_to_subcell((0.2, -0.2), spec) == ((28, 26), False)
    assert ego_to_subcell((100.0, 0.0), spec) == ((54, 27), True)


def test_view_index_for_bearing():
    assert view_index_for_bearing(0.0) == 0
    assert view_index_for_bearing(14.9) == 0
    assert view_index_for_bearing(15.1) == 1
    assert view_index_for_bearing(-30.0) == 11
    assert view_index_for_bearing(math.degrees(math.pi)) == 6
