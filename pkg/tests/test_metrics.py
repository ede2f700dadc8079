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
import random

import numpy as np
import pytest

from dualnav.trainer.metrics import compute_metrics, compute_report_metrics, episode_metrics, trajectory_length
from dualnav.workers.rollout import EpisodeRecord
from dualnav.workers.rollout.record import MAX_STEPS, STOP_ACTION


def _record(trajectory, goal=(0.0, 0.0), stop_reason=STOP_ACTION, geodesic_length=10.0, failed=False, seed=0):
    return EpisodeRecord(
        scene="room",
        seed=seed,
        instruction=[1, 2, 3],
        goal=list(goal),
        geodesic_length=geodesic_length,
        trajectory=[[x, y, 0.0] for x, y in trajectory],
        stop_reason=stop_reason,
        failed=failed,
    )


def _oracle(record, radius=3.0):
    points = [(pose[0], pose[1]) for pose in record.trajectory]
    tl = sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(points, points[1:]))
    distances = [math.hypot(x - record.goal[0], y - record.goal[1]) for x, y in points]
    ne = distances[-1]
    sr = 1.0 if record.stop_reason == STOP_ACTION and not record.failed and ne <= radius else 0.0
    osr = 1.0 if min(distances) <= radius else 0.0
    longest = max(record.geodesic_length, tl)
    spl = sr * record.geodesic_length / longest if longest > 0 else sr
    return tl, ne, osr, sr, spl


def _random_record(rng: random.Random, seed: int):
    num_points = rng.randint(1, 8)
    trajectory = [(rng.uniform(-6, 6), rng.uniform(-6, 6)) for _ in range(num_points)]
    return _record(
        trajectory,
        goal=(rng.uniform(-6, 6), rng.uniform(-6, 6)),
        stop_reason=rng.choice([STOP_ACTION, MAX_STEPS]),
        geodesic_length=rng.choice([0.0, rng.uniform(0.5, 15.0)]),
        failed=rng.random() < 0.1,
        seed=seed,
    )


def test_success_within_radius():
    metrics = episode_metrics(_record([(0.0, 0.0), (2.9, 0.0)]), geodesic_length=2.9)
    assert metrics.navigation_error == pytest.approx(2.9)
    assert metrics.success == 1.0
    assert metrics.oracle_success == 1.0


def test_no_success_without_stop():
    metrics = episode_metrics(_record([(5.0, 0.0), (1.0, 0.0)], stop_reason=MAX_STEPS), geodesic_length=5.0)
    assert metrics.success == 0.0
    assert metrics.oracle_success == 1.0
    assert metrics.spl == 0.0


def test_spl():
    straight = episode_metrics(_record([(10.0, 0.0), (0.0, 0.0)]), geodesic_length=10.0)
    assert straight.trajectory_length == pytest.approx(10.0)
    assert straight.spl == pytest.approx(1.0)

    detour = episode_metrics(_record([(10.0, 0.0), (10.0, 10.0), (0.0, 0.0)]), geodesic_length=10.0)
    assert detour.trajectory_length == pytest.approx(10.0 + math.sqrt(200.0))
    zigzag = [(10.0, 0.0), (5.0, 0.0), (10.0, 0.0), (5.0, 0.0), (0.0, 0.0)]
    doubled = episode_metrics(_record(zigzag), geodesic_length=10.0)
    assert doubled.trajectory_length == pytest.approx(20.0)
    assert doubled.spl == pytest.approx(0.5)

    failure = episode_metrics(_record([(10.0, 0.0), (5.0, 0.0)]), geodesic_length=10.0)
    assert failure.success == 0.0
    assert failure.spl == 0.0


def test_zero_length_episode():
    metrics = episode_metrics(_record([(1.0, 0.0)]), geodesic_length=0.0)
    assert metrics.trajectory_length == 0.0
    assert metrics.spl == metrics.success == 1.0


def test_failed_episode_never_succeeds():
    metrics = episode_metrics(_record([(0.5, 0.0)], failed=True), geodesic_length=0.5)
    assert metrics.success == 0.0
    assert metrics.failed


def test_empty_trajectory():
    with pytest.raises(ValueError, match="empty trajectory"):
        episode_metrics(_record([]), geodesic_length=1.0)


def test_trajectory_length():
    assert trajectory_length(np.zeros((1, 2))) == 0.0
    assert trajectory_length(np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 0.0]])) == pytest.approx(9.0)


def test_matches_single_episode_oracle():
    rng = random.Random(7)
    records = [_random_record(rng, seed) for seed in range(100)]
    report = compute_metrics(records)
    for record, metrics in zip(records, report.episodes):
        tl, ne, osr, sr, spl = _oracle(record)
        assert metrics.trajectory_length == pytest.approx(tl, rel=1e-12, abs=1e-12)
        assert metrics.navigation_error == pytest.approx(ne, rel=1e-12)
        assert metrics.oracle_success == osr
        assert metrics.success == sr
        assert metrics.spl == pytest.approx(spl, rel=1e-12, abs=1e-12)
        assert metrics.spl <= metrics.success
        assert metrics.oracle_success >= metrics.success

    assert report.counts["episodes"] == 100
    assert report.aggregate["sr"] == pytest.approx(np.mean([_oracle(record)[3] for record in records]))
    assert report.aggregate["spl"] <= report.aggregate["sr"] <= report.aggregate["osr"]


def test_aggregate_is_permutation_invariant():
    rng = random.Random(11)
    records = [_random_record(rng, seed) for seed in range(50)]
    shuffled = list(records)
    random.Random(3).shuffle(shuffled)
    assert compute_metrics(records).aggregate == compute_metrics(shuffled).aggregate


def test_missing_geodesic_only_leaves_spl():
    known = _record([(1.0, 0.0)], geodesic_length=1.0)
    missing = _record([(10.0, 0.0)], geodesic_length=None, stop_reason=MAX_STEPS)
    report = compute_metrics([known, missing])
    assert report.episodes[1].missing_geodesic
    assert report.episodes[1].spl is None
    assert report.counts["missing_geodesic"] == 1
    assert report.aggregate["spl"] == pytest.approx(1.0)
    assert report.aggregate["sr"] == pytest.approx(0.5)
    assert report.aggregate["ne"] == pytest.approx(5.5)


def test_report_metrics_and_digest():
    records = [_record([(4.0, 0.0), (1.0, 0.0)]), _record([(8.0, 0.0)], stop_reason=MAX_STEPS, failed=True)]
    report = compute_metrics(records, config_hash="abc")
    metrics = compute_report_metrics(report, prefix="val")
    assert set(metrics) == {"val/tl", "val/ne", "val/osr", "val/sr", "val/spl", "val/failed"}
    assert metrics["val/failed"] == 1
    assert report.config_hash == "abc"
    assert report.digest() == compute_metrics(records, config_hash="abc").digest()
    assert report.digest() != compute_metrics(records, config_hash="xyz").digest()
