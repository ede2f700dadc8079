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
Navigation metrics: trajectory length, navigation error, oracle success, success and
success weighted by path length.
"""

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..envs.scene import Scene, SceneLoadError
from ..envs.simulator import NavEnv
from ..utils.py_functional import stable_hash
from ..workers.rollout.record import STOP_ACTION, EpisodeRecord


def reduce_metrics(metrics: dict[str, list[Any]]) -> dict[str, Any]:
    return {key: np.mean(value) for key, value in metrics.items()}


@dataclass
class EpisodeMetrics:
    scene: str
    seed: int
    trajectory_length: float
    navigation_error: float
    oracle_success: float
    success: float
    spl: Optional[float]
    """None when the geodesic start-goal length is unknown"""
    stop_reason: str
    failed: bool = False
    missing_geodesic: bool = False


@dataclass
class MetricsReport:
    episodes: list[EpisodeMetrics] = field(default_factory=list)
    aggregate: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    config_hash: str = ""
    tags: dict[str, Any] = field(default_factory=dict)
    """sweep coordinates of this report, e.g. delta or disturbance level"""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def digest(self) -> str:
        return stable_hash(self.to_dict())


def trajectory_length(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0

    return float(np.linalg.norm(np.diff(points, axis=0), axis=-1).sum())


def episode_metrics(record: EpisodeRecord, geodesic_length: Optional[float], success_radius: float = 3.0):
    """Metrics of one episode from its raw pose list."""
    if not record.trajectory:
        raise ValueError(f"Episode on scene {record.scene} has an empty trajectory.")

    points = np.asarray(record.trajectory, dtype=np.float64)[:, :2]
    goal = np.asarray(record.goal, dtype=np.float64)
    tl = trajectory_length(points)
    ne = float(np.linalg.norm(points[-1] - goal))
    stopped = record.stop_reason == STOP_ACTION and not record.failed
    success = float(stopped and ne <= success_radius)
    oracle_success = float(np.min(np.linalg.norm(points - goal, axis=-1)) <= success_radius)
    spl = None
    if geodesic_length is not None:
        longest = max(geodesic_length, tl)
        spl = success * geodesic_length / longest if longest > 0 else success

    return EpisodeMetrics(
        scene=record.scene,
        seed=record.seed,
        trajectory_length=tl,
        navigation_error=ne,
        oracle_success=oracle_success,
        success=success,
        spl=spl,
        stop_reason=record.stop_reason,
        failed=record.failed,
        missing_geodesic=geodesic_length is None,
    )


def _geodesic_length(record: EpisodeRecord, scenes: Mapping[str, Scene]) -> Optional[float]:
    if record.geodesic_length is not None:
        return record.geodesic_length

    if record.scene not in scenes:
        return None

    try:
        return NavEnv(scenes[record.scene]).geodesic_length
    except SceneLoadError:
        return None


def _mean(values: Sequence[float]) -> float:
    # exactly rounded, so aggregates do not depend on episode order
    return math.fsum(values) / len(values) if values else 0.0


def compute_metrics(
    records: Sequence[EpisodeRecord],
    scenes: Optional[Mapping[str, Scene]] = None,
    success_radius: float = 3.0,
    config_hash: str = "",
) -> MetricsReport:
    """Per-episode metrics and their means. Episodes without a geodesic length are flagged and
    left out of the SPL mean only.
    """
    scenes = scenes or {}
    episodes = [episode_metrics(r, _geodesic_length(r, scenes), success_radius) for r in records]
    columns = defaultdict(list)
    for episode in episodes:
        columns["tl"].append(episode.trajectory_length)
        columns["ne"].append(episode.navigation_error)
        columns["osr"].append(episode.oracle_success)
        columns["sr"].append(episode.success)
        if episode.spl is not None:
            columns["spl"].append(episode.spl)

    aggregate = {key: _mean(columns[key]) for key in ("tl", "ne", "osr", "sr", "spl")}
    counts = {
        "episodes": len(episodes),
        "failed": sum(episode.failed for episode in episodes),
        "missing_geodesic": sum(episode.missing_geodesic for episode in episodes),
        "stopped": sum(episode.stop_reason == STOP_ACTION for episode in episodes),
    }
    return MetricsReport(episodes=episodes, aggregate=aggregate, counts=counts, config_hash=config_hash)


def compute_report_metrics(report: MetricsReport, prefix: str = "val") -> dict[str, Any]:
    """Flat tracker metrics of a report. TL is informational."""
    metrics = {f"{prefix}/{key}": value for key, value in report.aggregate.items()}
    metrics[f"{prefix}/failed"] = report.counts.get("failed", 0)
    return metrics
