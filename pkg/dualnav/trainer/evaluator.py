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
Batch evaluation: episode-parallel runs with per-episode seeds spawned from a master seed, report and
record outputs, renders, and the delta / ablation / disturbance sweeps.
"""

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
import ray
import torch

from ..envs.config import EnvConfig
from ..envs.disturbance import Disturbance
from ..envs.instruction import detokenize
from ..envs.scene import Scene, list_scene_files, load_scene
from ..envs.simulator import NavEnv
from ..mapping.geometry import Pose, ego_to_world, subcell_centers
from ..models.agent import DualMapAgent
from ..utils.logger.episode_logger import EpisodeSample
from ..utils.render import render_topdown, save_heatmap_pgm, save_ppm
from ..workers.rollout import DualMapRollout, EpisodeResult, write_records
from .config import NavConfig
from .metrics import MetricsReport, compute_metrics


SWEEP_KINDS = ("delta", "ablation", "disturbance")


def load_split(scene_dir: str, split: str, env_config: EnvConfig, max_scenes: Optional[int] = None) -> list[Scene]:
    files = list_scene_files(os.path.join(scene_dir, split))
    if max_scenes is not None:
        files = files[:max_scenes]

    return [load_scene(path, env_config.agent_radius, env_config.raster_res) for path in files]


def disturbance_from_config(config: NavConfig) -> Optional[Disturbance]:
    d = config.env.disturbance
    if d.kind is None:
        return None

    return Disturbance(d.kind, d.level, seed=d.seed, max_blur_width=d.max_blur_width)


@dataclass
class EpisodeJob:
    index: int
    scene: Scene
    seed: int


def make_jobs(scenes: Sequence[Scene], episodes_per_scene: int, master_seed: int) -> list[EpisodeJob]:
    """Episode i gets the i-th child of the master seed sequence, whatever the worker count."""
    num_jobs = len(scenes) * episodes_per_scene
    children = np.random.SeedSequence(master_seed).spawn(num_jobs)
    jobs = []
    for index, child in enumerate(children):
        scene = scenes[index // episodes_per_scene]
        jobs.append(EpisodeJob(index=index, scene=scene, seed=int(child.generate_state(1)[0])))

    return jobs


def run_jobs(
    agent: DualMapAgent,
    config: NavConfig,
    jobs: Sequence[EpisodeJob],
    disturbance: Optional[Disturbance] = None,
    keep_snapshots: bool = False,
) -> list[tuple[int, EpisodeResult]]:
    rollout = DualMapRollout(agent, config.rollout, config.env)
    results = []
    for job in jobs:
        env = NavEnv(job.scene, config.env, config.model.max_instruction_length)
        result = rollout.run_episode(
            env, np.random.default_rng(job.seed), disturbance, keep_snapshots=keep_snapshots, seed=job.seed
        )
        results.append((job.index, result))

    return results


@ray.remote(num_cpus=1)
def run_jobs_remote(
    config: NavConfig,
    state_dict: dict[str, torch.Tensor],
    jobs: Sequence[EpisodeJob],
    disturbance: Optional[Disturbance] = None,
    keep_snapshots: bool = False,
) -> list[tuple[int, EpisodeResult]]:
    torch.set_num_threads(1)
    agent = DualMapAgent(config.model)
    agent.load_state_dict(state_dict)
    return run_jobs(agent, config, jobs, disturbance, keep_snapshots)


def with_delta(config: NavConfig, delta: float) -> NavConfig:
    config = copy.deepcopy(config)
    config.rollout.heatmap.delta = delta
    config.rollout.heatmap.post_init()
    return config


@dataclass
class SweepVariant:
    tags: dict[str, Any]
    config: NavConfig
    disturbance: Optional[Disturbance] = None
    retrain: bool = False
    """the variant changes what is trained and needs a fresh agent"""


def sweep_variants(config: NavConfig, sweep: Optional[str] = None) -> list[SweepVariant]:
    sweep = sweep or config.eval.sweep
    variants = []
    if sweep == "delta":
        for delta in config.eval.deltas:
            variants.append(SweepVariant(tags={"delta": delta}, config=with_delta(config, delta)))
    elif sweep == "ablation":
        for expert in config.eval.experts:
            for use_map_fusion in (True, False):
                for use_guidance in (True, False):
                    variant = copy.deepcopy(config)
                    variant.model.expert = expert
                    variant.model.use_map_fusion = use_map_fusion
                    variant.rollout.heatmap.use_guidance = use_guidance
                    variant.deep_post_init()
                    tags = {"expert": expert, "mgaf": use_map_fusion, "vgwg": use_guidance}
                    variants.append(SweepVariant(tags=tags, config=variant, retrain=True))
    elif sweep == "disturbance":
        for kind in config.eval.disturbance_kinds:
            for level in config.eval.disturbance_levels:
                disturbance = Disturbance(kind, level, seed=config.env.disturbance.seed)
                tags = {"disturbance": kind, "level": level}
                variants.append(SweepVariant(tags=tags, config=config, disturbance=disturbance))
    else:
        raise NotImplementedError(f"Unknown sweep kind: {sweep}, support {SWEEP_KINDS}.")

    return variants


@dataclass
class EvalOutput:
    report: MetricsReport
    results: list[EpisodeResult] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return not any(result.record.failed for result in self.results)

    def episode_samples(self, num_samples: int) -> list[EpisodeSample]:
        samples = []
        for result, metrics in zip(self.results[:num_samples], self.report.episodes):
            samples.append(
                EpisodeSample(
                    instruction=detokenize(result.record.instruction),
                    stop_reason=result.record.stop_reason,
                    navigation_error=metrics.navigation_error,
                    success=metrics.success,
                )
            )

        return samples


class Evaluator:
    def __init__(self, config: NavConfig, agent: DualMapAgent):
        self.config = config
        self.agent = agent

    def evaluate(
        self,
        scenes: Sequence[Scene],
        config: Optional[NavConfig] = None,
        disturbance: Optional[Disturbance] = None,
        tags: Optional[dict[str, Any]] = None,
        keep_snapshots: Optional[bool] = None,
    ) -> EvalOutput:
        config = config or self.config
        disturbance = disturbance if disturbance is not None else disturbance_from_config(config)
        keep_snapshots = config.eval.render if keep_snapshots is None else keep_snapshots
        jobs = make_jobs(scenes, config.eval.episodes_per_scene, config.trainer.seed)
        num_workers = min(config.trainer.num_workers, len(jobs))
        if num_workers > 1:
            if not ray.is_initialized():
                ray.init(num_cpus=num_workers, include_dashboard=False)

            state_dict = {name: tensor.detach().cpu() for name, tensor in self.agent.state_dict().items()}
            state_ref = ray.put(state_dict)
            futures = [
                run_jobs_remote.remote(config, state_ref, jobs[rank::num_workers], disturbance, keep_snapshots)
                for rank in range(num_workers)
            ]
            indexed = [item for chunk in ray.get(futures) for item in chunk]
        else:
            indexed = run_jobs(self.agent, config, jobs, disturbance, keep_snapshots)

        results = [result for _, result in sorted(indexed, key=lambda item: item[0])]
        scene_map = {scene.name: scene for scene in scenes}
        report = compute_metrics(
            [result.record for result in results],
            scene_map,
            success_radius=config.env.success_radius,
            config_hash=config.config_hash(),
        )
        report.tags = dict(tags or {})
        return EvalOutput(report=report, results=results)

    def write_outputs(self, output: EvalOutput, out_dir: str, scenes: Sequence[Scene], name: str = "eval") -> None:
        """`{name}_records.jsonl`, `{name}_report.json` and, when enabled, renders under `renders/`."""
        os.makedirs(out_dir, exist_ok=True)
        write_records([result.record for result in output.results], os.path.join(out_dir, f"{name}_records.jsonl"))
        with open(os.path.join(out_dir, f"{name}_report.json"), "w", encoding="utf-8") as f:
            json.dump({**output.report.to_dict(), "report_hash": output.report.digest()}, f, indent=2)

        print(f"Report of {output.report.counts.get('episodes', 0)} episodes written to {out_dir}.")
        if self.config.eval.render:
            self.render(output, os.path.join(out_dir, "renders", name), scenes)

    def render(self, output: EvalOutput, render_dir: str, scenes: Sequence[Scene]) -> None:
        os.makedirs(render_dir, exist_ok=True)
        scene_map = {scene.name: scene for scene in scenes}
        spec = self.config.rollout.grid_spec()
        for index, result in enumerate(output.results[: self.config.eval.render_episodes]):
            record = result.record
            scene = scene_map[record.scene]
            prefix = os.path.join(render_dir, f"{index:03d}_{record.scene}")
            overlay = None
            for step, snapshot in zip(record.steps, result.snapshots):
                save_heatmap_pgm(snapshot.heatmap.values, f"{prefix}_t{step.t:02d}_heatmap.pgm")
                save_heatmap_pgm(snapshot.fused.values, f"{prefix}_t{step.t:02d}_fused.pgm")
                positions = ego_to_world(subcell_centers(spec).reshape(-1, 2), Pose(*step.pose))
                overlay = (snapshot.fused.values, positions)

            image = render_topdown(
                scene.bounds,
                scene.obstacles,
                [pose[:2] for pose in record.trajectory],
                record.goal,
                pixels_per_meter=int(self.config.eval.pixels_per_meter),
                overlay=overlay,
                success_radius=self.config.env.success_radius,
            )
            save_ppm(image, f"{prefix}_topdown.ppm")


def run_sweep(
    config: NavConfig,
    agent: DualMapAgent,
    scenes: Sequence[Scene],
    train_fn: Callable[[NavConfig], DualMapAgent],
    sweep: Optional[str] = None,
    out_dir: Optional[str] = None,
) -> list[EvalOutput]:
    """Evaluate every variant of a sweep. Variants that change training switches are retrained with
    `train_fn` from the same seed and budget; the others reuse `agent`.
    """
    outputs = []
    for variant in sweep_variants(config, sweep):
        print(f"Sweep variant {variant.tags}.")
        variant_agent = train_fn(variant.config) if variant.retrain else agent
        evaluator = Evaluator(variant.config, variant_agent)
        output = evaluator.evaluate(scenes, variant.config, variant.disturbance, tags=variant.tags)
        outputs.append(output)
        if out_dir is not None:
            name = "_".join(f"{key}-{value}" for key, value in variant.tags.items())
            evaluator.write_outputs(output, out_dir, scenes, name=name)

    if out_dir is not None:
        rows = [{**output.report.tags, **output.report.aggregate} for output in outputs]
        with open(os.path.join(out_dir, "sweep.json"), "w", encoding="utf-8") as f:
            json.dump({"sweep": sweep or config.eval.sweep, "rows": rows}, f, indent=2)

    return outputs
