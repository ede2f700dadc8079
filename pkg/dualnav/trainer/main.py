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
Command line entry point.

    python -m dualnav.trainer.main <verb> [--config FILE] [--scenes DIR] [--ckpt DIR] [--out DIR] [--seed N]
        [--delta D] [--disturb KIND:LEVEL] [--ablate mgaf|vgwg|expert=MODE] [key=value ...]

Trailing `key=value` pairs override config fields, e.g. `trainer.pretrain_iterations=100`.
"""

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from omegaconf import OmegaConf

from ..envs.disturbance import Disturbance
from ..envs.scene_generator import generate_scenes
from ..models.agent import DualMapAgent
from ..models.config import EXPERT_MODES
from ..utils.checkpoint import CheckpointManager, find_latest_ckpt
from ..utils.py_functional import convert_dict_to_str
from ..workers.rollout import read_records
from .config import NavConfig
from .evaluator import Evaluator, load_split, run_sweep
from .metrics import compute_metrics
from .nav_trainer import NavTrainer


VERBS = ("gen-scenes", "pretrain", "finetune", "eval", "sweep", "render", "metrics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualnav", description="Dual-map navigation agent.")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", default=None, help="YAML or JSON config file")
    parser.add_argument("--scenes", default=None, help="scene directory holding `train/` and `eval/`")
    parser.add_argument("--ckpt", default=None, help="checkpoint directory `global_step_*`")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--delta", type=float, default=None, help="guidance heatmap weight")
    parser.add_argument("--disturb", default=None, help="`kind:level`, e.g. fov_loss:0.5")
    parser.add_argument("--ablate", action="append", default=[], help="`mgaf`, `vgwg` or `expert=MODE`")
    parser.add_argument("--records", default=None, help="episode records JSONL for the `metrics` verb")
    parser.add_argument("overrides", nargs="*", help="config overrides `key=value`")
    return parser


def apply_ablation(config: NavConfig, ablation: str) -> None:
    if ablation == "mgaf":
        config.model.use_map_fusion = False
    elif ablation == "vgwg":
        config.rollout.heatmap.use_guidance = False
    elif ablation.startswith("expert="):
        expert = ablation.partition("=")[2]
        if expert not in EXPERT_MODES:
            raise ValueError(f"Unknown expert `{expert}`, support {EXPERT_MODES}.")

        config.model.expert = expert
    else:
        raise ValueError(f"Unknown ablation `{ablation}`, support `mgaf`, `vgwg`, `expert=...`.")


def load_config(args: argparse.Namespace) -> NavConfig:
    default_config = OmegaConf.structured(NavConfig())
    if args.config is not None:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"Config file not found: {args.config}.")

        default_config = OmegaConf.merge(default_config, OmegaConf.load(args.config))

    nav_config = OmegaConf.merge(default_config, OmegaConf.from_dotlist(list(args.overrides)))
    nav_config: NavConfig = OmegaConf.to_object(nav_config)
    if args.scenes is not None:
        nav_config.trainer.scene_dir = args.scenes

    if args.seed is not None:
        nav_config.trainer.seed = args.seed

    if args.delta is not None:
        nav_config.rollout.heatmap.delta = args.delta

    if args.disturb is not None:
        disturbance = Disturbance.parse(args.disturb)
        nav_config.env.disturbance.kind = disturbance.kind.value
        nav_config.env.disturbance.level = disturbance.level

    for ablation in args.ablate:
        apply_ablation(nav_config, ablation)

    if args.ckpt is not None:
        if not os.path.isdir(args.ckpt):
            raise FileNotFoundError(f"Checkpoint directory not found: {args.ckpt}.")

        nav_config.trainer.load_checkpoint_path = args.ckpt

    if args.out is not None and args.verb in ("pretrain", "finetune"):
        nav_config.trainer.save_checkpoint_path = args.out

    nav_config.deep_post_init()
    return nav_config


def resolve_checkpoint(config: NavConfig) -> str:
    if config.trainer.load_checkpoint_path is not None:
        return config.trainer.load_checkpoint_path

    path, _ = find_latest_ckpt(config.trainer.save_checkpoint_path)
    if path is None:
        raise FileNotFoundError(f"No checkpoint given and none found in {config.trainer.save_checkpoint_path}.")

    return path


def load_agent(config: NavConfig) -> DualMapAgent:
    agent = DualMapAgent(config.model)
    extra_state = CheckpointManager(agent).load_checkpoint(resolve_checkpoint(config))
    if extra_state.get("config_hash") not in (None, config.config_hash()):
        print("Warning: the checkpoint was trained with a different config.")

    return agent


def train(config: NavConfig, stages: Sequence[str] = ("pretrain", "finetune")) -> DualMapAgent:
    trainer_config = config.trainer
    train_scenes = load_split(trainer_config.scene_dir, "train", config.env, trainer_config.max_train_scenes)
    val_scenes = None
    if trainer_config.val_freq > 0:
        val_scenes = load_split(trainer_config.scene_dir, config.eval.split, config.env, config.eval.max_scenes)

    trainer = NavTrainer(config, train_scenes, val_scenes)
    trainer.fit(stages)
    return trainer.agent


def retrain(config: NavConfig, out_dir: str):
    """Fresh training for sweep variants, saved under `out_dir/<variant hash>`."""

    def train_fn(variant: NavConfig) -> DualMapAgent:
        variant.trainer.save_checkpoint_path = os.path.join(out_dir, "agents", variant.config_hash()[:12])
        variant.trainer.load_checkpoint_path = None
        return train(variant)

    return train_fn


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_intermixed_args(argv)
    config = load_config(args)
    print(json.dumps(config.to_dict(), indent=2))
    if args.verb == "gen-scenes":
        out_dir = args.out or config.trainer.scene_dir
        env = config.env
        generate_scenes(out_dir, env.scene_gen, config.trainer.seed, env.agent_radius, env.raster_res)
        return 0

    if args.verb == "pretrain":
        train(config, stages=("pretrain",))
        return 0

    if args.verb == "finetune":
        if config.trainer.load_checkpoint_path is None:
            raise FileNotFoundError("`finetune` needs a pretrained checkpoint, pass --ckpt.")

        train(config, stages=("finetune",))
        return 0

    out_dir = args.out or os.path.join(config.trainer.save_checkpoint_path, "eval")
    if args.verb == "metrics":
        records_path = args.records or os.path.join(out_dir, "eval_records.jsonl")
        if not os.path.exists(records_path):
            raise FileNotFoundError(f"Episode records not found: {records_path}.")

        records = read_records(records_path)
        scenes = {}
        if args.scenes is not None:
            scenes = {scene.name: scene for scene in load_split(args.scenes, config.eval.split, config.env)}

        report = compute_metrics(records, scenes, config.env.success_radius, config.config_hash())
        print(convert_dict_to_str(report.aggregate))
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics_report.json"), "w", encoding="utf-8") as f:
            json.dump({**report.to_dict(), "report_hash": report.digest()}, f, indent=2)

        return 0 if report.counts["failed"] == 0 else 1

    scenes = load_split(config.trainer.scene_dir, config.eval.split, config.env, config.eval.max_scenes)
    agent = load_agent(config)
    if args.verb == "sweep":
        outputs = run_sweep(config, agent, scenes, retrain(config, out_dir), out_dir=out_dir)
        for output in outputs:
            print(f"{output.report.tags}: {convert_dict_to_str(output.report.aggregate)}")

        return 0 if all(output.completed for output in outputs) else 1

    if args.verb == "render":
        config.eval.render = True

    evaluator = Evaluator(config, agent)
    output = evaluator.evaluate(scenes)
    evaluator.write_outputs(output, out_dir, scenes)
    print(convert_dict_to_str(output.report.aggregate))
    return 0 if output.completed else 1


if __name__ == "__main__":
    sys.exit(main())
