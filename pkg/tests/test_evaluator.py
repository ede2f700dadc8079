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

import json
import os

import pytest
import torch

from dualnav.envs.disturbance import Disturbance
from dualnav.envs.scene import save_scene, scene_from_dict
from dualnav.models import DualMapAgent
from dualnav.trainer import NavConfig
from dualnav.trainer.evaluator import Evaluator, make_jobs, run_sweep, sweep_variants
from dualnav.trainer.main import build_parser, load_config, main
from dualnav.utils.checkpoint import CheckpointManager
from dualnav.workers.rollout import EpisodeRecord, read_records, write_records
from dualnav.workers.rollout.record import MAX_STEPS, STOP_ACTION


def _scene(name: str, goal_y: float):
    return scene_from_dict(
        {
            "version": 1,
            "bounds": [8.0, 8.0],
            "obstacles": [[3.5, 1.0, 0.3, 2.0]],
            "landmarks": [{"label": "chair", "pos": [7.0, goal_y], "r": 0.3}],
            "start": [1.5, 4.0, 0.0],
            "goal": [6.5, goal_y],
            "seed": len(name),
        },
        name=name,
    )


@pytest.fixture
def config(tmp_path) -> NavConfig:
    config = NavConfig()
    config.rollout.max_steps = 2
    config.eval.deltas = (0.0, 1e-4)
    config.trainer.save_checkpoint_path = str(tmp_path / "ckpt")
    config.deep_post_init()
    return config


@pytest.fixture
def scenes():
    return [_scene("left", 4.0), _scene("right", 6.0)]


@pytest.fixture
def agent(config):
    torch.manual_seed(0)
    return DualMapAgent(config.model)


def test_make_jobs(scenes):
    jobs = make_jobs(scenes, episodes_per_scene=3, master_seed=5)
    assert [job.index for job in jobs] == list(range(6))
    assert [job.scene.name for job in jobs] == ["left"] * 3 + ["right"] * 3
    assert len({job.seed for job in jobs}) == 6
    assert [job.seed for job in make_jobs(scenes, 3, 5)] == [job.seed for job in jobs]
    assert [job.seed for job in make_jobs(scenes, 3, 6)] != [job.seed for job in jobs]
    # a prefix of the scene list keeps the seeds of its episodes
    assert [job.seed for job in make_jobs(scenes[:1], 3, 5)] == [job.seed for job in jobs[:3]]


def test_delta_sweep():
    config = NavConfig()
    config.deep_post_init()
    variants = sweep_variants(config, "delta")
    assert len(variants) == 4
    assert [variant.tags["delta"] for variant in variants] == [0.0, 1e-6, 1e-5, 1e-4]
    assert [variant.config.rollout.heatmap.delta for variant in variants] == [0.0, 1e-6, 1e-5, 1e-4]
    assert not any(variant.retrain for variant in variants)
    assert config.rollout.heatmap.delta == NavConfig().rollout.heatmap.delta


def test_ablation_sweep():
    config = NavConfig()
    config.deep_post_init()
    variants = sweep_variants(config, "ablation")
    assert len(variants) == 12
    assert all(variant.retrain for variant in variants)
    assert len({variant.config.config_hash() for variant in variants}) == 12
    for variant in variants:
        assert variant.config.model.expert == variant.tags["expert"]
        assert variant.config.model.use_map_fusion == variant.tags["mgaf"]
        if not variant.tags["vgwg"]:
            assert variant.config.algorithm.gahp_weight == 0.0


def test_disturbance_sweep():
    config = NavConfig()
    config.deep_post_init()
    variants = sweep_variants(config, "disturbance")
    assert len(variants) == len(config.eval.disturbance_kinds) * len(config.eval.disturbance_levels)
    assert {variant.disturbance.kind.value for variant in variants} == set(config.eval.disturbance_kinds)
    assert all(variant.disturbance.level == variant.tags["level"] for variant in variants)


def test_unknown_sweep():
    with pytest.raises(NotImplementedError, match="Unknown sweep kind"):
        sweep_variants(NavConfig(), "weather")


def test_evaluate_is_reproducible(config, agent, scenes):
    evaluator = Evaluator(config, agent)
    first = evaluator.evaluate(scenes)
    second = evaluator.evaluate(scenes)
    assert first.report.counts["episodes"] == 2
    assert first.completed
    assert [result.record.scene for result in first.results] == ["left", "right"]
    assert first.report.digest() == second.report.digest()
    assert first.report.config_hash == config.config_hash()
    for result in first.results:
        assert result.record.trajectory
        assert result.record.stop_reason in (STOP_ACTION, MAX_STEPS)

    samples = first.episode_samples(1)
    assert len(samples) == 1
    assert "chair" in samples[0].instruction


def test_write_outputs(config, agent, scenes, tmp_path):
    config.eval.render = True
    config.eval.render_episodes = 1
    evaluator = Evaluator(config, agent)
    output = evaluator.evaluate(scenes)
    out_dir = str(tmp_path / "eval")
    evaluator.write_outputs(output, out_dir, scenes)

    with open(os.path.join(out_dir, "eval_report.json"), encoding="utf-8") as f:
        report = json.load(f)

    assert report["report_hash"] == output.report.digest()
    assert report["counts"]["episodes"] == 2
    records = read_records(os.path.join(out_dir, "eval_records.jsonl"))
    assert [record.to_dict() for record in records] == [result.record.to_dict() for result in output.results]
    assert os.path.exists(os.path.join(out_dir, "renders", "eval", "000_left_topdown.ppm"))
    assert os.path.exists(os.path.join(out_dir, "renders", "eval", "000_left_t00_heatmap.pgm"))
    assert not os.path.exists(os.path.join(out_dir, "renders", "eval", "001_right_topdown.ppm"))


def test_run_sweep(config, agent, scenes, tmp_path):
    def train_fn(_):
        raise AssertionError("a delta sweep never retrains")

    out_dir = str(tmp_path / "sweep")
    outputs = run_sweep(config, agent, scenes, train_fn, sweep="delta", out_dir=out_dir)
    assert [output.report.tags for output in outputs] == [{"delta": 0.0}, {"delta": 1e-4}]
    with open(os.path.join(out_dir, "sweep.json"), encoding="utf-8") as f:
        sweep = json.load(f)

    assert sweep["sweep"] == "delta"
    assert len(sweep["rows"]) == 2
    assert set(sweep["rows"][0]) == {"delta", "tl", "ne", "osr", "sr", "spl"}
    assert os.path.exists(os.path.join(out_dir, "delta-0.0001_report.json"))


def test_load_config(tmp_path):
    config_path = tmp_path / "config.yaml"
    config_path.write_text("rollout:\n  max_steps: 5\ntrainer:\n  seed: 3\n")
    args = build_parser().parse_intermixed_args(
        ["eval", "--config", str(config_path), "--seed", "9", "--disturb", "fov_loss:0.5", "--ablate", "mgaf",
         "--ablate", "expert=grid", "--delta", "1e-5", "model.hidden_dim=16"]
    )
    config = load_config(args)
    assert config.rollout.max_steps == 5
    assert config.trainer.seed == 9
    assert config.env.disturbance.kind == "fov_loss"
    assert config.env.disturbance.level == 0.5
    assert not config.model.use_map_fusion
    assert config.model.expert == "grid"
    assert config.rollout.heatmap.delta == 1e-5
    assert config.model.hidden_dim == 16
    assert config.env.sensor.feature_dim == 16


@pytest.mark.parametrize(
    "argv,error",
    [
        (["eval", "--config", "missing.yaml"], FileNotFoundError),
        (["eval", "--ckpt", "missing_ckpt"], FileNotFoundError),
        (["eval", "--ablate", "memory"], ValueError),
        (["eval", "--ablate", "expert=oracle"], ValueError),
        (["eval", "--disturb", "fog:0.5"], ValueError),
        (["eval", "--disturb", "fov_loss:2"], ValueError),
    ],
)
def test_load_config_errors(tmp_path, monkeypatch, argv, error):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(error):
        load_config(build_parser().parse_intermixed_args(argv))


def test_metrics_verb(tmp_path):
    def record(stop_reason, failed):
        return EpisodeRecord(
            scene="room",
            seed=0,
            instruction=[1],
            goal=[0.0, 0.0],
            geodesic_length=4.0,
            trajectory=[[4.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            stop_reason=stop_reason,
            failed=failed,
        )

    records_path = str(tmp_path / "records.jsonl")
    write_records([record(STOP_ACTION, False), record(MAX_STEPS, False)], records_path)
    out_dir = str(tmp_path / "out")
    assert main(["metrics", "--records", records_path, "--out", out_dir]) == 0
    with open(os.path.join(out_dir, "metrics_report.json"), encoding="utf-8") as f:
        report = json.load(f)

    assert report["aggregate"]["sr"] == pytest.approx(0.5)
    assert report["aggregate"]["osr"] == pytest.approx(1.0)

    write_records([record(STOP_ACTION, True)], records_path)
    assert main(["metrics", "--records", records_path, "--out", out_dir]) == 1
    with pytest.raises(FileNotFoundError):
        main(["metrics", "--records", str(tmp_path / "missing.jsonl"), "--out", out_dir])


def test_gen_scenes_verb(tmp_path):
    out_dir = str(tmp_path / "scenes")
    argv = ["gen-scenes", "--out", out_dir, "env.scene_gen.num_per_family=2", "env.scene_gen.num_train_per_family=1"]
    assert main(argv) == 0
    assert sorted(os.listdir(out_dir)) == ["eval", "train"]
    train_files = sorted(os.listdir(os.path.join(out_dir, "train")))
    assert train_files
    assert all(name.endswith(".json") for name in train_files)


def test_eval_verb(tmp_path, config, agent, scenes):
    scene_dir = tmp_path / "scenes" / "eval"
    scene_dir.mkdir(parents=True)
    for scene in scenes:
        save_scene(scene, str(scene_dir / f"{scene.name}.json"))

    ckpt_dir = tmp_path / "ckpt" / "global_step_1"
    CheckpointManager(agent).save_checkpoint(str(ckpt_dir), extra_state={"config_hash": config.config_hash()})
    out_dir = str(tmp_path / "out")
    argv = ["eval", "--scenes", str(tmp_path / "scenes"), "--ckpt", str(ckpt_dir), "--out", out_dir]
    assert main(argv + ["rollout.max_steps=2"]) == 0
    assert os.path.exists(os.path.join(out_dir, "eval_report.json"))


@pytest.mark.parametrize("kind", ["fov_loss", "local_noise", "memory_decay"])
def test_zero_level_disturbance_is_identity(config, agent, scenes, kind):
    evaluator = Evaluator(config, agent)
    clean = evaluator.evaluate(scenes)
    disturbed = evaluator.evaluate(scenes, disturbance=Disturbance(kind, 0.0))
    assert disturbed.report.digest() == clean.report.digest()


@pytest.mark.slow
def test_disturbance_sweep_verb(tmp_path, config, agent, scenes):
    scene_dir = tmp_path / "scenes" / "eval"
    scene_dir.mkdir(parents=True)
    for scene in scenes:
        save_scene(scene, str(scene_dir / f"{scene.name}.json"))

    ckpt_dir = tmp_path / "ckpt" / "global_step_1"
    CheckpointManager(agent).save_checkpoint(str(ckpt_dir), extra_state={"config_hash": config.config_hash()})
    out_dir = str(tmp_path / "sweep")
    argv = ["sweep", "--scenes", str(tmp_path / "scenes"), "--ckpt", str(ckpt_dir), "--out", out_dir]
    assert main(argv + ["eval.sweep=disturbance", "rollout.max_steps=2"]) == 0
    with open(os.path.join(out_dir, "sweep.json"), encoding="utf-8") as f:
        rows = json.load(f)["rows"]

    assert len(rows) == len(config.eval.disturbance_kinds) * len(config.eval.disturbance_levels)
    for row in rows:
        assert row["spl"] <= row["sr"] <= row["osr"]

    clean = [{k: v for k, v in row.items() if k != "disturbance"} for row in rows if row["level"] == 0.0]
    assert len(clean) == len(config.eval.disturbance_kinds)
    assert all(row == clean[0] for row in clean)
