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
Run trackers for training losses, timings and validation metrics: console, tensorboard and wandb.
"""

import os
from abc import ABC, abstractmethod
from typing import Any, Optional, Union

from ..py_functional import convert_dict_to_str, flatten_dict, is_package_available, unflatten_dict
from .episode_logger import AggregateEpisodeLogger, EpisodeSample


if is_package_available("tensorboard"):
    from torch.utils.tensorboard import SummaryWriter


if is_package_available("wandb"):
    import wandb  # type: ignore


def _run_names(config: dict[str, Any]) -> tuple[str, str]:
    trainer = config.get("trainer", {})
    return trainer.get("project_name", "dualnav"), trainer.get("experiment_name", "demo")


class Logger(ABC):
    @abstractmethod
    def __init__(self, config: dict[str, Any]) -> None: ...

    @abstractmethod
    def log(self, data: dict[str, Any], step: int) -> None: ...

    def finish(self) -> None:
        pass


class ConsoleLogger(Logger):
    def __init__(self, config: dict[str, Any]) -> None:
        if config:
            print("Navigation config\n" + convert_dict_to_str(config))

    def log(self, data: dict[str, Any], step: int) -> None:
        print(f"Iteration {step}\n" + convert_dict_to_str(unflatten_dict(data)))


class TensorBoardLogger(Logger):
    def __init__(self, config: dict[str, Any]) -> None:
        project_name, experiment_name = _run_names(config)
        tensorboard_dir = os.path.join(os.getenv("TENSORBOARD_DIR", "tensorboard_log"), project_name, experiment_name)
        os.makedirs(tensorboard_dir, exist_ok=True)
        print(f"Saving tensorboard log to {tensorboard_dir}.")
        self.writer = SummaryWriter(tensorboard_dir)
        # hparams only take scalars and strings; tuples such as the logger list are stringified
        hparams = {
            key: value if isinstance(value, (int, float, str, bool)) else str(value)
            for key, value in flatten_dict(config).items()
        }
        self.writer.add_hparams(hparam_dict=hparams, metric_dict={"val/sr": 0.0})

    def log(self, data: dict[str, Any], step: int) -> None:
        for key, value in data.items():
            self.writer.add_scalar(key, value, step)

    def finish(self) -> None:
        self.writer.close()


class WandbLogger(Logger):
    def __init__(self, config: dict[str, Any]) -> None:
        project_name, experiment_name = _run_names(config)
        wandb.init(project=project_name, name=experiment_name, config=config)

    def log(self, data: dict[str, Any], step: int) -> None:
        wandb.log(data=data, step=step)

    def finish(self) -> None:
        wandb.finish()


LOGGERS = {
    "console": ConsoleLogger,
    "tensorboard": TensorBoardLogger,
    "wandb": WandbLogger,
}


class Tracker:
    """Fans run metrics out to every configured backend, and a few evaluated episodes to the episode loggers."""

    def __init__(self, loggers: Union[str, list[str]] = "console", config: Optional[dict[str, Any]] = None):
        if isinstance(loggers, str):
            loggers = [loggers]

        self.loggers: list[Logger] = []
        unsupported = [logger for logger in loggers if logger not in LOGGERS]
        if unsupported:
            raise ValueError(f"Loggers {unsupported} are not supported, choose from {sorted(LOGGERS)}.")

        config = config or {}
        self.loggers = [LOGGERS[logger](config) for logger in loggers]
        self.episode_logger = AggregateEpisodeLogger(loggers)

    def log(self, data: dict[str, Any], step: int) -> None:
        for logger in self.loggers:
            logger.log(data=data, step=step)

    def log_episodes(self, samples: list[EpisodeSample], step: int) -> None:
        self.episode_logger.log(samples, step)

    def finish(self) -> None:
        for logger in self.loggers:
            logger.finish()

        self.loggers = []

    def __del__(self):
        self.finish()
