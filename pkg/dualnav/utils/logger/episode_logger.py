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
Loggers for a handful of evaluated episodes per validation round: instruction, stop reason, error, success.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import NamedTuple

from ..py_functional import is_package_available


if is_package_available("wandb"):
    import wandb  # type: ignore


class EpisodeSample(NamedTuple):
    instruction: str
    stop_reason: str
    navigation_error: float
    success: float


@dataclass
class EpisodeLogger(ABC):
    @abstractmethod
    def log(self, samples: list[EpisodeSample], step: int) -> None: ...


@dataclass
class ConsoleEpisodeLogger(EpisodeLogger):
    def log(self, samples: list[EpisodeSample], step: int) -> None:
        for sample in samples:
            print(
                f"[instruction] {sample.instruction}\n[stop_reason] {sample.stop_reason}\n"
                f"[navigation_error] {sample.navigation_error:.3f}\n[success] {sample.success}\n"
            )


@dataclass
class WandbEpisodeLogger(EpisodeLogger):
    def log(self, samples: list[EpisodeSample], step: int) -> None:
        columns = ["step"] + sum(
            [
                [f"instruction_{i + 1}", f"stop_reason_{i + 1}", f"ne_{i + 1}", f"success_{i + 1}"]
                for i in range(len(samples))
            ],
            [],
        )
        if not hasattr(self, "validation_table"):
            self.validation_table = wandb.Table(columns=columns)

        # Workaround for https://github.com/wandb/wandb/issues/2981#issuecomment-1997445737
        new_table = wandb.Table(columns=columns, data=self.validation_table.data)
        row_data = [step]
        for sample in samples:
            row_data.extend(sample)

        new_table.add_data(*row_data)
        wandb.log({"val/episodes": new_table}, step=step)
        self.validation_table = new_table


EPISODE_LOGGERS = {
    "console": ConsoleEpisodeLogger,
    "wandb": WandbEpisodeLogger,
}


class AggregateEpisodeLogger:
    def __init__(self, loggers: list[str]):
        self.loggers: list[EpisodeLogger] = []
        for logger in loggers:
            if logger in EPISODE_LOGGERS:
                self.loggers.append(EPISODE_LOGGERS[logger]())

    def log(self, samples: list[EpisodeSample], step: int) -> None:
        for logger in self.loggers:
            logger.log(samples, step)
