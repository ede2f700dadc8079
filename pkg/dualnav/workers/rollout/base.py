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

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from ...envs.disturbance import Disturbance
from ...envs.simulator import NavEnv
from .record import EpisodeResult


__all__ = ["BaseRollout"]


class BaseRollout(ABC):
    @abstractmethod
    def run_episode(
        self, env: NavEnv, rng: np.random.Generator, disturbance: Optional[Disturbance] = None, **kwargs
    ) -> EpisodeResult:
        """Run one episode"""
        pass
