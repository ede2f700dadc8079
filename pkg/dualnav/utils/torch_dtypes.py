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

import numpy as np
import torch


FLOAT_LIST = ["fp32", "float32"]
DOUBLE_LIST = ["fp64", "float64"]


class PrecisionType:
    """Type of precision used by the agent parameters."""

    @staticmethod
    def is_fp32(precision: str) -> bool:
        return precision in FLOAT_LIST

    @staticmethod
    def is_fp64(precision: str) -> bool:
        return precision in DOUBLE_LIST

    @staticmethod
    def to_dtype(precision: str) -> torch.dtype:
        if precision in FLOAT_LIST:
            return torch.float32
        elif precision in DOUBLE_LIST:
            return torch.float64
        else:
            raise RuntimeError(f"Unexpected precision: {precision}")

    @staticmethod
    def to_str(precision: torch.dtype) -> str:
        if precision == torch.float32:
            return "float32"
        elif precision == torch.float64:
            return "float64"
        else:
            raise RuntimeError(f"Unexpected precision: {precision}")

    @staticmethod
    def to_numpy(precision: str) -> np.dtype:
        """Numpy dtype used when a tensor archive is written or read."""
        if precision in FLOAT_LIST:
            return np.dtype("<f4")
        elif precision in DOUBLE_LIST:
            return np.dtype("<f8")
        else:
            raise RuntimeError(f"Unexpected precision: {precision}")
