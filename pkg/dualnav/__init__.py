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

import os


__version__ = "0.1.0.dev0"


if os.getenv("DUALNAV_DETERMINISTIC", "1").lower() in ["true", "y", "1"]:
    # episode records are compared bit for bit across runs
    import torch

    torch.use_deterministic_algorithms(True, warn_only=True)
