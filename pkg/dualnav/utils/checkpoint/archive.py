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
Flat binary tensor archive: `params.bin` holds every tensor back to back in little-endian order, and
`manifest.json` records the format version, the dtype and, per tensor, its name, shape, byte offset
and element count.
"""

import json
import os
from typing import Any

import numpy as np
import torch

from ..torch_dtypes import PrecisionType


ARCHIVE_VERSION = 1
PARAMS_NAME = "params.bin"
MANIFEST_NAME = "manifest.json"


def save_archive(state_dict: dict[str, torch.Tensor], path: str, precision: str = "fp32") -> dict[str, Any]:
    """Write a state dict into `path/params.bin` + `path/manifest.json` and return the manifest."""
    np_dtype = PrecisionType.to_numpy(precision)
    os.makedirs(path, exist_ok=True)
    tensors, offset = [], 0
    with open(os.path.join(path, PARAMS_NAME), "wb") as f:
        for name in sorted(state_dict.keys()):
            tensor = state_dict[name]
            if not torch.is_floating_point(tensor):
                raise ValueError(f"Only floating tensors can be archived, got {tensor.dtype} for {name}.")

            array = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype=np_dtype)
            payload = array.tobytes(order="C")
            f.write(payload)
            tensors.append({"name": name, "shape": list(array.shape), "offset": offset, "numel": int(array.size)})
            offset += len(payload)

    manifest = {"format_version": ARCHIVE_VERSION, "dtype": np_dtype.name, "tensors": tensors}
    with open(os.path.join(path, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=2)

    return manifest


def read_manifest(path: str) -> dict[str, Any]:
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"Checkpoint manifest not found: {manifest_path}.")

    with open(manifest_path) as f:
        manifest = json.load(f)

    if manifest.get("format_version") != ARCHIVE_VERSION:
        raise ValueError(f"Unsupported archive version: {manifest.get('format_version')}.")

    return manifest


def load_archive(path: str) -> dict[str, torch.Tensor]:
    """Read an archive back into a state dict. Tensors keep the archived dtype."""
    manifest = read_manifest(path)
    np_dtype = np.dtype(manifest["dtype"]).newbyteorder("<")
    with open(os.path.join(path, PARAMS_NAME), "rb") as f:
        buffer = f.read()

    state_dict = {}
    for entry in manifest["tensors"]:
        end = entry["offset"] + entry["numel"] * np_dtype.itemsize
        if end > len(buffer):
            raise ValueError(f"Archive is truncated at tensor {entry['name']}.")

        array = np.frombuffer(buffer, dtype=np_dtype, count=entry["numel"], offset=entry["offset"])
        state_dict[entry["name"]] = torch.from_numpy(array.reshape(entry["shape"]).astype(np_dtype.newbyteorder("=")))

    return state_dict
