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
Figure-style outputs: float-grid text dumps, portable grey/colour pixel maps of heatmaps and top-down
trajectory renders.
"""

import io
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from PIL import Image, ImageDraw


def dump_float_grid(values: NDArray) -> str:
    """Serialize a U x V (x D) array: one header line "U V D", then one line of V * D values per row."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[..., None]

    if values.ndim != 3:
        raise ValueError(f"Expected a U x V or U x V x D array, got shape {values.shape}.")

    rows, cols, dims = values.shape
    buffer = io.StringIO()
    buffer.write(f"{rows} {cols} {dims}\n")
    np.savetxt(buffer, values.reshape(rows, cols * dims), fmt="%.17g")
    return buffer.getvalue()


def load_float_grid(text: str) -> NDArray:
    header, _, body = text.partition("\n")
    rows, cols, dims = (int(x) for x in header.split())
    values = np.loadtxt(io.StringIO(body), dtype=np.float64, ndmin=2)
    if values.shape != (rows, cols * dims):
        raise ValueError(f"Float grid body has shape {values.shape}, header says {rows}x{cols}x{dims}.")

    return values.reshape(rows, cols, dims)


def to_grey(values: NDArray) -> NDArray:
    """Min-max scale a 2D field to uint8. Constant fields map to 0."""
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high - low <= 0:
        return np.zeros(values.shape, dtype=np.uint8)

    return np.round(255.0 * (values - low) / (high - low)).astype(np.uint8)


def save_heatmap_pgm(values: NDArray, path: str, scale: int = 4) -> None:
    """Binary grey pixel map (P5). Row 0 of the heatmap (farthest behind) is drawn at the bottom."""
    image = Image.fromarray(np.flipud(to_grey(values)), mode="L")
    if scale > 1:
        image = image.resize((image.width * scale, image.height * scale), Image.NEAREST)

    image.save(path, format="PPM")


def render_topdown(
    bounds: Sequence[float],
    obstacles: Sequence[Sequence[float]],
    trajectory: Sequence[Sequence[float]],
    goal: Sequence[float],
    pixels_per_meter: int = 20,
    overlay: Optional[tuple[NDArray, NDArray]] = None,
    success_radius: float = 3.0,
) -> Image.Image:
    """Draw a scene from above: free space white, obstacles grey, trajectory blue, goal and its radius red.

    `overlay` is an optional (heatmap, world positions of its sub-cells) pair tinted green.
    """
    width, height = bounds
    image = Image.new("RGB", (int(round(width * pixels_per_meter)), int(round(height * pixels_per_meter))), "white")
    draw = ImageDraw.Draw(image)

    def to_pixel(x: float, y: float) -> tuple[float, float]:
        return x * pixels_per_meter, (height - y) * pixels_per_meter

    if overlay is not None:
        heat, positions = overlay
        grey = to_grey(heat).reshape(-1)
        for level, (x, y) in zip(grey, np.asarray(positions).reshape(-1, 2)):
            if level > 0 and 0 <= x <= width and 0 <= y <= height:
                px, py = to_pixel(x, y)
                draw.point((px, py), fill=(255 - int(level), 255, 255 - int(level)))

    for x, y, w, h in obstacles:
        left, top = to_pixel(x, y + h)
        right, bottom = to_pixel(x + w, y)
        draw.rectangle([left, top, right, bottom], fill=(128, 128, 128))

    gx, gy = to_pixel(*goal)
    radius = success_radius * pixels_per_meter
    draw.ellipse([gx - radius, gy - radius, gx + radius, gy + radius], outline=(220, 0, 0))
    draw.ellipse([gx - 3, gy - 3, gx + 3, gy + 3], fill=(220, 0, 0))
    if len(trajectory) >= 2:
        draw.line([to_pixel(x, y) for x, y in trajectory], fill=(0, 0, 255), width=2)

    if len(trajectory) >= 1:
        sx, sy = to_pixel(*trajectory[0])
        draw.ellipse([sx - 3, sy - 3, sx + 3, sy + 3], fill=(0, 160, 0))

    return image


def save_ppm(image: Image.Image, path: str) -> None:
    """Binary colour pixel map (P6)."""
    image.convert("RGB").save(path, format="PPM")
