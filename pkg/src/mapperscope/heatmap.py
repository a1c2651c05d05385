"""Activation heat maps: channel aggregation, normalization, upsampling,
and magenta overlay rendering.

Normalization is per image (min-max), so "hot" always means hot relative to
the rest of that image; a constant grid renders invisible rather than fully
hot. Upsampling is corner-aligned bilinear — alignment conventions differ
silently across ecosystems, so the choice is pinned here and tested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .dataset import SpatialActivation
from .errors import BadParams, DimensionMismatch

AGGREGATION_MODES = ("l2", "sum", "max")
MAGENTA = (255, 0, 170)  # #FF00AA


@dataclass(frozen=True)
class HeatField:
    values: np.ndarray  # (H, W) in [0,1]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise BadParams(f"heat field must be 2-D, got shape {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise BadParams("heat field values must lie in [0,1]")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def aggregate_channels(t: SpatialActivation, mode: str = "l2") -> np.ndarray:
    if mode not in AGGREGATION_MODES:
        raise BadParams(f"mode must be one of {AGGREGATION_MODES}, got {mode!r}")
    v = t.values.astype(np.float64)
    if mode == "l2":
        return np.sqrt(np.sum(v * v, axis=2))
    if mode == "sum":
        return np.sum(v, axis=2)
    return np.max(v, axis=2)


def normalize_field(grid: np.ndarray) -> np.ndarray:
    """(v - min) / (max - min); a constant grid maps to all zeros."""
    g = np.asarray(grid, dtype=np.float64)
    if not np.isfinite(g).all():
        raise BadParams("grid must be finite")
    lo, hi = float(g.min()), float(g.max())
    if hi == lo:
        return np.zeros_like(g)
    return (g - lo) / (hi - lo)


def upsample_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resample; exact pass-through at equal sizes."""
    g = np.asarray(grid, dtype=np.float64)
    h, w = g.shape
    if out_h < 1 or out_w < 1:
        raise BadParams("target dimensions must be >= 1")
    if (h, w) == (out_h, out_w):
        return g.copy()
    ys = np.linspace(0.0, h - 1.0, out_h)
    xs = np.linspace(0.0, w - 1.0, out_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = g[np.ix_(y0, x0)] * (1 - fx) + g[np.ix_(y0, x1)] * fx
    bot = g[np.ix_(y1, x0)] * (1 - fx) + g[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def compute_heat_field(
    t: SpatialActivation, mode: str = "l2", out_h: int | None = None, out_w: int | None = None
) -> HeatField:
    """Aggregate, normalize, and (optionally) upsample to image dimensions."""
    field = normalize_field(aggregate_channels(t, mode))
    if out_h is not None and out_w is not None:
        field = upsample_bilinear(field, out_h, out_w)
    return HeatField(values=field)


def render_overlay(field: HeatField, base_image: Image.Image, alpha: float) -> Image.Image:
    """Blend a magenta ramp over the base image; returns an RGBA image.

    Per pixel the magenta layer has opacity alpha * field value, so a zero
    field (or alpha 0) reproduces the base exactly.
    """
    if not 0.0 <= alpha <= 1.0:
        raise BadParams(f"alpha must lie in [0,1], got {alpha}")
    base = base_image.convert("RGBA")
    if (base.height, base.width) != (field.height, field.width):
        raise DimensionMismatch(
            f"field is {field.height}x{field.width}, image is {base.height}x{base.width}"
        )
    arr = np.asarray(base, dtype=np.float64)
    a = (alpha * field.values)[:, :, None]
    rgb = arr[:, :, :3] * (1.0 - a) + np.array(MAGENTA, dtype=np.float64) * a
    out = np.empty_like(arr, dtype=np.uint8)
    out[:, :, :3] = np.rint(rgb).astype(np.uint8)
    out[:, :, 3] = arr[:, :, 3].astype(np.uint8)
    return Image.fromarray(out, mode="RGBA")
