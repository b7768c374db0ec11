"""Axis-aligned box arithmetic and invertible box-space transforms.

Boxes are corner-encoded ``(x1, y1, x2, y2)`` in continuous pixel units of
the view that owns them. Area is ``(x2 - x1) * (y2 - y1)`` with no +1 pixel
correction. Transforms never clip, so every mapping can be undone exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True, slots=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"box corners out of order: {coords}")

    def __iter__(self) -> Iterator[float]:
        yield self.x1
        yield self.y1
        yield self.x2
        yield self.y2

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @classmethod
    def from_seq(cls, coords: Sequence[float]) -> "Box":
        x1, y1, x2, y2 = coords
        return cls(float(x1), float(y1), float(x2), float(y2))

    def to_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes.

    Two degenerate boxes (union of zero area) have IoU 0 by definition.
    """
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def boxes_to_array(boxes: Sequence[Box]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([tuple(b) for b in boxes], dtype=np.float64)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between ``[N, 4]`` and ``[M, 4]`` corner-encoded arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=(union > 0.0) & (inter > 0.0))
    return np.minimum(out, 1.0)


@dataclass(frozen=True, slots=True)
class AugTransform:
    """Box-space augmentation: optional horizontal flip, isotropic scale, shift.

    The forward map is applied in that order. ``view_width`` is the width of
    the source view (the flip axis); ``view_height`` is kept so a transform
    fully describes the view it was applied to.
    """

    hflip: bool = False
    scale: float = 1.0
    dx: float = 0.0
    dy: float = 0.0
    view_width: float = 1.0
    view_height: float = 1.0

    def __post_init__(self) -> None:
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not (self.view_width > 0.0 and self.view_height > 0.0):
            raise ValueError("view size must be positive")
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise ValueError("translation must be finite")

    @classmethod
    def identity(cls, view_width: float = 1.0, view_height: float = 1.0) -> "AugTransform":
        return cls(False, 1.0, 0.0, 0.0, view_width, view_height)

    @property
    def output_size(self) -> tuple[float, float]:
        return self.view_width * self.scale, self.view_height * self.scale

    def to_dict(self) -> dict:
        return {
            "hflip": self.hflip,
            "scale": self.scale,
            "dx": self.dx,
            "dy": self.dy,
            "view_width": self.view_width,
            "view_height": self.view_height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugTransform":
        return cls(
            bool(d["hflip"]),
            float(d["scale"]),
            float(d["dx"]),
            float(d["dy"]),
            float(d["view_width"]),
            float(d["view_height"]),
        )


def apply_transform(b: Box, t: AugTransform) -> Box:
    x1, x2 = b.x1, b.x2
    if t.hflip:
        x1, x2 = t.view_width - b.x2, t.view_width - b.x1
    s = t.scale
    return Box(s * x1 + t.dx, s * b.y1 + t.dy, s * x2 + t.dx, s * b.y2 + t.dy)


def invert(t: AugTransform) -> AugTransform:
    """Transform that undoes ``t``.

    Undoing ``x' = s * flip(x) + dx`` is again a flip-scale-shift, taken about
    the output view of ``t`` (width ``s * view_width``). The shift changes sign
    only when no flip is involved.
    """
    inv_scale = 1.0 / t.scale
    out_w, out_h = t.output_size
    dx = t.dx * inv_scale if t.hflip else -t.dx * inv_scale
    return AugTransform(t.hflip, inv_scale, dx, -t.dy * inv_scale, out_w, out_h)


def cross_space(b: Box, src: AugTransform, dst: AugTransform) -> Box:
    """Map a box from the view produced by ``src`` to the view produced by ``dst``."""
    if src == dst:
        return b
    return apply_transform(apply_transform(b, invert(src)), dst)


def transform_array(boxes: np.ndarray, t: AugTransform) -> np.ndarray:
    """Vectorised ``apply_transform`` over an ``[N, 4]`` array."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    x1, y1, x2, y2 = boxes.T
    if t.hflip:
        x1, x2 = t.view_width - x2, t.view_width - x1
    s = t.scale
    return np.stack([s * x1 + t.dx, s * y1 + t.dy, s * x2 + t.dx, s * y2 + t.dy], axis=1)


def cross_space_array(boxes: np.ndarray, src: AugTransform, dst: AugTransform) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if src == dst:
        return boxes.copy()
    return transform_array(transform_array(boxes, invert(src)), dst)
