"""Dense per-image predictions exchanged between teacher and student."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .geometry import AugTransform, Box, boxes_to_array

Stage = Literal["rpn", "rcnn"]


@dataclass(frozen=True)
class Sample:
    """One dense training sample.

    ``class_probs`` holds either a single objectness probability (RPN) or
    ``C + 1`` probabilities with background in the LAST slot (R-CNN).
    """

    sample_id: int
    sample_box: Box
    class_probs: tuple[float, ...]
    regressed_box: Box


@dataclass(frozen=True)
class DensePrediction:
    image_id: str
    stage: Stage
    transform: AugTransform
    samples: tuple[Sample, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.stage not in ("rpn", "rcnn"):
            raise ValueError(f"unknown stage {self.stage!r}")
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sample ids in image {self.image_id!r}")
        width = None
        for s in self.samples:
            if width is None:
                width = len(s.class_probs)
            elif len(s.class_probs) != width:
                raise ValueError("class_probs length differs between samples")
            if any(not (0.0 <= p <= 1.0) for p in s.class_probs):
                raise ValueError(f"class probability outside [0, 1] for sample {s.sample_id}")
        if self.stage == "rpn" and width not in (None, 1):
            raise ValueError("rpn samples carry exactly one objectness probability")
        if self.stage == "rcnn" and width is not None and width < 2:
            raise ValueError("rcnn samples need at least one foreground class plus background")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_foreground(self) -> int:
        """Number of foreground categories scored per sample."""
        if not self.samples:
            return 0
        width = len(self.samples[0].class_probs)
        return 1 if self.stage == "rpn" else width - 1

    def foreground_probs(self) -> np.ndarray:
        """``[N, K]`` foreground probabilities (objectness for RPN)."""
        k = self.num_foreground
        if not self.samples:
            return np.zeros((0, k))
        probs = np.array([s.class_probs for s in self.samples], dtype=np.float64)
        return probs[:, :k]

    def sample_boxes(self) -> np.ndarray:
        return boxes_to_array([s.sample_box for s in self.samples])

    def regressed_boxes(self) -> np.ndarray:
        return boxes_to_array([s.regressed_box for s in self.samples])

    def sample_ids(self) -> list[int]:
        return [s.sample_id for s in self.samples]


def make_prediction(
    image_id: str,
    stage: Stage,
    transform: AugTransform,
    sample_boxes: Sequence[Sequence[float]],
    class_probs: Sequence[Sequence[float]],
    regressed_boxes: Sequence[Sequence[float]],
    sample_ids: Sequence[int] | None = None,
) -> DensePrediction:
    if sample_ids is None:
        sample_ids = range(len(sample_boxes))
    samples = tuple(
        Sample(int(i), Box.from_seq(sb), tuple(float(p) for p in cp), Box.from_seq(rb))
        for i, sb, cp, rb in zip(sample_ids, sample_boxes, class_probs, regressed_boxes)
    )
    return DensePrediction(image_id, stage, transform, samples)
