"""Synthetic scenes, independent oracles and checks for the supervision engine."""

from .compare import DisagreementReport, compare_paradigms
from .gradcheck import GradCheckError, grad_check, run_gradcheck
from .oracle import oracle_nms
from .scene import (
    Scene,
    SceneError,
    SceneSpec,
    ambiguous_negative_scene,
    generate_scene,
    misleading_positive_scene,
)

__all__ = [
    "DisagreementReport",
    "GradCheckError",
    "Scene",
    "SceneError",
    "SceneSpec",
    "ambiguous_negative_scene",
    "compare_paradigms",
    "generate_scene",
    "grad_check",
    "misleading_positive_scene",
    "oracle_nms",
    "run_gradcheck",
]
