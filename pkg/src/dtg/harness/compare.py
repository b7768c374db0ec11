"""Where the pseudo-box baseline and cluster-derived labels disagree."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..labels import TrainingLabelSet
from ..pipeline import RunConfig, baseline_labels, dense_labels
from .scene import Scene


@dataclass
class DisagreementReport:
    misleading_positive: list[int] = field(default_factory=list)
    ambiguous_negative: list[int] = field(default_factory=list)
    agreement: list[int] = field(default_factory=list)
    other: list[int] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        return {
            "misleading_positive": len(self.misleading_positive),
            "ambiguous_negative": len(self.ambiguous_negative),
            "agreement": len(self.agreement),
            "other": len(self.other),
        }

    @property
    def compared(self) -> int:
        return sum(self.counts.values())

    @property
    def disagreements(self) -> int:
        return self.compared - len(self.agreement)


def tabulate(baseline: TrainingLabelSet, dense: TrainingLabelSet, sample_ids) -> DisagreementReport:
    """Bucket each student sample by how the two label sets treat it.

    Misleading positive: baseline positive, dense background. Ambiguous
    negative: baseline background or ignore, dense positive. Agreement: same
    kind, and same category for positives. Everything else is ``other``.
    """
    rep = DisagreementReport()
    for sid, b, d in zip(sample_ids, baseline.labels, dense.labels):
        if b.kind == "positive" and d.kind == "background":
            rep.misleading_positive.append(sid)
        elif b.kind in ("background", "ignore") and d.kind == "positive":
            rep.ambiguous_negative.append(sid)
        elif b.kind == d.kind and (b.kind != "positive" or b.category == d.category):
            rep.agreement.append(sid)
        else:
            rep.other.append(sid)
    return rep


def compare_paradigms(scene: Scene, config: RunConfig | None = None) -> DisagreementReport:
    cfg = config or RunConfig()
    base, _, _ = baseline_labels(scene.teacher, scene.student, cfg)
    dense, _, _ = dense_labels(scene.teacher, scene.student, cfg)
    return tabulate(base, dense, scene.student.sample_ids())
