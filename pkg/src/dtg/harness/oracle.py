"""Reference greedy NMS, written without touching the engine's NMS or geometry code."""

from __future__ import annotations

from typing import Sequence


def _overlap(a, b) -> float:
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    if ix2 <= ix1 or iy2 <= iy1:
        return 0.0
    inter = (ix2 - ix1) * (iy2 - iy1)
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def oracle_nms(candidates: Sequence, nms_iou: float) -> list[int]:
    """Textbook per-class greedy NMS.

    ``candidates`` are objects with ``index``, ``box`` (4 coords), ``category``
    and ``score``, or plain ``(index, box, category, score)`` tuples. Returns
    kept indices, highest score first, ties to the lower index. A box is
    suppressed when its IoU with a kept box of the same class is >= ``nms_iou``.
    """
    rows = []
    for c in candidates:
        if isinstance(c, tuple):
            idx, box, cat, score = c
        else:
            idx, box, cat, score = c.index, c.box, c.category, c.score
        rows.append((idx, tuple(box), cat, score))

    kept: list[tuple[float, int]] = []
    for cat in sorted({r[2] for r in rows}):
        pool = sorted((r for r in rows if r[2] == cat), key=lambda r: (-r[3], r[0]))
        suppressed = [False] * len(pool)
        for i, ri in enumerate(pool):
            if suppressed[i]:
                continue
            kept.append((ri[3], ri[0]))
            for j in range(i + 1, len(pool)):
                if not suppressed[j] and _overlap(ri[1], pool[j][1]) >= nms_iou:
                    suppressed[j] = True
    kept.sort(key=lambda k: (-k[0], k[1]))
    return [idx for _, idx in kept]
