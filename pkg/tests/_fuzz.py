"""Random NMS inputs shared by the property and acceptance suites."""

import numpy as np

from dtg.geometry import Box
from dtg.nms import Candidate

TAUS = (0.3, 0.45, 0.9)
NMS_IOUS = (0.5, 0.7)


def random_candidates(rng: np.random.Generator, max_candidates=200, max_classes=5):
    """Candidates clustered around a few objects, with occasional score ties and duplicates.

    Returns ``(active, tau, nms_iou)`` where ``active`` already passed the
    score threshold ``tau``.
    """
    n = int(rng.integers(0, max_candidates + 1))
    k = int(rng.integers(1, max_classes + 1))
    tau = float(rng.choice(TAUS))
    nms_iou = float(rng.choice(NMS_IOUS))
    centers = rng.uniform(0, 400, size=(int(rng.integers(1, 8)), 2))
    sizes = rng.uniform(10, 120, size=(len(centers), 2))
    tied = rng.random() < 0.3

    near = rng.random(n) < 0.8
    which = rng.integers(0, len(centers), size=n)
    ctr = centers[which] + rng.normal(0, 1, size=(n, 2)) * 0.15 * sizes[which]
    wh = sizes[which] * np.exp(rng.normal(0, 0.2, size=(n, 2)))
    ctr = np.where(near[:, None], ctr, rng.uniform(0, 400, size=(n, 2)))
    wh = np.where(near[:, None], wh, rng.uniform(1, 150, size=(n, 2)))
    xyxy = np.concatenate([ctr - wh / 2, ctr + wh / 2], axis=1)
    # occasional exact duplicates of an earlier box
    for i in np.nonzero(rng.random(n) < 0.05)[0]:
        if i > 0:
            xyxy[i] = xyxy[int(rng.integers(0, i))]
    scores = rng.random(n)
    if tied:
        scores = np.round(scores, 1)
    cats = rng.integers(0, k, size=n)
    raw = [(Box.from_seq(b), int(c), float(sc)) for b, c, sc in zip(xyxy, cats, scores)]

    active = []
    for box, cat, score in raw:
        if score >= tau:
            active.append(Candidate(len(active), len(active), box, cat, score))
    return active, tau, nms_iou
