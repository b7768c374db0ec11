"""Central finite-difference checks of the analytic loss gradients."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .. import losses
from ..geometry import Box
from ..labels import SampleLabel, TrainingLabelSet

LossFn = Callable[[np.ndarray, dict], tuple[float, np.ndarray]]


class GradCheckError(ArithmeticError):
    pass


def _linear(x, fixed):
    return float(np.sum(x)), np.ones_like(x)


def _focal(x, fixed):
    return losses.focal_loss(x, fixed["target"], fixed.get("gamma", 2.0), fixed.get("alpha_f", 0.25))


def _smooth_l1(x, fixed):
    return losses.smooth_l1(x, fixed["target"], fixed.get("beta_sl1", 1.0))


def _rank_matching(x, fixed):
    return losses.rank_matching_loss(fixed["teacher"], x, fixed.get("T", 1.0))


def _unlabeled(x, fixed):
    n, k = fixed["shape"]
    probs = x[: n * k].reshape(n, k)
    deltas = x[n * k :].reshape(n, 4)
    rep = losses.image_losses(
        fixed["labels"], probs, deltas, fixed["boxes"], fixed["rm_groups"], fixed["cfg"]
    )
    return rep.l_unlabeled, np.concatenate([rep.grad_student_scores.ravel(), rep.grad_student_deltas.ravel()])


LOSSES: dict[str, LossFn] = {
    "linear": _linear,
    "focal": _focal,
    "smooth_l1": _smooth_l1,
    "rank_matching": _rank_matching,
    "unlabeled": _unlabeled,
}


def grad_check(loss_id: str, inputs: dict, eps: float = 1e-5, perturb_gradient: float = 0.0) -> float:
    """Max over coordinates of ``|a - n| / max(1, |a|, |n|)``.

    ``inputs["x"]`` is the point of differentiation, every other key is held
    fixed. ``perturb_gradient`` is added to the analytic gradient and exists
    only as a negative control.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    fn = LOSSES[loss_id]
    x0 = np.asarray(inputs["x"], dtype=np.float64).copy()
    fixed = {k: v for k, v in inputs.items() if k != "x"}
    _, analytic = fn(x0, fixed)
    analytic = np.asarray(analytic, dtype=np.float64) + perturb_gradient
    worst = 0.0
    for i in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += eps
        xm[i] -= eps
        fp, _ = fn(xp, fixed)
        fm, _ = fn(xm, fixed)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise GradCheckError(f"{loss_id}: non-finite loss at perturbed coordinate {i}")
        num = (fp - fm) / (2.0 * eps)
        a = analytic[i]
        worst = max(worst, abs(a - num) / max(1.0, abs(a), abs(num)))
    return worst


def random_inputs(loss_id: str, rng: np.random.Generator) -> dict:
    """One random, well-conditioned instance for ``loss_id``."""
    if loss_id == "linear":
        return {"x": rng.normal(size=5)}
    if loss_id == "focal":
        k = int(rng.integers(1, 6))
        target = None if rng.random() < 0.3 else int(rng.integers(0, k))
        return {
            "x": rng.uniform(0.05, 0.95, size=k),
            "target": target,
            "gamma": float(rng.choice([0.0, 1.0, 2.0, 2.5])),
            "alpha_f": float(rng.uniform(0.1, 0.9)),
        }
    if loss_id == "smooth_l1":
        beta = float(rng.uniform(0.2, 2.0))
        x = rng.normal(scale=2.0, size=4)
        t = rng.normal(scale=2.0, size=4)
        # keep every coordinate clear of the kink at |d| = beta
        d = x - t
        near = np.abs(np.abs(d) - beta) < 1e-3
        x[near] += 0.01
        return {"x": x, "target": t, "beta_sl1": beta}
    if loss_id == "rank_matching":
        n = int(rng.integers(1, 9))
        return {"x": rng.uniform(0, 1, size=n), "teacher": rng.uniform(0, 1, size=n), "T": float(rng.uniform(0.3, 3.0))}
    if loss_id == "unlabeled":
        return _random_image(rng)
    raise KeyError(loss_id)


def _random_image(rng: np.random.Generator) -> dict:
    n, k = int(rng.integers(3, 9)), int(rng.integers(1, 4))
    boxes = np.zeros((n, 4))
    for i in range(n):
        x, y = rng.uniform(0, 100, size=2)
        w, h = rng.uniform(10, 50, size=2)
        boxes[i] = (x, y, x + w, y + h)
    labels = []
    rm_groups: dict[int, tuple[list[int], list[float]]] = {}
    for i in range(n):
        r = rng.random()
        if r < 0.6:
            cid = int(rng.integers(0, 2))
            cat = cid % k
            x, y = rng.uniform(0, 100, size=2)
            tgt = Box(x, y, x + rng.uniform(10, 50), y + rng.uniform(10, 50))
            labels.append(SampleLabel("positive", cat, tgt, cid))
            members, scores = rm_groups.setdefault(cid, ([], []))
            members.append(i)
            scores.append(float(rng.uniform(0.45, 1.0)))
        elif r < 0.85:
            labels.append(SampleLabel("background"))
        else:
            labels.append(SampleLabel("ignore"))
    probs = rng.uniform(0.05, 0.95, size=(n, k))
    deltas = rng.normal(scale=0.5, size=(n, 4))
    return {
        "x": np.concatenate([probs.ravel(), deltas.ravel()]),
        "shape": (n, k),
        "labels": TrainingLabelSet(tuple(labels)),
        "boxes": boxes,
        "rm_groups": rm_groups,
        "cfg": losses.LossConfig(T=float(rng.uniform(0.5, 2.0)), beta=3.0),
    }


CHECKED = ("focal", "smooth_l1", "rank_matching", "unlabeled")


def run_gradcheck(
    instances: int = 100,
    eps: float = 1e-5,
    seed: int = 0,
    perturb_gradient: float = 0.0,
    loss_ids=CHECKED,
) -> dict[str, float]:
    """Worst relative error per loss over ``instances`` random inputs."""
    rng = np.random.default_rng(seed)
    out = {}
    for loss_id in loss_ids:
        worst = 0.0
        for _ in range(instances):
            worst = max(worst, grad_check(loss_id, random_inputs(loss_id, rng), eps, perturb_gradient))
        out[loss_id] = worst
    return out
