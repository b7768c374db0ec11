"""Command-line entry point: generate | supervise | compare | gradcheck.

Exit codes: 0 success, 1 validation error (bad flags or input files),
2 internal invariant violation (including a failed gradient check).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import io
from .correspondence import CorrespondenceError
from .harness.compare import DisagreementReport, compare_paradigms
from .harness.gradcheck import CHECKED, GradCheckError, run_gradcheck
from .harness.scene import (
    Scene,
    SceneError,
    SceneSpec,
    ambiguous_negative_scene,
    generate_scene,
    misleading_positive_scene,
)
from .pipeline import InvariantViolation, RunConfig, Supervision, supervise_image
from .prediction import DensePrediction

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 1, 2

SCENARIOS: dict[str, Callable[[], Scene]] = {
    "misleading-positive": misleading_positive_scene,
    "ambiguous-negative": ambiguous_negative_scene,
}


def num_workers() -> int:
    raw = os.environ.get("DTG_NUM_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DTG_NUM_WORKERS must be an integer, got {raw!r}") from None
    return max(1, n)


def ordered_map(fn, items: Sequence) -> list:
    """Map over images, fanning out to processes when allowed; keeps input order."""
    workers = min(num_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- flags


def _add_scene_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scene")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--images", type=int, default=1, help="number of images; image i uses seed + i")
    g.add_argument("--objects", type=int, default=3)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--width", type=float, default=640.0)
    g.add_argument("--height", type=float, default=480.0)
    g.add_argument("--samples-per-object", type=int, default=10)
    g.add_argument("--background", type=int, default=10)
    g.add_argument("--box-jitter", type=float, default=4.0)
    g.add_argument("--score-noise", type=float, default=0.05)
    g.add_argument("--fp-rate", type=float, default=0.0)
    g.add_argument("--student-score-noise", type=float, default=0.05)
    g.add_argument("--student-box-jitter", type=float, default=2.0)
    g.add_argument("--score-model", choices=["iou", "uniform"], default="iou")
    g.add_argument("--stage", choices=["rpn", "rcnn"], default="rcnn")
    g.add_argument("--scenario", choices=sorted(SCENARIOS), help="use a fixed constructed scene")


def _scenes(args) -> list[Scene]:
    if args.scenario:
        return [SCENARIOS[args.scenario]()]
    if args.images < 1:
        raise ValueError("--images must be >= 1")
    out = []
    for i in range(args.images):
        spec = SceneSpec(
            seed=args.seed + i,
            num_objects=args.objects,
            num_classes=args.classes,
            view_width=args.width,
            view_height=args.height,
            box_jitter_sigma=args.box_jitter,
            score_noise_sigma=args.score_noise,
            fp_rate=args.fp_rate,
            samples_per_object=args.samples_per_object,
            num_background=args.background,
            student_score_sigma=args.student_score_noise,
            student_box_sigma=args.student_box_jitter,
            score_model=args.score_model,
            stage=args.stage,
            image_id=f"img{i}",
        )
        out.append(generate_scene(spec))
    return out


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run config")
    for f in dataclasses.fields(RunConfig):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        names = [flag, "--temperature"] if f.name == "T" else [flag]
        kwargs: dict = {"dest": f"cfg_{f.name}", "default": None}
        if f.name == "regression_target":
            kwargs["choices"] = ["reserved", "all"]
        elif f.name in ("max_active", "num_levels"):
            kwargs["type"] = int
        else:
            kwargs["type"] = float
        g.add_argument(*names, **kwargs)


def _config(args) -> RunConfig:
    overrides = {
        f.name: getattr(args, f"cfg_{f.name}")
        for f in dataclasses.fields(RunConfig)
        if getattr(args, f"cfg_{f.name}", None) is not None
    }
    if hasattr(args, "seed") and args.seed is not None:
        overrides["seed"] = args.seed
    return RunConfig(**overrides)


def _emit(records: list[dict], out: str | None) -> None:
    if out:
        io.write_jsonl(out, records)
    else:
        sys.stdout.write("".join(io.dumps(r) + "\n" for r in records))


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    scenes = _scenes(args)
    out = Path(args.out)
    io.write_jsonl(out / "teacher.jsonl", [io.prediction_to_record(s.teacher) for s in scenes])
    io.write_jsonl(out / "student.jsonl", [io.prediction_to_record(s.student) for s in scenes])
    io.write_jsonl(
        out / "ground_truth.jsonl",
        [io.ground_truth_record(s.teacher.image_id, s.ground_truth) for s in scenes],
    )
    return EXIT_OK


def supervision_record(
    teacher: DensePrediction, student: DensePrediction, sup: Supervision, paradigm: str
) -> dict:
    labels = []
    for sid, lab in zip(student.sample_ids(), sup.labels.labels):
        entry: dict = {"sample_id": sid, "kind": lab.kind}
        if lab.is_positive:
            entry["category"] = lab.category
            entry["cluster"] = lab.cluster
            entry["target"] = lab.target.to_list()
        labels.append(entry)
    rep = sup.report
    return {
        "schema_version": io.SCHEMA_VERSION,
        "image_id": teacher.image_id,
        "stage": teacher.stage,
        "paradigm": paradigm,
        "labels": labels,
        "losses": {
            "l_cls": rep.l_cls,
            "l_reg": rep.l_reg,
            "l_rm": rep.l_rm,
            "l_unlabeled": rep.l_unlabeled,
            "l_total": rep.l_total,
        },
        "grad_student_scores": rep.grad_student_scores.tolist(),
        "grad_student_deltas": rep.grad_student_deltas.tolist(),
    }


def _supervise_one(job) -> dict:
    teacher, student, cfg, paradigm = job
    sup = supervise_image(teacher, student, cfg, paradigm)
    rec = supervision_record(teacher, student, sup, paradigm)
    io.validate(rec, "supervision")
    return rec


def cmd_supervise(args) -> int:
    cfg = _config(args)
    teachers = io.read_predictions(args.teacher)
    students = io.read_predictions(args.student)
    if len(teachers) != len(students):
        raise io.FileFormatError(
            f"teacher file has {len(teachers)} images, student file has {len(students)}"
        )
    for t, s in zip(teachers, students):
        if t.image_id != s.image_id:
            raise CorrespondenceError(f"image id mismatch: {t.image_id!r} vs {s.image_id!r}")
        if t.stage != s.stage:
            raise CorrespondenceError(f"stage mismatch on image {t.image_id!r}")
    records = ordered_map(_supervise_one, [(t, s, cfg, args.paradigm) for t, s in zip(teachers, students)])
    _emit(records, args.out)
    return EXIT_OK


def comparison_record(image_id: str, rep: DisagreementReport) -> dict:
    return {
        "schema_version": io.SCHEMA_VERSION,
        "image_id": image_id,
        "compared": rep.compared,
        "counts": rep.counts,
        "samples": {
            "misleading_positive": rep.misleading_positive,
            "ambiguous_negative": rep.ambiguous_negative,
            "agreement": rep.agreement,
            "other": rep.other,
        },
    }


def _compare_one(job) -> dict:
    scene, cfg = job
    rec = comparison_record(scene.teacher.image_id, compare_paradigms(scene, cfg))
    io.validate(rec, "comparison")
    return rec


def cmd_compare(args) -> int:
    cfg = _config(args)
    records = ordered_map(_compare_one, [(s, cfg) for s in _scenes(args)])
    _emit(records, args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    perturb = 1e-2 if args.inject_wrong_gradient else 0.0
    results = run_gradcheck(args.instances, args.eps, args.seed, perturb, CHECKED)
    failed = [k for k, v in results.items() if not v < args.tolerance]
    if args.json:
        rec = {
            "eps": args.eps,
            "instances": args.instances,
            "seed": args.seed,
            "tolerance": args.tolerance,
            "max_rel_error": results,
            "passed": not failed,
        }
        sys.stdout.write(io.dumps(rec) + "\n")
    else:
        lines = [f"# gradcheck eps={args.eps!r} instances={args.instances} seed={args.seed} tolerance={args.tolerance!r}"]
        for k, v in results.items():
            lines.append(f"{k:<14} {v:.3e}  {'FAIL' if k in failed else 'ok'}")
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_INVARIANT if failed else EXIT_OK


# ---------------------------------------------------------------- entry


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dtg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic teacher/student/ground-truth triple")
    _add_scene_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("supervise", help="derive student labels and losses from prediction files")
    p.add_argument("teacher")
    p.add_argument("student")
    p.add_argument("--paradigm", choices=["dense", "baseline"], default="dense")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--seed", type=int, default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_supervise)

    p = sub.add_parser("compare", help="tabulate label disagreements between the two paradigms")
    _add_scene_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss gradient")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--json", action="store_true")
    p.add_argument("--inject-wrong-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvariantViolation, GradCheckError) as exc:
        print(f"dtg: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (io.FileFormatError, CorrespondenceError, SceneError, ValueError, OSError) as exc:
        print(f"dtg: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
