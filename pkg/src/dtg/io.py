"""JSON-lines file formats: one image per line, schema-versioned, strict."""

from __future__ import annotations

import json
import os
import tempfile
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

import jsonschema

from .geometry import AugTransform, Box
from .prediction import DensePrediction, make_prediction

SCHEMA_VERSION = 1


class FileFormatError(ValueError):
    """Input file violates its schema or cannot be parsed."""


@lru_cache(maxsize=None)
def schema(name: str) -> dict:
    text = resources.files("dtg").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(record: dict, name: str, where: str = "") -> None:
    try:
        jsonschema.validate(record, schema(name))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise FileFormatError(f"{where}{name} schema violation at '{path}': {exc.message}") from None


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def prediction_to_record(pred: DensePrediction) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "image_id": pred.image_id,
        "stage": pred.stage,
        "space": pred.transform.to_dict(),
        "samples": [
            {
                "sample_id": s.sample_id,
                "sample_box": s.sample_box.to_list(),
                "class_probs": list(s.class_probs),
                "regressed_box": s.regressed_box.to_list(),
            }
            for s in pred.samples
        ],
    }


def record_to_prediction(rec: dict, where: str = "") -> DensePrediction:
    validate(rec, "prediction", where)
    try:
        samples = rec["samples"]
        return make_prediction(
            rec["image_id"],
            rec["stage"],
            AugTransform.from_dict(rec["space"]),
            [s["sample_box"] for s in samples],
            [s["class_probs"] for s in samples],
            [s["regressed_box"] for s in samples],
            [s["sample_id"] for s in samples],
        )
    except ValueError as exc:
        raise FileFormatError(f"{where}{exc}") from None


def ground_truth_record(image_id: str, objects: Iterable[tuple[Box, int]]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "image_id": image_id,
        "objects": [{"box": b.to_list(), "category": int(c)} for b, c in objects],
    }


def read_jsonl(path: str | os.PathLike) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FileFormatError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
    return out


def read_predictions(path: str | os.PathLike) -> list[DensePrediction]:
    return [
        record_to_prediction(rec, f"{path}:{i}: ") for i, rec in enumerate(read_jsonl(path), 1)
    ]


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def write_jsonl(path: str | os.PathLike, records: Iterable[dict]) -> None:
    """Write records atomically: either the whole file appears or nothing does."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = "".join(dumps(r) + "\n" for r in records)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        # mkstemp creates 0600; give the file the permissions open() would have
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
