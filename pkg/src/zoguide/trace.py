"""Trace rows, run summaries, alignment metrics and file emission."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from zoguide.errors import TraceIOError
from zoguide.prng import gaussian_stream

CSV_HEADER = ("step", "forward_passes", "train_loss", "eval_loss", "cos_sim", "wall_ms")


@dataclass
class TraceRow:
    step: int
    forward_passes: int
    train_loss: float
    eval_loss: float | None = None
    cos_sim: float | None = None
    wall_ms: int = 0


@dataclass
class RunSummary:
    config: dict
    steps: int
    forward_passes: int
    final_train_loss: float
    final_eval_loss: float
    initial_train_loss: float
    checkpoints: list = field(default_factory=list)
    mean_cos_sim: float | None = None


def cosine_similarity(a, b) -> float | None:
    """Cosine of the angle between ``a`` and ``b``; ``None`` if either is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return None
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def materialize_estimate(estimate, d: int, directions=None) -> np.ndarray:
    """The d-vector ``coefficient * direction`` behind a directional estimate."""
    if estimate.guide is not None:
        return estimate.coefficient * estimate.guide.values
    gen = gaussian_stream if directions is None else directions
    return estimate.coefficient * np.asarray(gen(estimate.seed, d), dtype=np.float64)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_fmt(getattr(row, name)) for name in CSV_HEADER])
    return buf.getvalue()


def emit_csv(rows, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(rows_to_csv(rows))
    except OSError as exc:
        raise TraceIOError(path, exc) from exc
    return path


def read_csv(path) -> list[TraceRow]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TraceIOError(path, exc) from exc
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise TraceIOError(path, ValueError(f"unexpected header {reader.fieldnames}"))

    def opt(s):
        return float(s) if s != "" else None

    return [
        TraceRow(int(r["step"]), int(r["forward_passes"]), float(r["train_loss"]),
                 opt(r["eval_loss"]), opt(r["cos_sim"]), int(r["wall_ms"]))
        for r in reader
    ]


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit_json(obj, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_json(obj))
    except OSError as exc:
        raise TraceIOError(path, exc) from exc
    return path
