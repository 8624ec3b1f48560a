"""Metrics, confusion counts, sliding-window inference, and timeline export."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .classifier import TrainedModel, predict
from .dataset import LABEL_BACKGROUND, LABEL_MOVEMENT, LABEL_UNOBSERVED
from .features import FeatureSequence, window_plan

_VALID_LABELS = (LABEL_MOVEMENT, LABEL_BACKGROUND)


def confusion(preds: list[str], truth: list[str]) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) with movement as the positive class."""
    if len(preds) != len(truth):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(truth)} labels")
    if not preds:
        raise ValueError("empty prediction list")
    for label in (*preds, *truth):
        if label not in _VALID_LABELS:
            raise ValueError(f"bad label {label!r}")
    tp = fp = fn = tn = 0
    for p, t in zip(preds, truth):
        if p == LABEL_MOVEMENT:
            if t == LABEL_MOVEMENT:
                tp += 1
            else:
                fp += 1
        else:
            if t == LABEL_MOVEMENT:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def metrics(tp: int, fp: int, fn: int, tn: int) -> tuple[float, float]:
    """Accuracy and F1; the degenerate all-negative F1 is 0 with a warning."""
    if min(tp, fp, fn, tn) < 0:
        raise ValueError("confusion counts must be non-negative")
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("no samples: all confusion counts are zero")
    accuracy = (tp + tn) / total
    denom = 2 * tp + fp + fn
    if denom == 0:
        warnings.warn("F1 undefined with no positives anywhere; reporting 0", stacklevel=2)
        return accuracy, 0.0
    return accuracy, 2 * tp / denom


def format_metric(value: float) -> str:
    """Five-decimal rounding with minimal digits (0.8125, 0.86957)."""
    return repr(round(value, 5))


@dataclass
class ClipPrediction:
    clip_id: str
    score: float
    predicted: str
    truth: str


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    f1: float
    predictions: list[ClipPrediction] = field(default_factory=list)
    method: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "accuracy": self.accuracy,
            "f1": self.f1,
            "accuracy_str": format_metric(self.accuracy),
            "f1_str": format_metric(self.f1),
            "predictions": [
                {"clip_id": p.clip_id, "score": p.score, "predicted": p.predicted, "truth": p.truth}
                for p in self.predictions
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def evaluate_predictions(predictions: list[ClipPrediction], method: dict | None = None) -> EvalReport:
    tp, fp, fn, tn = confusion([p.predicted for p in predictions], [p.truth for p in predictions])
    accuracy, f1 = metrics(tp, fp, fn, tn)
    return EvalReport(
        tp=tp, fp=fp, fn=fn, tn=tn, accuracy=accuracy, f1=f1,
        predictions=predictions, method=dict(method or {}),
    )


@dataclass
class TimelineEntry:
    start_frame: int
    end_frame: int
    score: float  # NaN when unobserved
    label: str
    gt_overlap: bool | None = None


@dataclass
class DetectionTimeline:
    video_id: str
    entries: list[TimelineEntry] = field(default_factory=list)
    ground_truth: list[tuple[int, int]] | None = None

    def attach_ground_truth(self, intervals: list[tuple[int, int]]) -> None:
        """Mark entries overlapping any annotated interval by >= 1 frame."""
        self.ground_truth = [(int(s), int(e)) for s, e in intervals]
        for entry in self.entries:
            entry.gt_overlap = any(
                entry.start_frame < ge and gs < entry.end_frame for gs, ge in self.ground_truth
            )


WindowScorer = Callable[[np.ndarray], float]


def _rows_inside(seq: FeatureSequence, start: int, end: int) -> np.ndarray:
    """Feature rows whose extraction window lies fully inside [start, end)."""
    starts = np.arange(seq.num_windows) * seq.step
    keep = (starts >= start) & (starts + seq.window <= end)
    return seq.data[keep]


def sliding_window_infer(
    features: FeatureSequence,
    method: TrainedModel | WindowScorer,
    window: int = 50,
    stride: int = 35,
    video_id: str = "",
    ground_truth: list[tuple[int, int]] | None = None,
) -> DetectionTimeline:
    """Classify overlapping frame windows over a full-length video.

    ``method`` is either a trained model applied to the feature rows covered
    by each window, or any callable mapping those rows to a score in [0, 1].
    Windows with no fully-contained feature row, or where the method raises,
    are emitted as ``unobserved`` rather than failing the sweep.
    """
    if window <= 0 or stride <= 0:
        raise ValueError("window and stride must be > 0")
    num_frames = (features.num_windows - 1) * features.step + features.window
    entries: list[TimelineEntry] = []
    for start, end in window_plan(num_frames, window, stride):
        rows = _rows_inside(features, start, end)
        if rows.shape[0] == 0:
            entries.append(TimelineEntry(start, end, float("nan"), LABEL_UNOBSERVED))
            continue
        try:
            if isinstance(method, TrainedModel):
                score, label = predict(method, rows)
            else:
                score = float(method(rows))
                label = LABEL_MOVEMENT if score > 0.5 else LABEL_BACKGROUND
        except Exception:
            entries.append(TimelineEntry(start, end, float("nan"), LABEL_UNOBSERVED))
            continue
        entries.append(TimelineEntry(start, end, score, label))
    timeline = DetectionTimeline(video_id=video_id, entries=entries)
    if ground_truth is not None:
        timeline.attach_ground_truth(ground_truth)
    return timeline


def timeline_export(timeline: DetectionTimeline, path: str | Path, format: str = "csv") -> None:
    """Plot-ready export; CSV columns start_frame,end_frame,score,label,gt_overlap."""
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["start_frame", "end_frame", "score", "label", "gt_overlap"])
            for e in timeline.entries:
                score = "" if math.isnan(e.score) else repr(e.score)
                overlap = "" if e.gt_overlap is None else int(e.gt_overlap)
                writer.writerow([e.start_frame, e.end_frame, score, e.label, overlap])
    elif format == "json":
        payload = {
            "video_id": timeline.video_id,
            "ground_truth": timeline.ground_truth,
            "entries": [
                {
                    "start_frame": e.start_frame,
                    "end_frame": e.end_frame,
                    "score": None if math.isnan(e.score) else e.score,
                    "label": e.label,
                    "gt_overlap": e.gt_overlap,
                }
                for e in timeline.entries
            ],
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown format {format!r}")


def timeline_import(path: str | Path, format: str = "csv", video_id: str = "") -> DetectionTimeline:
    path = Path(path)
    if format == "csv":
        entries = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                entries.append(
                    TimelineEntry(
                        start_frame=int(row["start_frame"]),
                        end_frame=int(row["end_frame"]),
                        score=float(row["score"]) if row["score"] else float("nan"),
                        label=row["label"],
                        gt_overlap=None if row["gt_overlap"] == "" else bool(int(row["gt_overlap"])),
                    )
                )
        return DetectionTimeline(video_id=video_id, entries=entries)
    if format == "json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        entries = [
            TimelineEntry(
                start_frame=e["start_frame"],
                end_frame=e["end_frame"],
                score=float("nan") if e["score"] is None else e["score"],
                label=e["label"],
                gt_overlap=e["gt_overlap"],
            )
            for e in payload["entries"]
        ]
        gt = payload.get("ground_truth")
        return DetectionTimeline(
            video_id=payload.get("video_id", video_id),
            entries=entries,
            ground_truth=None if gt is None else [tuple(iv) for iv in gt],
        )
    raise ValueError(f"unknown format {format!r}")
