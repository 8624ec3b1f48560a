"""Optical-flow magnitude baseline for ear-movement presence.

Frame pairs are sampled at a fixed stride through a clip, dense flow is
computed on the cropped ear region of each pair, and the clip score is the
mean of the per-pair mean magnitudes.  A threshold calibrated on training
scores turns the score into a movement/background label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LABEL_BACKGROUND, LABEL_MOVEMENT, LABEL_UNOBSERVED
from .evaluation import DetectionTimeline, TimelineEntry
from .features import window_plan
from .frameio import FrameSequence, RegionTrack
from .optflow import FlowParams, _resize_bilinear, farneback_flow, mean_flow_magnitude, to_grayscale


class MovDetError(ValueError):
    """No usable ear region or degenerate calibration input."""


@dataclass(frozen=True)
class MovDetConfig:
    threshold: float = 1.0
    sample_stride: int = 1
    flow_params: FlowParams = field(default_factory=FlowParams)

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")


@dataclass
class MovDetResult:
    label: str
    score: float
    per_pair_scores: list[float]

    def to_dict(self) -> dict:
        return {"label": self.label, "score": self.score, "per_pair_scores": self.per_pair_scores}


def _crop_slice(box: tuple[int, int, int, int]) -> tuple[slice, slice]:
    x, y, w, h = box
    return slice(y, y + h), slice(x, x + w)


def movdet_classify(clip: FrameSequence, roi: RegionTrack, cfg: MovDetConfig) -> MovDetResult:
    """Score one clip; the tie score == threshold goes to background."""
    stride = cfg.sample_stride
    if clip.num_frames < stride + 1:
        raise ValueError(f"clip of {clip.num_frames} frames too short for stride {stride}")
    roi.validate_against(clip)

    per_pair: list[float] = []
    for i in range(0, clip.num_frames - stride, stride):
        box_a = roi.boxes[i]
        box_b = roi.boxes[i + stride]
        if box_a is None or box_b is None:
            continue
        crop_a = to_grayscale(clip.frames[i][_crop_slice(box_a)])
        crop_b = to_grayscale(clip.frames[i + stride][_crop_slice(box_b)])
        if crop_b.shape != crop_a.shape:
            # Flow needs aligned shapes; resample the second crop onto the first.
            crop_b = _resize_bilinear(crop_b, crop_a.shape[0], crop_a.shape[1])
        flow = farneback_flow(crop_a, crop_b, cfg.flow_params)
        per_pair.append(mean_flow_magnitude(flow))

    if not per_pair:
        raise MovDetError("no observable ear region in any sampled frame pair")
    score = float(np.mean(per_pair))
    label = LABEL_MOVEMENT if score > cfg.threshold else LABEL_BACKGROUND
    return MovDetResult(label=label, score=score, per_pair_scores=per_pair)


def threshold_accuracy(scored: list[tuple[float, str]], threshold: float) -> float:
    """Training accuracy of the rule: movement iff score > threshold."""
    correct = sum(
        1
        for score, label in scored
        if (LABEL_MOVEMENT if score > threshold else LABEL_BACKGROUND) == label
    )
    return correct / len(scored)


def calibrate_threshold(scored: list[tuple[float, str]]) -> float:
    """Midpoint between adjacent sorted scores that maximises train accuracy.

    Candidate cuts are the midpoints of adjacent distinct scores; ties break
    toward the smaller threshold.
    """
    labels = {label for _, label in scored}
    if labels != {LABEL_MOVEMENT, LABEL_BACKGROUND}:
        raise MovDetError(f"calibration needs both classes, got {sorted(labels)}")
    levels = sorted({score for score, _ in scored})
    if len(levels) < 2:
        raise MovDetError("calibration needs at least two distinct scores")
    candidates = [(a + b) / 2.0 for a, b in zip(levels, levels[1:])]
    best = max(candidates, key=lambda t: (threshold_accuracy(scored, t), -t))
    return best


def movdet_timeline(
    video: FrameSequence,
    roi: RegionTrack,
    cfg: MovDetConfig,
    window_s: float,
    stride_s: float | None = None,
    video_id: str = "",
) -> DetectionTimeline:
    """Per-window baseline labels over a full video.

    Windows follow the shared plan policy; default stride is 0.7x the window
    (the 50/35-frame ratio used for full-video sweeps).  Windows with no
    visible ear are emitted as ``unobserved``.
    """
    if not window_s > 0:
        raise ValueError("window_s must be > 0")
    window = max(int(round(window_s * video.fps)), 2)
    stride = max(int(round((stride_s if stride_s is not None else 0.7 * window_s) * video.fps)), 1)
    entries: list[TimelineEntry] = []
    for start, end in window_plan(video.num_frames, window, stride):
        try:
            result = movdet_classify(video.slice(start, end), roi.slice(start, end), cfg)
            entries.append(TimelineEntry(start, end, result.score, result.label))
        except (MovDetError, ValueError):
            entries.append(TimelineEntry(start, end, float("nan"), LABEL_UNOBSERVED))
    return DetectionTimeline(video_id=video_id, entries=entries)
