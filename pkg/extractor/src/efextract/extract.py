"""Extraction jobs: window the video, run the backbone, emit the file."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backbones import make_backbone
from .efseq import DimensionMismatch, STREAM_DIMS, write_efseq
from .video import load_video

FPS_CHOICES = (25.0, 50.0)
I3D_WINDOWS = (32, 16)
I3D_STEPS = (16, 8, 1)
VIDEOMAE_SAMPLE_RATES = (1, 2, 4, 8)
VIDEOMAE_FRAMES = 16  # frames fed to the backbone per window


@dataclass(frozen=True)
class ExtractionJob:
    video: str
    stream: str  # i3d-rgb | i3d-flow | videomae-rgb
    fps: float
    out: str
    window: int = 32  # i3d only
    step: int = 16  # i3d only
    sample_rate: int = 1  # videomae only
    backbone: str = "torchscript"
    weights_dir: str | None = None
    clip_id: str = ""

    def __post_init__(self) -> None:
        if self.stream not in ("i3d-rgb", "i3d-flow", "videomae-rgb"):
            raise ValueError(f"unknown stream {self.stream!r}")
        if self.fps not in FPS_CHOICES:
            raise ValueError(f"fps must be one of {FPS_CHOICES}, got {self.fps}")
        if self.stream.startswith("i3d"):
            if self.window not in I3D_WINDOWS:
                raise ValueError(f"i3d window must be one of {I3D_WINDOWS}, got {self.window}")
            if self.step not in I3D_STEPS:
                raise ValueError(f"i3d step must be one of {I3D_STEPS}, got {self.step}")
        else:
            if self.sample_rate not in VIDEOMAE_SAMPLE_RATES:
                raise ValueError(
                    f"videomae sample_rate must be one of {VIDEOMAE_SAMPLE_RATES}, got {self.sample_rate}"
                )

    def plan_params(self) -> tuple[int, int]:
        """(window, step) in source frames, after videomae subsampling."""
        if self.stream.startswith("i3d"):
            return self.window, self.step
        span = VIDEOMAE_FRAMES * self.sample_rate
        return span, span


def plan_windows(num_frames: int, window: int, step: int) -> list[tuple[int, int]]:
    """Full extraction windows [k*step, k*step + window); must agree with
    the consumer's plan for the same parameters."""
    if num_frames < window:
        raise ValueError(f"video of {num_frames} frames shorter than one {window}-frame window")
    windows = []
    start = 0
    while start + window <= num_frames:
        windows.append((start, start + window))
        start += step
    return windows


def extract(job: ExtractionJob) -> Path:
    """Run one extraction job and return the written path."""
    frames, fps = load_video(job.video, fallback_fps=job.fps)
    if abs(fps - job.fps) > 1e-6:
        raise ValueError(f"video fps {fps} != job fps {job.fps}")
    window, step = job.plan_params()
    windows = plan_windows(frames.shape[0], window, step)
    backbone = make_backbone(job.stream, job.backbone, job.weights_dir)

    expected = STREAM_DIMS[job.stream]
    rows = np.empty((len(windows), expected), dtype=np.float32)
    for k, (start, end) in enumerate(windows):
        chunk = frames[start:end]
        if job.stream == "videomae-rgb":
            chunk = chunk[:: job.sample_rate][:VIDEOMAE_FRAMES]
        vec = backbone(chunk)
        if vec.shape != (expected,):
            raise DimensionMismatch(
                f"backbone emitted shape {vec.shape} for stream {job.stream!r}, expected ({expected},)"
            )
        rows[k] = vec

    clip_id = job.clip_id or Path(job.video).stem
    write_efseq(
        job.out,
        rows,
        stream=job.stream,
        fps=fps,
        window=window,
        step=step,
        sample_rate=job.sample_rate if job.stream == "videomae-rgb" else 0,
        clip_id=clip_id,
    )
    return Path(job.out)
