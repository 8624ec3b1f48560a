"""Feature-sequence container, window planning, stream fusion, and `.efseq` I/O.

The `.efseq` binary layout is the contract between this toolkit and any
external feature extractor:

    magic "EFSQ" | u16 version | u8 stream tag | u32 T | u32 D |
    u32 fps*1000 | u32 window | u32 step | u32 sample_rate |
    u16 clip_id length | clip_id UTF-8 | T*D float32 row-major

All integers and floats little-endian.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

EFSEQ_MAGIC = b"EFSQ"
EFSEQ_VERSION = 1

STREAM_TAGS = {"i3d-rgb": 1, "i3d-flow": 2, "i3d-mixed": 3, "videomae-rgb": 4}
TAG_STREAMS = {v: k for k, v in STREAM_TAGS.items()}
STREAM_DIMS = {"i3d-rgb": 1024, "i3d-flow": 1024, "i3d-mixed": 1024, "videomae-rgb": 768}

_HEADER = struct.Struct("<HB6I H")  # version, tag, T, D, fps_milli, window, step, sample_rate, id_len


class FeatureFormatError(ValueError):
    """Malformed feature file or sequence; ``code`` names the failure."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class FeatureSequence:
    """T x D matrix of per-window feature vectors plus extraction metadata."""

    data: np.ndarray
    stream: str
    fps: float
    window: int
    step: int
    sample_rate: int = 0
    clip_id: str = ""

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise FeatureFormatError("bad-shape", f"data must be TxD with T >= 1, got {self.data.shape}")
        if self.stream not in STREAM_DIMS:
            raise FeatureFormatError("bad-stream", f"unknown stream {self.stream!r}")
        if self.data.shape[1] != STREAM_DIMS[self.stream]:
            raise FeatureFormatError(
                "stream-dim-mismatch",
                f"stream {self.stream!r} requires D={STREAM_DIMS[self.stream]}, got {self.data.shape[1]}",
            )
        if not np.isfinite(self.data).all():
            raise FeatureFormatError("non-finite", "feature matrix contains NaN or Inf")
        if not self.fps > 0:
            raise FeatureFormatError("bad-header", f"fps must be > 0, got {self.fps}")
        if self.window < 1 or self.step < 1:
            raise FeatureFormatError("bad-header", "window and step must be >= 1")
        if self.sample_rate < 0:
            raise FeatureFormatError("bad-header", "sample_rate must be >= 0")

    @property
    def num_windows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class WindowPlan:
    """Ordered, uniform-stride extraction windows over a frame range."""

    windows: tuple[tuple[int, int], ...]
    short: bool = False  # clip shorter than one window

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)


def window_plan(num_frames: int, window: int, step: int) -> WindowPlan:
    """Windows [k*step, k*step + window) while they fit inside ``num_frames``.

    A clip shorter than one window yields a single short window covering the
    whole clip; trailing partial windows are otherwise dropped.
    """
    if num_frames <= 0:
        raise ValueError(f"num_frames must be > 0, got {num_frames}")
    if window < 1 or step < 1:
        raise ValueError("window and step must be >= 1")
    if num_frames < window:
        return WindowPlan(windows=((0, num_frames),), short=True)
    windows = []
    start = 0
    while start + window <= num_frames:
        windows.append((start, start + window))
        start += step
    return WindowPlan(windows=tuple(windows))


def late_fusion(rgb: FeatureSequence, flow: FeatureSequence) -> FeatureSequence:
    """Average two I3D streams elementwise into an ``i3d-mixed`` sequence."""
    for seq in (rgb, flow):
        if not seq.stream.startswith("i3d-"):
            raise ValueError(f"late fusion is defined for i3d streams, got {seq.stream!r}")
    if rgb.data.shape != flow.data.shape:
        raise ValueError(f"shape mismatch: {rgb.data.shape} vs {flow.data.shape}")
    for attr in ("fps", "window", "step", "clip_id"):
        if getattr(rgb, attr) != getattr(flow, attr):
            raise ValueError(f"metadata mismatch on {attr!r}")
    fused = (rgb.data + flow.data) / np.float32(2.0)
    return replace(rgb, data=fused, stream="i3d-mixed")


def write_features(seq: FeatureSequence, path: str | Path) -> None:
    """Serialize to `.efseq`; the write is atomic (temp file + rename)."""
    path = Path(path)
    clip_bytes = seq.clip_id.encode("utf-8")
    if len(clip_bytes) > 0xFFFF:
        raise FeatureFormatError("bad-header", "clip_id longer than 65535 bytes")
    header = EFSEQ_MAGIC + _HEADER.pack(
        EFSEQ_VERSION,
        STREAM_TAGS[seq.stream],
        seq.data.shape[0],
        seq.data.shape[1],
        int(round(seq.fps * 1000)),
        seq.window,
        seq.step,
        seq.sample_rate,
        len(clip_bytes),
    )
    payload = np.ascontiguousarray(seq.data, dtype="<f4").tobytes()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(clip_bytes)
        fh.write(payload)
    os.replace(tmp, path)


def read_features(path: str | Path) -> FeatureSequence:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EFSEQ_MAGIC:
            raise FeatureFormatError("bad-magic", f"bad magic {magic!r} in {path}")
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise FeatureFormatError("truncated", f"truncated header in {path}")
        version, tag, t, d, fps_milli, window, step, sample_rate, id_len = _HEADER.unpack(raw)
        if version != EFSEQ_VERSION:
            raise FeatureFormatError("bad-version", f"unsupported version {version}")
        if tag not in TAG_STREAMS:
            raise FeatureFormatError("bad-stream", f"unknown stream tag {tag}")
        stream = TAG_STREAMS[tag]
        if d != STREAM_DIMS[stream]:
            raise FeatureFormatError(
                "stream-dim-mismatch", f"stream {stream!r} requires D={STREAM_DIMS[stream]}, file has D={d}"
            )
        clip_bytes = fh.read(id_len)
        if len(clip_bytes) != id_len:
            raise FeatureFormatError("truncated", f"truncated clip_id in {path}")
        payload = fh.read(4 * t * d)
        if len(payload) != 4 * t * d:
            raise FeatureFormatError("truncated", f"truncated payload in {path}")
    data = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    if not np.isfinite(data).all():
        raise FeatureFormatError("non-finite", f"non-finite values in {path}")
    return FeatureSequence(
        data=data.copy(),
        stream=stream,
        fps=fps_milli / 1000.0,
        window=window,
        step=step,
        sample_rate=sample_rate,
        clip_id=clip_bytes.decode("utf-8"),
    )


def header_summary(path: str | Path) -> dict:
    """Header metadata of an `.efseq` file without validating the payload."""
    seq = read_features(path)
    return {
        "clip_id": seq.clip_id,
        "stream": seq.stream,
        "num_windows": seq.num_windows,
        "dim": seq.dim,
        "fps": seq.fps,
        "window": seq.window,
        "step": seq.step,
        "sample_rate": seq.sample_rate,
    }
