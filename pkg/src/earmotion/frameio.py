"""Frame stacks, per-frame ear ROI tracks, and their on-disk formats.

Video decoding stays outside the toolkit: frames arrive either as a
directory of PNG/PGM images or as the raw planar ``.frames`` container
defined here.  ROI tracks are plain CSV; a frame index missing from the
file means "ear not visible in that frame".
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FRAMES_MAGIC = b"EFRM"

Box = tuple[int, int, int, int]  # x, y, w, h in pixels


class FrameFormatError(ValueError):
    """Raised when a ``.frames`` file or frame directory is malformed."""


@dataclass
class FrameSequence:
    """A stack of same-sized frames with FPS metadata.

    ``frames`` is (N, H, W) for grayscale or (N, H, W, 3) for RGB.
    """

    frames: np.ndarray
    fps: float
    color_space: str = "gray"

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames)
        if self.frames.ndim == 3:
            expected = "gray"
        elif self.frames.ndim == 4 and self.frames.shape[-1] == 3:
            expected = "rgb"
        else:
            raise ValueError(f"frames must be (N,H,W) or (N,H,W,3), got {self.frames.shape}")
        if self.color_space != expected:
            raise ValueError(f"color_space {self.color_space!r} inconsistent with shape {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("frame sequence is empty")
        if not self.fps > 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def duration_s(self) -> float:
        return self.num_frames / self.fps

    def slice(self, start: int, end: int) -> "FrameSequence":
        if not 0 <= start < end <= self.num_frames:
            raise ValueError(f"bad frame slice [{start}, {end}) for {self.num_frames} frames")
        return FrameSequence(self.frames[start:end], self.fps, self.color_space)


@dataclass
class RegionTrack:
    """Per-frame ROI rectangles; ``None`` where the ear is not visible."""

    boxes: list[Box | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.boxes)

    def validate_against(self, clip: FrameSequence) -> None:
        if len(self.boxes) != clip.num_frames:
            raise ValueError(
                f"track length {len(self.boxes)} != frame count {clip.num_frames}"
            )
        for i, box in enumerate(self.boxes):
            if box is None:
                continue
            x, y, w, h = box
            if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > clip.width or y + h > clip.height:
                raise ValueError(f"box {box} at frame {i} outside {clip.width}x{clip.height} frame")

    def slice(self, start: int, end: int) -> "RegionTrack":
        return RegionTrack(self.boxes[start:end])


def write_frames(clip: FrameSequence, path: str | Path) -> None:
    """Write the raw planar container: EFRM, u32 H W C N fps*1000, then samples.

    Samples are 8-bit, frame-major then channel-planar then row-major.
    """
    frames = clip.frames
    if frames.dtype != np.uint8:
        raise ValueError("only 8-bit frames can be written")
    n, h, w = frames.shape[:3]
    c = 1 if frames.ndim == 3 else 3
    path = Path(path)
    header = FRAMES_MAGIC + struct.pack("<5I", h, w, c, n, int(round(clip.fps * 1000)))
    planar = frames[:, None] if c == 1 else np.moveaxis(frames, -1, 1)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(planar).tobytes())
    os.replace(tmp, path)


def read_frames(path: str | Path) -> FrameSequence:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FRAMES_MAGIC:
            raise FrameFormatError(f"bad magic {magic!r} in {path}")
        head = fh.read(20)
        if len(head) != 20:
            raise FrameFormatError(f"truncated header in {path}")
        h, w, c, n, fps_milli = struct.unpack("<5I", head)
        if c not in (1, 3):
            raise FrameFormatError(f"unsupported channel count {c}")
        if fps_milli == 0 or n == 0 or h == 0 or w == 0:
            raise FrameFormatError("zero dimension or fps in header")
        payload = fh.read(n * c * h * w)
        if len(payload) != n * c * h * w:
            raise FrameFormatError(f"truncated payload in {path}")
    planar = np.frombuffer(payload, dtype=np.uint8).reshape(n, c, h, w)
    if c == 1:
        return FrameSequence(planar[:, 0], fps_milli / 1000.0, "gray")
    return FrameSequence(np.moveaxis(planar, 1, -1), fps_milli / 1000.0, "rgb")


def load_frame_dir(path: str | Path, fps: float) -> FrameSequence:
    """Load a directory of PNG/PGM images, sorted by filename."""
    from PIL import Image

    files = sorted(
        p for p in Path(path).iterdir() if p.suffix.lower() in (".png", ".pgm")
    )
    if not files:
        raise FrameFormatError(f"no PNG/PGM frames under {path}")
    images = []
    for p in files:
        with Image.open(p) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            images.append(np.asarray(im))
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise FrameFormatError(f"frames under {path} have mixed shapes {sorted(shapes)}")
    stack = np.stack(images)
    space = "gray" if stack.ndim == 3 else "rgb"
    return FrameSequence(stack, fps, space)


def load_clip(path: str | Path, fps: float | None = None) -> FrameSequence:
    """Load a clip from a ``.frames`` file or a frame directory."""
    path = Path(path)
    if path.is_dir():
        if fps is None:
            raise ValueError("fps is required when loading a frame directory")
        return load_frame_dir(path, fps)
    return read_frames(path)


def write_region_track(track: RegionTrack, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_idx", "x", "y", "w", "h"])
        for i, box in enumerate(track.boxes):
            if box is not None:
                writer.writerow([i, *box])


def read_region_track(path: str | Path, num_frames: int) -> RegionTrack:
    """Read an ROI CSV; frames absent from the file become ``None`` boxes."""
    boxes: list[Box | None] = [None] * num_frames
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return RegionTrack(boxes)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                idx, x, y, w, h = (int(v) for v in row)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer field") from exc
            if not 0 <= idx < num_frames:
                raise ValueError(f"{path}:{lineno}: frame index {idx} out of range")
            boxes[idx] = (x, y, w, h)
    return RegionTrack(boxes)
