"""Deterministic synthetic fixtures: moving-patch clips with exact
ground-truth flow, ROI tracks that follow the patch, and linearly separable
Gaussian feature sequences for classifier tests.

Patch motion is integer pixels per frame so the declared displacement is the
rendered displacement, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LABEL_BACKGROUND, LABEL_MOVEMENT
from .features import FeatureSequence
from .frameio import FrameSequence, RegionTrack
from .optflow import FlowField, _gaussian_blur


@dataclass(frozen=True)
class TextureSpec:
    kind: str = "noise"  # noise | checker
    seed: int = 0
    period: int = 8

    def __post_init__(self) -> None:
        if self.kind not in ("noise", "checker"):
            raise ValueError(f"unknown texture {self.kind!r}")
        if self.period < 1:
            raise ValueError("checker period must be >= 1")


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str = "static-noise"  # static-noise | uniform
    seed: int = 0
    value: int = 96

    def __post_init__(self) -> None:
        if self.kind not in ("static-noise", "uniform"):
            raise ValueError(f"unknown background {self.kind!r}")
        if not 0 <= self.value <= 255:
            raise ValueError("uniform value must be an 8-bit level")


@dataclass(frozen=True)
class PatchSpec:
    x: int
    y: int
    w: int
    h: int
    vx: int = 0
    vy: int = 0

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError("patch must have positive size")


@dataclass(frozen=True)
class SynthSpec:
    height: int = 64
    width: int = 64
    num_frames: int = 10
    fps: float = 25.0
    patch: PatchSpec = field(default_factory=lambda: PatchSpec(8, 8, 24, 24))
    texture: TextureSpec = field(default_factory=TextureSpec)
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    roi_margin: int = 4

    def __post_init__(self) -> None:
        if self.height < 4 or self.width < 4 or self.num_frames < 2:
            raise ValueError("need at least a 4x4 frame and 2 frames")
        if not self.fps > 0:
            raise ValueError("fps must be > 0")
        if self.roi_margin < 0:
            raise ValueError("roi_margin must be >= 0")
        last = self.num_frames - 1
        p = self.patch
        for t in (0, last):
            x, y = p.x + t * p.vx, p.y + t * p.vy
            if x < 0 or y < 0 or x + p.w > self.width or y + p.h > self.height:
                raise ValueError(
                    f"patch leaves the {self.width}x{self.height} frame at t={t}: ({x},{y})"
                )


def band_limited_noise(shape: tuple[int, int], seed: int, lo: int = 40, hi: int = 215) -> np.ndarray:
    """Seeded uniform noise smoothed to be band-limited, stretched to [lo, hi]."""
    rng = np.random.default_rng(seed)
    img = _gaussian_blur(rng.uniform(0.0, 1.0, shape), 1.2)
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return np.round(img * (hi - lo) + lo).astype(np.uint8)


def _render_texture(spec: TextureSpec, h: int, w: int) -> np.ndarray:
    if spec.kind == "noise":
        return band_limited_noise((h, w), spec.seed)
    yy, xx = np.mgrid[0:h, 0:w]
    return (((yy // spec.period + xx // spec.period) % 2) * 170 + 40).astype(np.uint8)


def _render_background(spec: BackgroundSpec, h: int, w: int) -> np.ndarray:
    if spec.kind == "uniform":
        return np.full((h, w), spec.value, dtype=np.uint8)
    return band_limited_noise((h, w), spec.seed, lo=60, hi=160)


@dataclass
class GeneratedClip:
    frames: FrameSequence
    flows: list[FlowField]  # ground truth per consecutive pair
    roi: RegionTrack
    label: str


def generate_clip(spec: SynthSpec) -> GeneratedClip:
    """Render the moving patch and its exact per-pair flow fields."""
    background = _render_background(spec.background, spec.height, spec.width)
    texture = _render_texture(spec.texture, spec.patch.h, spec.patch.w)
    p = spec.patch

    frames = np.empty((spec.num_frames, spec.height, spec.width), dtype=np.uint8)
    boxes = []
    for t in range(spec.num_frames):
        x, y = p.x + t * p.vx, p.y + t * p.vy
        frame = background.copy()
        frame[y : y + p.h, x : x + p.w] = texture
        frames[t] = frame
        rx = max(x - spec.roi_margin, 0)
        ry = max(y - spec.roi_margin, 0)
        rw = min(x + p.w + spec.roi_margin, spec.width) - rx
        rh = min(y + p.h + spec.roi_margin, spec.height) - ry
        boxes.append((rx, ry, rw, rh))

    flows = []
    for t in range(spec.num_frames - 1):
        u = np.zeros((spec.height, spec.width))
        v = np.zeros((spec.height, spec.width))
        x, y = p.x + t * p.vx, p.y + t * p.vy
        u[y : y + p.h, x : x + p.w] = p.vx
        v[y : y + p.h, x : x + p.w] = p.vy
        flows.append(FlowField(u=u, v=v))

    label = LABEL_MOVEMENT if (p.vx, p.vy) != (0, 0) else LABEL_BACKGROUND
    return GeneratedClip(
        frames=FrameSequence(frames, spec.fps, "gray"),
        flows=flows,
        roi=RegionTrack(boxes),
        label=label,
    )


def generate_translation_clip(
    size: int = 64,
    num_frames: int = 6,
    velocity: tuple[int, int] = (2, 0),
    fps: float = 25.0,
    seed: int = 0,
    roi_margin: int = 4,
) -> GeneratedClip:
    """Whole-scene translation: every visible pixel moves by ``velocity``.

    Useful when the motion should fill the ROI (the per-pair ground-truth
    flow is the velocity everywhere); the ROI is a static interior box.
    """
    vx, vy = int(velocity[0]), int(velocity[1])
    if num_frames < 2 or size < 8:
        raise ValueError("need at least 2 frames and an 8px frame")
    margin = num_frames * max(abs(vx), abs(vy), 1) + 2
    texture = band_limited_noise((size + 2 * margin, size + 2 * margin), seed)
    frames = np.stack(
        [
            texture[margin - t * vy : margin - t * vy + size, margin - t * vx : margin - t * vx + size]
            for t in range(num_frames)
        ]
    )
    flows = [
        FlowField(u=np.full((size, size), float(vx)), v=np.full((size, size), float(vy)))
        for _ in range(num_frames - 1)
    ]
    box = (roi_margin, roi_margin, size - 2 * roi_margin, size - 2 * roi_margin)
    label = LABEL_MOVEMENT if (vx, vy) != (0, 0) else LABEL_BACKGROUND
    return GeneratedClip(
        frames=FrameSequence(frames, fps, "gray"),
        flows=flows,
        roi=RegionTrack([box] * num_frames),
        label=label,
    )


def generate_feature_dataset(
    n_per_class: int,
    t_range: tuple[int, int],
    dim: int,
    class_mean_shift: float,
    noise_sigma: float,
    seed: int,
) -> list[tuple[FeatureSequence, int]]:
    """Labelled separable sequences: class means +-shift on the first feature.

    ``dim`` must match a known stream so every sequence is a valid
    FeatureSequence (768 -> videomae-rgb, 1024 -> i3d-rgb).
    """
    stream_by_dim = {768: "videomae-rgb", 1024: "i3d-rgb"}
    if dim not in stream_by_dim:
        raise ValueError(f"dim must be one of {sorted(stream_by_dim)} for stream-valid sequences")
    stream = stream_by_dim[dim]
    window, step, sample_rate = (16, 16, 1) if stream == "videomae-rgb" else (32, 16, 0)
    items = []
    for arr, y, i in gaussian_sequence_arrays(n_per_class, t_range, dim, class_mean_shift, noise_sigma, seed):
        seq = FeatureSequence(
            data=arr.astype(np.float32),
            stream=stream,
            fps=25.0,
            window=window,
            step=step,
            sample_rate=sample_rate,
            clip_id=f"synth_{i:04d}",
        )
        items.append((seq, y))
    return items


def gaussian_sequence_arrays(
    n_per_class: int,
    t_range: tuple[int, int],
    dim: int,
    class_mean_shift: float,
    noise_sigma: float,
    seed: int,
) -> list[tuple[np.ndarray, int, int]]:
    """Raw (array, label, index) triplets for arbitrary dimensions."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    t_lo, t_hi = t_range
    if t_lo < 1 or t_hi < t_lo:
        raise ValueError(f"bad t_range {t_range}")
    rng = np.random.default_rng(seed)
    out = []
    index = 0
    for y in (1, 0):
        shift = class_mean_shift if y == 1 else -class_mean_shift
        for _ in range(n_per_class):
            t_len = int(rng.integers(t_lo, t_hi + 1))
            arr = rng.normal(0.0, noise_sigma, size=(t_len, dim))
            arr[:, 0] += shift
            out.append((arr, y, index))
            index += 1
    return out
