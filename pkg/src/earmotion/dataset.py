"""Annotation parsing and balanced clip-manifest construction.

Timed action-unit labels come in as CSV rows ``video_id,au_code,start_s,end_s``.
Ear-related records become movement clips; background clips of random
duration between 0.5 and 3 seconds are rejection-sampled away from every
ear interval until the classes balance.  Clip-level photometric
augmentation lives here too since it never changes a label.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frameio import FrameSequence

LABEL_MOVEMENT = "movement"
LABEL_BACKGROUND = "background"
LABEL_UNOBSERVED = "unobserved"

SPLITS = ("train", "val", "test")

MIN_CLIP_S = 0.5
MAX_CLIP_S = 3.0

# Bounded rejection sampling: attempts per background clip.
REJECTION_ATTEMPTS = 1000

AU_CODE_RE = re.compile(r"^[A-Z]+[0-9]+$")

DEFAULT_EAR_PREFIXES = frozenset({"EAD"})


class AnnotationError(ValueError):
    """Malformed annotation file; carries the offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class AnnotationRecord:
    video_id: str
    au_code: str
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not self.video_id:
            raise ValueError("empty video_id")
        if not AU_CODE_RE.match(self.au_code):
            raise ValueError(f"au_code {self.au_code!r} does not match LETTERS+DIGITS")
        if self.start_s < 0:
            raise ValueError(f"start_s must be >= 0, got {self.start_s}")
        if not self.end_s > self.start_s:
            raise ValueError(f"end_s {self.end_s} must be > start_s {self.start_s}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class ClipEntry:
    video_id: str
    start_s: float
    end_s: float
    label: str
    au_code: str | None = None
    split: str = "train"
    clip_id: str = ""

    def __post_init__(self) -> None:
        if self.label not in (LABEL_MOVEMENT, LABEL_BACKGROUND):
            raise ValueError(f"bad label {self.label!r}")
        if not self.end_s > self.start_s:
            raise ValueError("clip duration must be positive")
        if (self.au_code is not None) != (self.label == LABEL_MOVEMENT):
            raise ValueError("au_code must be present exactly for movement clips")
        if self.split not in SPLITS:
            raise ValueError(f"bad split {self.split!r}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class ClipManifest:
    entries: list[ClipEntry]
    seed: int
    source: str
    background_shortfall: int = 0

    def count(self, label: str) -> int:
        return sum(1 for e in self.entries if e.label == label)

    def split_entries(self, split: str) -> list[ClipEntry]:
        return [e for e in self.entries if e.split == split]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "source": self.source,
            "background_shortfall": self.background_shortfall,
            "entries": [
                {
                    "clip_id": e.clip_id,
                    "video_id": e.video_id,
                    "start_s": e.start_s,
                    "end_s": e.end_s,
                    "label": e.label,
                    "au_code": e.au_code,
                    "split": e.split,
                }
                for e in self.entries
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, payload: dict) -> "ClipManifest":
        entries = [
            ClipEntry(
                video_id=e["video_id"],
                start_s=e["start_s"],
                end_s=e["end_s"],
                label=e["label"],
                au_code=e.get("au_code"),
                split=e["split"],
                clip_id=e.get("clip_id", ""),
            )
            for e in payload["entries"]
        ]
        return cls(
            entries=entries,
            seed=payload["seed"],
            source=payload["source"],
            background_shortfall=payload.get("background_shortfall", 0),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ClipManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def parse_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Read ``video_id,au_code,start_s,end_s`` rows; line 1 is a header."""
    records: list[AnnotationRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if lineno == 1 or not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise AnnotationError(lineno, f"expected 4 fields, got {len(parts)}")
            video_id, au_code, start_raw, end_raw = parts
            try:
                start_s, end_s = float(start_raw), float(end_raw)
            except ValueError:
                raise AnnotationError(lineno, f"non-numeric time in {start_raw!r}/{end_raw!r}") from None
            try:
                records.append(AnnotationRecord(video_id, au_code, start_s, end_s))
            except ValueError as exc:
                raise AnnotationError(lineno, str(exc)) from None
    return records


def filter_ear_records(
    records: list[AnnotationRecord],
    ear_codes: frozenset[str] | set[str] = DEFAULT_EAR_PREFIXES,
) -> list[AnnotationRecord]:
    """Keep records whose code starts with an ear prefix; order preserved."""
    prefixes = tuple(ear_codes)
    return [r for r in records if r.au_code.startswith(prefixes)]


def _overlaps(start: float, end: float, records: list[AnnotationRecord]) -> bool:
    return any(start < r.end_s and r.start_s < end for r in records)


def sample_background(
    records: list[AnnotationRecord],
    video_duration_s: float,
    target_count: int,
    rng_seed,
    video_id: str | None = None,
) -> list[ClipEntry]:
    """Rejection-sample background clips that avoid every ear interval.

    Durations are uniform in [0.5, 3.0] s.  Each clip gets up to 1000
    attempts; impossible placements simply yield fewer clips, and the caller
    accounts for the shortfall.
    """
    if video_duration_s <= 0:
        raise ValueError(f"video_duration_s must be > 0, got {video_duration_s}")
    vids = {r.video_id for r in records}
    if len(vids) > 1:
        raise ValueError(f"records span multiple videos: {sorted(vids)}")
    if video_id is None:
        if not vids:
            raise ValueError("video_id is required when no records are given")
        video_id = next(iter(vids))
    elif vids and video_id not in vids:
        raise ValueError(f"video_id {video_id!r} does not match records ({sorted(vids)})")

    rng = np.random.default_rng(rng_seed)
    entries: list[ClipEntry] = []
    for _ in range(target_count):
        for _attempt in range(REJECTION_ATTEMPTS):
            duration = float(rng.uniform(MIN_CLIP_S, MAX_CLIP_S))
            if duration > video_duration_s:
                continue
            start = float(rng.uniform(0.0, video_duration_s - duration))
            if not _overlaps(start, start + duration, records):
                entries.append(
                    ClipEntry(
                        video_id=video_id,
                        start_s=start,
                        end_s=start + duration,
                        label=LABEL_BACKGROUND,
                    )
                )
                break
    return entries


def _clamp_movement_clip(record: AnnotationRecord, video_duration_s: float) -> tuple[float, float]:
    """Clamp a movement clip into [0.5, 3.0] s around the annotation midpoint."""
    duration = min(max(record.duration_s, MIN_CLIP_S), MAX_CLIP_S)
    if duration > video_duration_s:
        raise ValueError(
            f"video {record.video_id} ({video_duration_s}s) shorter than minimum clip {duration}s"
        )
    mid = 0.5 * (record.start_s + record.end_s)
    start = mid - duration / 2.0
    # Shift back inside the video if padding ran over an edge.
    start = min(max(start, 0.0), video_duration_s - duration)
    return start, start + duration


def _split_counts(n: int, fractions: tuple[float, float, float]) -> list[int]:
    bounds = [int(round(n * sum(fractions[: i + 1]))) for i in range(3)]
    bounds[2] = n
    prev = 0
    counts = []
    for b in bounds:
        counts.append(max(b - prev, 0))
        prev = max(b, prev)
    return counts


def _assign_splits_stratified(entries: list[ClipEntry], fractions, rng: np.random.Generator) -> None:
    for label in (LABEL_MOVEMENT, LABEL_BACKGROUND):
        group = [e for e in entries if e.label == label]
        order = rng.permutation(len(group))
        counts = _split_counts(len(group), fractions)
        cursor = 0
        for split, count in zip(SPLITS, counts):
            for k in order[cursor : cursor + count]:
                group[k].split = split
            cursor += count


def _assign_splits_subject_wise(entries: list[ClipEntry], fractions, rng: np.random.Generator) -> None:
    videos = sorted({e.video_id for e in entries})
    order = rng.permutation(len(videos))
    total = len(entries)
    per_video = {v: sum(1 for e in entries if e.video_id == v) for v in videos}
    assignment: dict[str, str] = {}
    cum = 0.0
    split_i = 0
    budget = fractions[0] * total
    for k in order:
        video = videos[k]
        if cum >= budget and split_i < 2:
            split_i += 1
            budget += fractions[split_i] * total
        assignment[video] = SPLITS[split_i]
        cum += per_video[video]
    for e in entries:
        e.split = assignment[e.video_id]


def build_manifest(
    records: list[AnnotationRecord],
    per_video_durations: dict[str, float],
    rng_seed: int,
    split_fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
    subject_wise: bool = False,
    source: str = "",
) -> ClipManifest:
    """One movement clip per ear record plus balancing background clips.

    Background targets are spread over all known videos; a second sampling
    pass redistributes any per-video shortfall before giving up and
    recording it on the manifest.  Splits are stratified by label (or
    assigned whole-video when ``subject_wise``) under the same seed.
    """
    if not records:
        raise ValueError("empty positive class: no ear records to build from")
    if any(f < 0 for f in split_fractions) or abs(sum(split_fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {split_fractions}")
    for r in records:
        if r.video_id not in per_video_durations:
            raise ValueError(f"no duration for video {r.video_id!r}")

    entries: list[ClipEntry] = []
    for r in records:
        start, end = _clamp_movement_clip(r, per_video_durations[r.video_id])
        entries.append(
            ClipEntry(video_id=r.video_id, start_s=start, end_s=end, label=LABEL_MOVEMENT, au_code=r.au_code)
        )
    n_movement = len(entries)

    videos = sorted(per_video_durations)
    by_video = {v: [r for r in records if r.video_id == v] for v in videos}
    base, extra = divmod(n_movement, len(videos))
    targets = {v: base + (1 if i < extra else 0) for i, v in enumerate(videos)}

    backgrounds: list[ClipEntry] = []
    for i, v in enumerate(videos):
        backgrounds.extend(
            sample_background(by_video[v], per_video_durations[v], targets[v], (rng_seed, i), video_id=v)
        )
    deficit = n_movement - len(backgrounds)
    if deficit > 0:
        for i, v in enumerate(videos):
            if deficit <= 0:
                break
            got = sample_background(
                by_video[v], per_video_durations[v], deficit, (rng_seed, i, 1), video_id=v
            )
            backgrounds.extend(got)
            deficit -= len(got)
    entries.extend(backgrounds)
    shortfall = max(n_movement - len(backgrounds), 0)

    rng = np.random.default_rng((rng_seed, 999))
    if subject_wise:
        _assign_splits_subject_wise(entries, split_fractions, rng)
    else:
        _assign_splits_stratified(entries, split_fractions, rng)

    entries.sort(key=lambda e: (e.video_id, e.start_s, e.end_s, e.label))
    counters: dict[str, int] = {}
    for e in entries:
        k = counters.get(e.video_id, 0)
        e.clip_id = f"{e.video_id}_{k:04d}"
        counters[e.video_id] = k + 1

    return ClipManifest(entries=entries, seed=_seed_repr(rng_seed), source=source, background_shortfall=shortfall)


def _seed_repr(rng_seed) -> int:
    return int(rng_seed) if np.isscalar(rng_seed) else int(rng_seed[0])


def clip_frame_range(entry: ClipEntry, fps: float, num_frames: int) -> tuple[int, int]:
    """Manifest seconds to frame indices: frame = round(seconds * fps),
    clamped into the video."""
    start = int(round(entry.start_s * fps))
    end = int(round(entry.end_s * fps))
    end = min(max(end, start + 1), num_frames)
    start = max(min(start, end - 1), 0)
    return start, end


def extract_clip(video: FrameSequence, entry: ClipEntry) -> FrameSequence:
    """Cut one manifest entry out of its source video."""
    start, end = clip_frame_range(entry, video.fps, video.num_frames)
    return video.slice(start, end)


@dataclass(frozen=True)
class AugmentSpec:
    """Per-clip augmentation ranges; factors are drawn once per clip."""

    flip_prob: float = 0.5
    brightness: tuple[float, float] = (0.8, 1.2)
    contrast: tuple[float, float] = (0.8, 1.2)
    saturation: tuple[float, float] = (0.8, 1.2)
    hue: tuple[float, float] = (-0.05, 0.05)

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must be in [0, 1]")
        for name in ("brightness", "contrast", "saturation"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"bad {name} range ({lo}, {hi})")
        lo, hi = self.hue
        if lo > hi or lo < -0.5 or hi > 0.5:
            raise ValueError(f"hue range must lie in [-0.5, 0.5], got ({lo}, {hi})")


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.maximum(maxc, 1e-12), 0.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe = np.maximum(delta, 1e-12)
    h = np.select(
        [maxc == r, maxc == g],
        [((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    )
    h = np.where(delta > 0, h / 6.0, 0.0)
    return np.stack([h, s, maxc], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    k = h * 6.0
    i = np.floor(k)
    f = k - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.select([i == n for n in range(6)], choices_r)
    g = np.select([i == n for n in range(6)], choices_g)
    b = np.select([i == n for n in range(6)], choices_b)
    return np.stack([r, g, b], axis=-1)


def augment_clip(frames: FrameSequence, spec: AugmentSpec, rng_seed) -> FrameSequence:
    """Seeded horizontal flip plus photometric jitter, label-preserving.

    All factors are drawn once and applied to every frame; pixel values stay
    in float until a single final round-half-even back to 8 bits.
    """
    if frames.frames.dtype != np.uint8:
        raise ValueError("augment_clip expects 8-bit frames")
    rng = np.random.default_rng(rng_seed)
    do_flip = bool(rng.random() < spec.flip_prob)
    brightness = float(rng.uniform(*spec.brightness))
    contrast = float(rng.uniform(*spec.contrast))
    saturation = float(rng.uniform(*spec.saturation))
    hue_shift = float(rng.uniform(*spec.hue))

    data = frames.frames
    if do_flip:
        data = data[:, :, ::-1]
    out = data.astype(np.float64)

    out = out * brightness
    out = (out - 128.0) * contrast + 128.0
    if frames.color_space == "rgb" and (saturation != 1.0 or hue_shift != 0.0):
        hsv = _rgb_to_hsv(np.clip(out, 0.0, 255.0) / 255.0)
        hsv[..., 0] = (hsv[..., 0] + hue_shift) % 1.0
        hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0.0, 1.0)
        out = _hsv_to_rgb(hsv) * 255.0

    out = np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8)
    return FrameSequence(np.ascontiguousarray(out), frames.fps, frames.color_space)
