import numpy as np
import pytest

from earmotion.dataset import (
    LABEL_BACKGROUND,
    LABEL_MOVEMENT,
    AnnotationError,
    AnnotationRecord,
    AugmentSpec,
    ClipManifest,
    augment_clip,
    build_manifest,
    filter_ear_records,
    parse_annotations,
    sample_background,
)
from earmotion.frameio import FrameSequence


def write_csv(tmp_path, lines):
    path = tmp_path / "ann.csv"
    path.write_text("video_id,au_code,start_s,end_s\n" + "".join(line + "\n" for line in lines))
    return path


# ---- parsing ----

def test_parse_simple_record(tmp_path):
    path = write_csv(tmp_path, ["S10,EAD104,12.40,13.10"])
    records = parse_annotations(path)
    assert records == [AnnotationRecord("S10", "EAD104", 12.4, 13.1)]


def test_parse_header_only(tmp_path):
    assert parse_annotations(write_csv(tmp_path, [])) == []


def test_parse_end_before_start(tmp_path):
    path = write_csv(tmp_path, ["S1,EAD101,5.0,4.0"])
    with pytest.raises(AnnotationError) as err:
        parse_annotations(path)
    assert err.value.line == 2


def test_parse_malformed_line(tmp_path):
    path = write_csv(tmp_path, ["S1,EAD101,5.0,6.0", "S1,EAD101,oops,7.0"])
    with pytest.raises(AnnotationError) as err:
        parse_annotations(path)
    assert err.value.line == 3


def test_parse_bad_code_shape(tmp_path):
    path = write_csv(tmp_path, ["S1,ead101,5.0,6.0"])
    with pytest.raises(AnnotationError):
        parse_annotations(path)


# ---- filtering ----

def test_filter_keeps_ear_codes():
    records = [
        AnnotationRecord("S1", "EAD104", 0.0, 1.0),
        AnnotationRecord("S1", "AU101", 1.0, 2.0),
        AnnotationRecord("S1", "AD38", 2.0, 3.0),
    ]
    kept = filter_ear_records(records)
    assert [r.au_code for r in kept] == ["EAD104"]


def test_filter_empty_and_identity():
    assert filter_ear_records([]) == []
    records = [AnnotationRecord("S1", f"EAD10{i}", i, i + 0.5) for i in range(1, 5)]
    assert filter_ear_records(records) == records


# ---- background sampling ----

def ear(video, start, end):
    return AnnotationRecord(video, "EAD104", start, end)


def test_background_durations_in_range():
    records = [ear("S1", 5.0, 6.0)]
    entries = sample_background(records, 60.0, 20, rng_seed=3)
    assert len(entries) == 20
    for e in entries:
        assert 0.5 <= e.duration_s <= 3.0
        assert e.label == LABEL_BACKGROUND


def test_background_never_overlaps():
    records = [ear("S1", 2.0, 4.0), ear("S1", 10.0, 12.0), ear("S1", 20.0, 29.0)]
    entries = sample_background(records, 30.0, 50, rng_seed=11)
    for e in entries:
        for r in records:
            assert not (e.start_s < r.end_s and r.start_s < e.end_s)


def test_background_fully_covered_video_yields_nothing():
    records = [ear("S1", 0.0, 30.0)]
    assert sample_background(records, 30.0, 5, rng_seed=0) == []


def test_background_deterministic():
    records = [ear("S1", 2.0, 4.0)]
    a = sample_background(records, 30.0, 10, rng_seed=42)
    b = sample_background(records, 30.0, 10, rng_seed=42)
    assert a == b


def test_background_validation():
    with pytest.raises(ValueError):
        sample_background([], -1.0, 3, rng_seed=0, video_id="S1")
    with pytest.raises(ValueError):
        sample_background([], 10.0, 3, rng_seed=0)  # video unknown
    with pytest.raises(ValueError):
        sample_background([ear("S1", 0, 1), ear("S2", 0, 1)], 10.0, 3, rng_seed=0)


# ---- manifest ----

def test_manifest_balances_classes():
    records = [ear("S1", 3.0 * k + 1.0, 3.0 * k + 2.0) for k in range(10)]
    manifest = build_manifest(records, {"S1": 60.0}, rng_seed=1)
    n_mv = manifest.count(LABEL_MOVEMENT)
    n_bg = manifest.count(LABEL_BACKGROUND)
    assert n_mv == 10
    assert abs(n_mv - n_bg) <= 1 or manifest.background_shortfall > 0


def test_manifest_requires_positive_class():
    with pytest.raises(ValueError, match="empty positive class"):
        build_manifest([], {"S1": 30.0}, rng_seed=0)


def test_manifest_all_train_fractions():
    records = [ear("S1", 2.0 * k + 1.0, 2.0 * k + 1.8) for k in range(6)]
    manifest = build_manifest(records, {"S1": 40.0}, rng_seed=2, split_fractions=(1.0, 0.0, 0.0))
    assert all(e.split == "train" for e in manifest.entries)


def test_manifest_clamps_long_and_short_clips():
    records = [ear("S1", 10.0, 18.0), ear("S1", 30.0, 30.1)]
    manifest = build_manifest(records, {"S1": 60.0}, rng_seed=3)
    movements = [e for e in manifest.entries if e.label == LABEL_MOVEMENT]
    long = next(e for e in movements if abs((e.start_s + e.end_s) / 2 - 14.0) < 1e-9)
    short = next(e for e in movements if abs((e.start_s + e.end_s) / 2 - 30.05) < 1e-9)
    assert long.duration_s == pytest.approx(3.0)
    assert short.duration_s == pytest.approx(0.5)


def test_manifest_split_partition_and_clip_ids():
    records = [ear("S1", 3.0 * k + 1.0, 3.0 * k + 2.0) for k in range(12)]
    manifest = build_manifest(records, {"S1": 80.0}, rng_seed=4)
    ids = [e.clip_id for e in manifest.entries]
    assert len(set(ids)) == len(ids)
    assert {e.split for e in manifest.entries} <= {"train", "val", "test"}
    assert sum(len(manifest.split_entries(s)) for s in ("train", "val", "test")) == len(manifest.entries)


def test_manifest_subject_wise_splits():
    records = [ear(f"S{v}", 3.0 * k + 1.0, 3.0 * k + 2.0) for v in range(1, 7) for k in range(4)]
    durations = {f"S{v}": 40.0 for v in range(1, 7)}
    manifest = build_manifest(records, durations, rng_seed=5, subject_wise=True)
    by_video = {}
    for e in manifest.entries:
        by_video.setdefault(e.video_id, set()).add(e.split)
    assert all(len(splits) == 1 for splits in by_video.values())


def test_manifest_deterministic_and_json_round_trip(tmp_path):
    records = [ear("S1", 3.0 * k + 1.0, 3.0 * k + 2.0) for k in range(8)]
    m1 = build_manifest(records, {"S1": 60.0, "S2": 45.0}, rng_seed=9)
    m2 = build_manifest(records, {"S1": 60.0, "S2": 45.0}, rng_seed=9)
    assert m1.to_dict() == m2.to_dict()
    path = tmp_path / "m.json"
    m1.save(path)
    assert ClipManifest.load(path).to_dict() == m1.to_dict()


# ---- clip extraction ----

def test_clip_frame_range_rounding():
    from earmotion.dataset import ClipEntry, clip_frame_range

    entry = ClipEntry("S1", 1.02, 2.5, "background")
    # frame = round(seconds * fps): 25.5 -> 26 (round-half-even), 62.5 -> 62
    assert clip_frame_range(entry, 25.0, 1000) == (26, 62)
    tail = ClipEntry("S1", 39.0, 41.0, "background")
    assert clip_frame_range(tail, 25.0, 1000) == (975, 1000)


def test_extract_clip_slices_video():
    from earmotion.dataset import ClipEntry, extract_clip

    video = FrameSequence(np.arange(100, dtype=np.uint8).repeat(16).reshape(100, 4, 4), 25.0, "gray")
    clip = extract_clip(video, ClipEntry("S1", 1.0, 2.0, "background"))
    assert clip.num_frames == 25
    assert clip.frames[0, 0, 0] == 25


# ---- augmentation ----

def gray_frames(value=128, n=3, h=6, w=8):
    return FrameSequence(np.full((n, h, w), value, dtype=np.uint8), 25.0, "gray")


def no_jitter(flip_prob=0.0):
    return AugmentSpec(
        flip_prob=flip_prob,
        brightness=(1.0, 1.0),
        contrast=(1.0, 1.0),
        saturation=(1.0, 1.0),
        hue=(0.0, 0.0),
    )


def test_augment_identity_when_disabled():
    rng = np.random.default_rng(0)
    clip = FrameSequence(rng.integers(0, 256, (4, 8, 8), dtype=np.uint8), 25.0, "gray")
    out = augment_clip(clip, no_jitter(), rng_seed=1)
    assert np.array_equal(out.frames, clip.frames)


def test_augment_flip_is_involution():
    rng = np.random.default_rng(1)
    clip = FrameSequence(rng.integers(0, 256, (2, 5, 9), dtype=np.uint8), 25.0, "gray")
    once = augment_clip(clip, no_jitter(flip_prob=1.0), rng_seed=2)
    twice = augment_clip(once, no_jitter(flip_prob=1.0), rng_seed=2)
    assert not np.array_equal(once.frames, clip.frames)
    assert np.array_equal(twice.frames, clip.frames)


def test_augment_brightness_rounding():
    # 128 * 1.2 = 153.6 (in exact arithmetic); round-half-even gives 154.
    spec = AugmentSpec(
        flip_prob=0.0,
        brightness=(1.2, 1.2),
        contrast=(1.0, 1.0),
        saturation=(1.0, 1.0),
        hue=(0.0, 0.0),
    )
    out = augment_clip(gray_frames(128), spec, rng_seed=0)
    expected = int(np.rint(np.float64(128) * 1.2))
    assert expected == 154
    assert np.all(out.frames == expected)


def test_augment_deterministic_and_label_free():
    rng = np.random.default_rng(3)
    clip = FrameSequence(rng.integers(0, 256, (3, 6, 6, 3), dtype=np.uint8), 25.0, "rgb")
    spec = AugmentSpec()
    a = augment_clip(clip, spec, rng_seed=77)
    b = augment_clip(clip, spec, rng_seed=77)
    assert np.array_equal(a.frames, b.frames)
    assert a.frames.shape == clip.frames.shape
    assert a.frames.dtype == np.uint8


def test_augment_hue_full_circle_is_identity():
    rng = np.random.default_rng(4)
    clip = FrameSequence(rng.integers(0, 256, (2, 4, 4, 3), dtype=np.uint8), 25.0, "rgb")
    spec = AugmentSpec(
        flip_prob=0.0,
        brightness=(1.0, 1.0),
        contrast=(1.0, 1.0),
        saturation=(1.0, 1.0),
        hue=(0.0, 0.0),
    )
    out = augment_clip(clip, spec, rng_seed=5)
    assert np.array_equal(out.frames, clip.frames)


def test_augment_spec_validation():
    with pytest.raises(ValueError):
        AugmentSpec(flip_prob=1.5)
    with pytest.raises(ValueError):
        AugmentSpec(brightness=(1.2, 0.8))
    with pytest.raises(ValueError):
        AugmentSpec(hue=(-0.6, 0.0))


def test_augment_requires_uint8():
    clip = FrameSequence(np.zeros((2, 4, 4), dtype=np.uint8), 25.0, "gray")
    clip.frames = clip.frames.astype(np.float32)
    with pytest.raises(ValueError):
        augment_clip(clip, AugmentSpec(), rng_seed=0)
