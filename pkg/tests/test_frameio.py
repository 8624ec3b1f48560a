import numpy as np
import pytest

from earmotion.frameio import (
    FrameFormatError,
    FrameSequence,
    RegionTrack,
    load_clip,
    load_frame_dir,
    read_frames,
    read_region_track,
    write_frames,
    write_region_track,
)


def gray_clip(n=4, h=6, w=8, fps=25.0, seed=0):
    rng = np.random.default_rng(seed)
    return FrameSequence(rng.integers(0, 256, (n, h, w), dtype=np.uint8), fps, "gray")


def test_frames_round_trip_gray(tmp_path):
    clip = gray_clip()
    path = tmp_path / "c.frames"
    write_frames(clip, path)
    loaded = read_frames(path)
    assert np.array_equal(loaded.frames, clip.frames)
    assert loaded.fps == 25.0
    assert loaded.color_space == "gray"


def test_frames_round_trip_rgb(tmp_path):
    rng = np.random.default_rng(1)
    clip = FrameSequence(rng.integers(0, 256, (3, 5, 7, 3), dtype=np.uint8), 50.0, "rgb")
    path = tmp_path / "c.frames"
    write_frames(clip, path)
    loaded = read_frames(path)
    assert np.array_equal(loaded.frames, clip.frames)
    assert loaded.color_space == "rgb"


def test_frames_bad_magic(tmp_path):
    path = tmp_path / "bad.frames"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(FrameFormatError):
        read_frames(path)


def test_frames_truncated(tmp_path):
    clip = gray_clip()
    path = tmp_path / "c.frames"
    write_frames(clip, path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(FrameFormatError):
        read_frames(path)


def test_frame_sequence_validation():
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((3, 4, 4), dtype=np.uint8), 0.0, "gray")
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((3, 4, 4, 3), dtype=np.uint8), 25.0, "gray")
    with pytest.raises(ValueError):
        FrameSequence(np.zeros((0, 4, 4), dtype=np.uint8), 25.0, "gray")


def test_frame_dir_loading(tmp_path):
    from PIL import Image

    rng = np.random.default_rng(2)
    frames = rng.integers(0, 256, (3, 6, 6), dtype=np.uint8)
    for i, frame in enumerate(frames):
        Image.fromarray(frame, mode="L").save(tmp_path / f"frame_{i:03d}.png")
    clip = load_frame_dir(tmp_path, fps=25.0)
    assert np.array_equal(clip.frames, frames)
    clip2 = load_clip(tmp_path, fps=25.0)
    assert np.array_equal(clip2.frames, frames)


def test_frame_dir_requires_fps(tmp_path):
    with pytest.raises(ValueError):
        load_clip(tmp_path)


def test_region_track_round_trip(tmp_path):
    track = RegionTrack([(0, 1, 4, 3), None, (2, 2, 3, 3)])
    path = tmp_path / "roi.csv"
    write_region_track(track, path)
    loaded = read_region_track(path, 3)
    assert loaded.boxes == track.boxes


def test_region_track_missing_frames_are_none(tmp_path):
    path = tmp_path / "roi.csv"
    path.write_text("frame_idx,x,y,w,h\n1,0,0,2,2\n")
    track = read_region_track(path, 4)
    assert track.boxes == [None, (0, 0, 2, 2), None, None]


def test_region_track_validation():
    clip = gray_clip(n=2, h=4, w=4)
    RegionTrack([(0, 0, 4, 4), None]).validate_against(clip)
    with pytest.raises(ValueError):
        RegionTrack([(0, 0, 5, 4), None]).validate_against(clip)
    with pytest.raises(ValueError):
        RegionTrack([(0, 0, 4, 4)]).validate_against(clip)


def test_region_track_bad_row(tmp_path):
    path = tmp_path / "roi.csv"
    path.write_text("frame_idx,x,y,w,h\n0,1,2\n")
    with pytest.raises(ValueError):
        read_region_track(path, 2)


def test_clip_slice():
    clip = gray_clip(n=6)
    part = clip.slice(2, 5)
    assert part.num_frames == 3
    assert np.array_equal(part.frames, clip.frames[2:5])
    with pytest.raises(ValueError):
        clip.slice(4, 2)
