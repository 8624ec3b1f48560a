import struct

import numpy as np
import pytest

from efextract.backbones import MissingWeights, StubBackbone
from efextract.cli import main
from efextract.extract import ExtractionJob, extract, plan_windows
from efextract.video import UndecodableVideo, load_video

# Conformance is judged by the consumer: read every emitted file back with
# the classifier toolkit's own reader.
from earmotion.features import read_features, window_plan

FRAMES_MAGIC = b"EFRM"


def write_frames_container(path, frames, fps):
    n, h, w = frames.shape[:3]
    c = 1 if frames.ndim == 3 else 3
    planar = frames[:, None] if c == 1 else np.moveaxis(frames, -1, 1)
    with open(path, "wb") as fh:
        fh.write(FRAMES_MAGIC + struct.pack("<5I", h, w, c, n, int(round(fps * 1000))))
        fh.write(np.ascontiguousarray(planar).tobytes())


@pytest.fixture()
def clip64(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.integers(0, 256, (64, 32, 32), dtype=np.uint8)
    path = tmp_path / "clip.frames"
    write_frames_container(path, frames, 25.0)
    return path


def test_i3d_stub_extraction_conforms(clip64, tmp_path):
    out = tmp_path / "clip.efseq"
    job = ExtractionJob(
        video=str(clip64), stream="i3d-flow", fps=25.0, out=str(out),
        window=32, step=16, backbone="stub",
    )
    extract(job)
    seq = read_features(out)  # primary-side validation
    assert seq.stream == "i3d-flow"
    assert seq.dim == 1024
    assert seq.num_windows == 3  # 64 frames, window 32, step 16
    assert seq.window == 32 and seq.step == 16
    assert seq.clip_id == "clip"


def test_videomae_rows_are_768(clip64, tmp_path):
    out = tmp_path / "vm.efseq"
    job = ExtractionJob(
        video=str(clip64), stream="videomae-rgb", fps=25.0, out=str(out),
        sample_rate=2, backbone="stub",
    )
    extract(job)
    seq = read_features(out)
    assert seq.dim == 768
    # sample rate 2 -> 32-frame source span, non-overlapping
    assert seq.window == 32 and seq.step == 32
    assert seq.num_windows == 2
    assert seq.sample_rate == 2


@pytest.mark.parametrize("num_frames", [32, 33, 48, 64, 100, 255])
@pytest.mark.parametrize("window,step", [(32, 16), (32, 8), (16, 1), (50, 35)])
def test_plan_agrees_with_consumer(num_frames, window, step):
    if num_frames < window:
        pytest.skip("degenerate short clip handled consumer-side only")
    ours = plan_windows(num_frames, window, step)
    theirs = list(window_plan(num_frames, window, step))
    assert ours == theirs


def test_extraction_deterministic(clip64, tmp_path):
    out_a = tmp_path / "a.efseq"
    out_b = tmp_path / "b.efseq"
    for out in (out_a, out_b):
        extract(ExtractionJob(
            video=str(clip64), stream="i3d-rgb", fps=25.0, out=str(out),
            window=16, step=8, backbone="stub",
        ))
    assert out_a.read_bytes() == out_b.read_bytes()


def test_stub_flow_stream_sees_motion_not_appearance():
    static = np.full((8, 16, 16), 120, dtype=np.uint8)
    features_static = StubBackbone("i3d-flow")(static)
    moving = static.copy()
    moving[4:] = 200
    features_moving = StubBackbone("i3d-flow")(moving)
    assert np.allclose(features_static, 0.0)
    assert not np.allclose(features_moving, 0.0)


def test_job_lattice_validation():
    with pytest.raises(ValueError):
        ExtractionJob(video="x", stream="i3d-rgb", fps=30.0, out="y")
    with pytest.raises(ValueError):
        ExtractionJob(video="x", stream="i3d-rgb", fps=25.0, out="y", window=20)
    with pytest.raises(ValueError):
        ExtractionJob(video="x", stream="i3d-rgb", fps=25.0, out="y", step=3)
    with pytest.raises(ValueError):
        ExtractionJob(video="x", stream="videomae-rgb", fps=25.0, out="y", sample_rate=3)
    with pytest.raises(ValueError):
        ExtractionJob(video="x", stream="i3d-mixed", fps=25.0, out="y")


def test_video_too_short_is_validation_error(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "short.frames"
    write_frames_container(path, rng.integers(0, 256, (10, 8, 8), dtype=np.uint8), 25.0)
    job = ExtractionJob(video=str(path), stream="i3d-rgb", fps=25.0,
                        out=str(tmp_path / "o.efseq"), window=32, step=16, backbone="stub")
    with pytest.raises(ValueError, match="shorter than one"):
        extract(job)


def test_fps_mismatch_rejected(clip64, tmp_path):
    job = ExtractionJob(video=str(clip64), stream="i3d-rgb", fps=50.0,
                        out=str(tmp_path / "o.efseq"), backbone="stub")
    with pytest.raises(ValueError, match="fps"):
        extract(job)


def test_undecodable_video(tmp_path):
    bad = tmp_path / "garbage.frames"
    bad.write_bytes(b"not frames at all")
    with pytest.raises(UndecodableVideo):
        load_video(bad, fallback_fps=25.0)


# ---- CLI exit codes ----

def test_cli_success_stub(clip64, tmp_path, capsys):
    out = tmp_path / "out.efseq"
    code = main([
        "--video", str(clip64), "--stream", "i3d-rgb", "--fps", "25",
        "--window", "32", "--step", "16", "--out", str(out), "--backbone", "stub",
    ])
    assert code == 0
    assert read_features(out).dim == 1024


def test_cli_undecodable_exit_code(tmp_path):
    bad = tmp_path / "garbage.frames"
    bad.write_bytes(b"xxxx")
    code = main([
        "--video", str(bad), "--stream", "i3d-rgb", "--fps", "25",
        "--out", str(tmp_path / "o.efseq"), "--backbone", "stub",
    ])
    assert code == 10


def test_cli_missing_weights_exit_code(clip64, tmp_path):
    code = main([
        "--video", str(clip64), "--stream", "i3d-rgb", "--fps", "25",
        "--out", str(tmp_path / "o.efseq"),
        "--backbone", "torchscript", "--weights-dir", str(tmp_path / "nowhere"),
    ])
    assert code == 11


def test_cli_validation_exit_code(clip64, tmp_path):
    code = main([
        "--video", str(clip64), "--stream", "i3d-rgb", "--fps", "30",
        "--out", str(tmp_path / "o.efseq"), "--backbone", "stub",
    ])
    assert code == 1


# ---- TorchScript backbone path ----

torch = pytest.importorskip("torch")


class PoolProject(torch.nn.Module):
    """Minimal stand-in for an exported pretrained backbone."""

    def __init__(self, dim: int):
        super().__init__()
        gen = torch.Generator().manual_seed(7)
        self.proj = torch.nn.Parameter(torch.randn(dim, generator=gen), requires_grad=False)

    def forward(self, window: torch.Tensor) -> torch.Tensor:
        return self.proj * window.mean()


def export_backbone(tmp_path, stream, dim):
    weights = tmp_path / "weights"
    weights.mkdir(exist_ok=True)
    module = torch.jit.script(PoolProject(dim))
    module.save(str(weights / f"{stream}.pt"))
    return weights


def test_torchscript_backbone_end_to_end(clip64, tmp_path):
    weights = export_backbone(tmp_path, "i3d-rgb", 1024)
    out = tmp_path / "ts.efseq"
    code = main([
        "--video", str(clip64), "--stream", "i3d-rgb", "--fps", "25",
        "--window", "32", "--step", "16", "--out", str(out),
        "--backbone", "torchscript", "--weights-dir", str(weights),
    ])
    assert code == 0
    seq = read_features(out)
    assert seq.dim == 1024 and seq.num_windows == 3


def test_torchscript_dimension_mismatch_exit_code(clip64, tmp_path):
    weights = export_backbone(tmp_path, "i3d-rgb", 999)  # wrong width on purpose
    code = main([
        "--video", str(clip64), "--stream", "i3d-rgb", "--fps", "25",
        "--window", "32", "--step", "16", "--out", str(tmp_path / "o.efseq"),
        "--backbone", "torchscript", "--weights-dir", str(weights),
    ])
    assert code == 12
