"""Frame loading for extraction jobs.

Supported sources: the raw planar `.frames` container, a directory of
PNG/PGM images (fps then comes from the job), and — when OpenCV is
importable — ordinary video files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

FRAMES_MAGIC = b"EFRM"


class UndecodableVideo(ValueError):
    """The input cannot be decoded by any available reader."""


def _read_frames_container(path: Path) -> tuple[np.ndarray, float]:
    import struct

    with open(path, "rb") as fh:
        if fh.read(4) != FRAMES_MAGIC:
            raise UndecodableVideo(f"{path}: not a .frames container")
        head = fh.read(20)
        if len(head) != 20:
            raise UndecodableVideo(f"{path}: truncated header")
        h, w, c, n, fps_milli = struct.unpack("<5I", head)
        if c not in (1, 3) or 0 in (h, w, n, fps_milli):
            raise UndecodableVideo(f"{path}: bad header fields")
        payload = fh.read(n * c * h * w)
        if len(payload) != n * c * h * w:
            raise UndecodableVideo(f"{path}: truncated payload")
    planar = np.frombuffer(payload, dtype=np.uint8).reshape(n, c, h, w)
    frames = planar[:, 0] if c == 1 else np.moveaxis(planar, 1, -1)
    return frames.copy(), fps_milli / 1000.0


def _read_image_dir(path: Path, fps: float) -> tuple[np.ndarray, float]:
    try:
        from PIL import Image
    except ImportError as exc:
        raise UndecodableVideo("Pillow is required to read image directories") from exc
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".pgm"))
    if not files:
        raise UndecodableVideo(f"{path}: no PNG/PGM frames")
    frames = []
    for p in files:
        with Image.open(p) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            frames.append(np.asarray(im))
    if len({f.shape for f in frames}) != 1:
        raise UndecodableVideo(f"{path}: mixed frame shapes")
    return np.stack(frames), fps


def _read_with_opencv(path: Path) -> tuple[np.ndarray, float]:
    try:
        import cv2
    except ImportError as exc:
        raise UndecodableVideo(f"{path}: no reader for this format (OpenCV unavailable)") from exc
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise UndecodableVideo(f"{path}: OpenCV cannot open this file")
    fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    frames = []
    while True:
        got, frame = cap.read()
        if not got:
            break
        frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
    cap.release()
    if not frames or fps <= 0:
        raise UndecodableVideo(f"{path}: no decodable frames")
    return np.stack(frames), float(fps)


def load_video(path: str | Path, fallback_fps: float) -> tuple[np.ndarray, float]:
    """Return (frames, fps); frames are (N, H, W) or (N, H, W, 3) uint8."""
    path = Path(path)
    if not path.exists():
        raise UndecodableVideo(f"{path}: no such file or directory")
    if path.is_dir():
        return _read_image_dir(path, fallback_fps)
    if path.suffix == ".frames":
        return _read_frames_container(path)
    return _read_with_opencv(path)
