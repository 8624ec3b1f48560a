"""Writer for the `.efseq` feature-file format.

This is an independent implementation of the cross-component contract:

    magic "EFSQ" | u16 version | u8 stream tag | u32 T | u32 D |
    u32 fps*1000 | u32 window | u32 step | u32 sample_rate |
    u16 clip_id length | clip_id UTF-8 | T*D little-endian float32 rows

The consumer validates stream/dimension pairing and finiteness on read, so
this writer enforces the same rules up front.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EFSQ"
VERSION = 1

STREAM_TAGS = {"i3d-rgb": 1, "i3d-flow": 2, "i3d-mixed": 3, "videomae-rgb": 4}
STREAM_DIMS = {"i3d-rgb": 1024, "i3d-flow": 1024, "i3d-mixed": 1024, "videomae-rgb": 768}

_HEADER = struct.Struct("<HB6I H")


class DimensionMismatch(ValueError):
    """Backbone output width disagrees with the stream contract."""


def write_efseq(
    path: str | Path,
    data: np.ndarray,
    stream: str,
    fps: float,
    window: int,
    step: int,
    sample_rate: int,
    clip_id: str,
) -> None:
    data = np.asarray(data, dtype=np.float32)
    if stream not in STREAM_TAGS:
        raise ValueError(f"unknown stream {stream!r}")
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"feature matrix must be TxD with T >= 1, got {data.shape}")
    if data.shape[1] != STREAM_DIMS[stream]:
        raise DimensionMismatch(
            f"stream {stream!r} requires {STREAM_DIMS[stream]}-d rows, backbone emitted {data.shape[1]}"
        )
    if not np.isfinite(data).all():
        raise ValueError("feature matrix contains non-finite values")
    clip_bytes = clip_id.encode("utf-8")
    header = MAGIC + _HEADER.pack(
        VERSION,
        STREAM_TAGS[stream],
        data.shape[0],
        data.shape[1],
        int(round(fps * 1000)),
        window,
        step,
        sample_rate,
        len(clip_bytes),
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(clip_bytes)
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    os.replace(tmp, path)
