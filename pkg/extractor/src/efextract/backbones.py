"""Backbone registry.

Pretrained models arrive as exported TorchScript artifacts named
``<stream>.pt`` inside a weights directory; the adapter stays free of
architecture code and only validates the emitted dimension.  The scripted
module receives one window as a float32 tensor of shape (T, H, W, C) scaled
to [0, 1] and must return a 1-D feature vector.

The ``stub`` backbone is a deterministic seeded projection of pooled window
content: correct dimensions and bit-stable output without any weights, for
smoke tests and pipeline plumbing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .efseq import STREAM_DIMS


class MissingWeights(ValueError):
    """No usable weights artifact for the requested stream."""


# Pooled grid for the stub projection: (frames, rows, cols).
_STUB_GRID = (4, 8, 8)
_STUB_SEEDS = {"i3d-rgb": 101, "i3d-flow": 102, "videomae-rgb": 104}


def _pool_to_grid(window: np.ndarray) -> np.ndarray:
    """Average-pool a (T, H, W) window onto the fixed stub grid."""
    t, h, w = window.shape
    gt, gh, gw = _STUB_GRID
    ts = np.linspace(0, t, gt + 1).astype(int)
    hs = np.linspace(0, h, gh + 1).astype(int)
    ws = np.linspace(0, w, gw + 1).astype(int)
    out = np.empty(_STUB_GRID)
    for a in range(gt):
        t0, t1 = ts[a], max(ts[a + 1], ts[a] + 1)
        for b in range(gh):
            h0, h1 = hs[b], max(hs[b + 1], hs[b] + 1)
            for c in range(gw):
                w0, w1 = ws[c], max(ws[c + 1], ws[c] + 1)
                out[a, b, c] = window[t0:t1, h0:h1, w0:w1].mean()
    return out.reshape(-1)


def _to_gray(window: np.ndarray) -> np.ndarray:
    if window.ndim == 4:
        return window @ np.array([0.299, 0.587, 0.114])
    return window.astype(np.float64)


class StubBackbone:
    """Seeded random projection of pooled window statistics."""

    def __init__(self, stream: str):
        self.stream = stream
        dim = STREAM_DIMS[stream]
        rng = np.random.default_rng(_STUB_SEEDS[stream])
        n_in = int(np.prod(_STUB_GRID))
        self.projection = rng.standard_normal((dim, n_in)) / np.sqrt(n_in)

    def __call__(self, window: np.ndarray) -> np.ndarray:
        gray = _to_gray(window) / 255.0
        if self.stream == "i3d-flow":
            # learned-flow surrogate: temporal differences carry the motion
            gray = np.abs(np.diff(gray, axis=0)) if gray.shape[0] > 1 else gray * 0.0
        pooled = _pool_to_grid(gray)
        return (self.projection @ pooled).astype(np.float32)


class TorchScriptBackbone:
    """Wrapper around an exported TorchScript module for one stream."""

    def __init__(self, stream: str, weights_dir: str | Path):
        self.stream = stream
        path = Path(weights_dir) / f"{stream}.pt"
        if not path.exists():
            raise MissingWeights(f"no weights artifact at {path}")
        try:
            import torch
        except ImportError as exc:
            raise MissingWeights("torch is required for TorchScript backbones") from exc
        self._torch = torch
        try:
            self.module = torch.jit.load(str(path), map_location="cpu")
        except Exception as exc:
            raise MissingWeights(f"cannot load TorchScript artifact {path}: {exc}") from exc
        self.module.eval()

    def __call__(self, window: np.ndarray) -> np.ndarray:
        torch = self._torch
        if window.ndim == 3:
            window = window[..., None]
        tensor = torch.from_numpy(np.ascontiguousarray(window, dtype=np.float32) / 255.0)
        with torch.no_grad():
            out = self.module(tensor)
        vec = out.detach().cpu().numpy().reshape(-1)
        return vec.astype(np.float32)


def make_backbone(stream: str, kind: str, weights_dir: str | Path | None):
    if stream not in STREAM_DIMS or stream == "i3d-mixed":
        raise ValueError(f"no backbone extracts stream {stream!r}")
    if kind == "stub":
        return StubBackbone(stream)
    if kind == "torchscript":
        if weights_dir is None:
            raise MissingWeights("torchscript backbone needs --weights-dir")
        return TorchScriptBackbone(stream, weights_dir)
    raise ValueError(f"unknown backbone kind {kind!r}")
