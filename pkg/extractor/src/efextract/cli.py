"""`extract-features` command line.

Exit codes: 0 success, 1 validation error, 10 undecodable video,
11 missing weights, 12 backbone/stream dimension mismatch.
"""

from __future__ import annotations

import argparse
import sys

from .backbones import MissingWeights
from .efseq import DimensionMismatch
from .extract import ExtractionJob, extract
from .video import UndecodableVideo

EXIT_VALIDATION = 1
EXIT_UNDECODABLE = 10
EXIT_MISSING_WEIGHTS = 11
EXIT_DIM_MISMATCH = 12


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extract-features", description=__doc__)
    parser.add_argument("--video", required=True, help=".frames file, image directory, or video file")
    parser.add_argument("--stream", required=True, choices=["i3d-rgb", "i3d-flow", "videomae-rgb"])
    parser.add_argument("--fps", type=float, required=True, help="source fps (25 or 50)")
    parser.add_argument("--window", type=int, default=32, help="i3d window in frames")
    parser.add_argument("--step", type=int, default=16, help="i3d step in frames")
    parser.add_argument("--sample-rate", type=int, default=1, help="videomae frame subsampling")
    parser.add_argument("--out", required=True, help="output .efseq path")
    parser.add_argument("--backbone", default="torchscript", choices=["torchscript", "stub"])
    parser.add_argument("--weights-dir", help="directory holding <stream>.pt TorchScript artifacts")
    parser.add_argument("--clip-id", default="", help="clip id stored in the header (default: video stem)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExtractionJob(
            video=args.video,
            stream=args.stream,
            fps=args.fps,
            out=args.out,
            window=args.window,
            step=args.step,
            sample_rate=args.sample_rate,
            backbone=args.backbone,
            weights_dir=args.weights_dir,
            clip_id=args.clip_id,
        )
        path = extract(job)
    except UndecodableVideo as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNDECODABLE
    except MissingWeights as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_WEIGHTS
    except DimensionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIM_MISMATCH
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
