"""Command-line entry points for the preprocessing/training/evaluation pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import classifier, dataset, evaluation, features, frameio, movdet, synth
from .dataset import LABEL_MOVEMENT


def _parse_seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return seed


def _load_durations(args) -> dict[str, float]:
    durations: dict[str, float] = {}
    if args.videos:
        for path in sorted(Path(args.videos).glob("*.frames")):
            clip = frameio.read_frames(path)
            durations[path.stem] = clip.duration_s
    if args.durations:
        with open(args.durations, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if lineno == 1 or not line:
                    continue
                video_id, dur = line.split(",")
                durations[video_id.strip()] = float(dur)
    if not durations:
        raise SystemExit("no video durations found; pass --videos and/or --durations")
    return durations


def cmd_preprocess(args) -> int:
    records = dataset.parse_annotations(args.annotations)
    ear = dataset.filter_ear_records(records, frozenset(args.ear_prefixes.split(",")))
    fractions = tuple(float(f) for f in args.split_fractions.split(","))
    if len(fractions) != 3:
        raise SystemExit("--split-fractions needs three comma-separated values")
    manifest = dataset.build_manifest(
        ear,
        _load_durations(args),
        args.seed,
        split_fractions=fractions,
        subject_wise=args.subject_wise,
        source=str(args.annotations),
    )
    manifest.save(args.out)
    print(
        f"manifest: {manifest.count(dataset.LABEL_MOVEMENT)} movement / "
        f"{manifest.count(dataset.LABEL_BACKGROUND)} background clips -> {args.out}"
    )
    if manifest.background_shortfall:
        print(f"warning: background shortfall of {manifest.background_shortfall} clips", file=sys.stderr)
    return 0


def cmd_clips(args) -> int:
    manifest = dataset.ClipManifest.load(args.manifest)
    videos = Path(args.videos)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache: dict[str, frameio.FrameSequence] = {}
    written = 0
    for entry in manifest.entries:
        if entry.video_id not in cache:
            cache[entry.video_id] = frameio.read_frames(videos / f"{entry.video_id}.frames")
        clip = dataset.extract_clip(cache[entry.video_id], entry)
        if args.augment_seed is not None:
            clip = dataset.augment_clip(clip, dataset.AugmentSpec(), (args.augment_seed, written))
        frameio.write_frames(clip, out / f"{entry.clip_id}.frames")
        written += 1
    print(f"{written} clips -> {out}")
    return 0


def cmd_movdet(args) -> int:
    clip = frameio.load_clip(args.clip, args.fps)
    roi = frameio.read_region_track(args.roi, clip.num_frames)
    cfg = movdet.MovDetConfig(threshold=args.threshold, sample_stride=args.stride)
    if args.timeline:
        timeline = movdet.movdet_timeline(
            clip, roi, cfg, window_s=args.window_s, stride_s=args.stride_s
        )
        evaluation.timeline_export(timeline, args.timeline, format="csv")
        print(f"{len(timeline.entries)} windows -> {args.timeline}")
        return 0
    result = movdet.movdet_classify(clip, roi, cfg)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2))
    else:
        print(f"{result.label} score={result.score:.6f}")
    return 0


def cmd_features_inspect(args) -> int:
    print(json.dumps(features.header_summary(args.file), indent=2))
    return 0


def _load_split(manifest: dataset.ClipManifest, feature_dir: Path, split: str):
    items = []
    for entry in manifest.split_entries(split):
        seq = features.read_features(feature_dir / f"{entry.clip_id}.efseq")
        items.append((entry, seq))
    return items


def _as_training_pairs(items):
    return [(seq.data, int(entry.label == LABEL_MOVEMENT)) for entry, seq in items]


def _config_from_toml(path: str | None, input_dim: int, seed: int) -> classifier.LstmConfig:
    overrides: dict = {}
    if path:
        with open(path, "rb") as fh:
            overrides = tomllib.load(fh).get("lstm", {})
    overrides.setdefault("input_dim", input_dim)
    overrides.setdefault("seed", seed)
    return classifier.LstmConfig(**overrides)


def cmd_train(args) -> int:
    manifest = dataset.ClipManifest.load(args.manifest)
    feature_dir = Path(args.features)
    train_items = _load_split(manifest, feature_dir, "train")
    val_items = _load_split(manifest, feature_dir, "val")
    if not train_items or not val_items:
        raise SystemExit("manifest has an empty train or val split")
    input_dim = train_items[0][1].dim
    config = _config_from_toml(args.config, input_dim, args.seed)
    model = classifier.train(_as_training_pairs(train_items), _as_training_pairs(val_items), config)
    classifier.save_model(model, args.out)
    best = model.history[model.best_epoch - 1]
    print(
        f"trained {model.epochs_run} epochs; best epoch {model.best_epoch} "
        f"val_acc={best.val_acc:.4f} -> {args.out}"
    )
    return 0


GRID_COLUMNS = "method,fps,layers,hidden,lr,sample_rate,window,step,accuracy,f1"


def cmd_grid(args) -> int:
    manifest = dataset.ClipManifest.load(args.manifest)
    feature_dir = Path(args.features)
    train_items = _load_split(manifest, feature_dir, "train")
    val_items = _load_split(manifest, feature_dir, "val")
    test_items = _load_split(manifest, feature_dir, "test")
    if not train_items or not val_items:
        raise SystemExit("manifest has an empty train or val split")
    probe = train_items[0][1]
    layer_grid = [int(v) for v in args.layers.split(",")] if args.layers else classifier.LAYER_GRID
    hidden_grid = [int(v) for v in args.hidden.split(",")] if args.hidden else classifier.HIDDEN_GRID
    lr_grid = [float(v) for v in args.lr.split(",")] if args.lr else classifier.LR_GRID
    lattice = [
        classifier.LstmConfig(
            input_dim=probe.dim, num_layers=layers, hidden_size=hidden, learning_rate=lr,
            max_epochs=args.max_epochs, batch_size=args.batch_size, seed=args.seed,
        )
        for layers in layer_grid
        for hidden in hidden_grid
        for lr in lr_grid
    ]
    best, results = classifier.grid_search(
        _as_training_pairs(train_items), _as_training_pairs(val_items), lattice
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classifier.save_model(best, out_dir / "best_model.eflm")

    # One row per configuration with its validation metrics; the winner's
    # held-out numbers come from `earmotion eval` against best_model.eflm.
    method = f"{probe.stream}+LSTM"
    csv_path = out_dir / "grid_results.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(GRID_COLUMNS + "\n")
        for res in results:
            row = [method, probe.fps, res.config.num_layers, res.config.hidden_size,
                   res.config.learning_rate, probe.sample_rate, probe.window, probe.step,
                   round(res.val_accuracy, 5), round(res.val_f1, 5)]
            fh.write(",".join(str(v) for v in row) + "\n")

    if test_items:
        preds = [
            evaluation.ClipPrediction(entry.clip_id, *classifier.predict(best, seq.data), entry.label)
            for entry, seq in test_items
        ]
        report = evaluation.evaluate_predictions(preds, method={"kind": "grid-best", "stream": probe.stream})
        report.save(out_dir / "best_model_test_report.json")
        print(
            f"best config {best.config.num_layers}x{best.config.hidden_size} "
            f"lr={best.config.learning_rate}: test accuracy "
            f"{evaluation.format_metric(report.accuracy)} f1 {evaluation.format_metric(report.f1)}"
        )
    print(f"grid of {len(results)} configs -> {csv_path}")
    return 0


def cmd_eval(args) -> int:
    manifest = dataset.ClipManifest.load(args.manifest)
    model = classifier.load_model(args.model)
    items = _load_split(manifest, Path(args.features), args.split)
    if not items:
        raise SystemExit(f"manifest has no {args.split} entries")
    preds = []
    for entry, seq in items:
        p, label = classifier.predict(model, seq.data)
        preds.append(evaluation.ClipPrediction(entry.clip_id, p, label, entry.label))
    report = evaluation.evaluate_predictions(
        preds,
        method={
            "kind": "lstm",
            "split": args.split,
            "stream": items[0][1].stream,
            "layers": model.config.num_layers,
            "hidden": model.config.hidden_size,
            "lr": model.config.learning_rate,
        },
    )
    report.save(args.report)
    print(
        f"{args.split}: accuracy {evaluation.format_metric(report.accuracy)} "
        f"f1 {evaluation.format_metric(report.f1)} -> {args.report}"
    )
    return 0


def cmd_infer(args) -> int:
    seq = features.read_features(args.video_features)
    model = classifier.load_model(args.model)
    ground_truth = None
    if args.annotations and args.video_id:
        records = dataset.filter_ear_records(dataset.parse_annotations(args.annotations))
        ground_truth = [
            (int(round(r.start_s * seq.fps)), int(round(r.end_s * seq.fps)))
            for r in records
            if r.video_id == args.video_id
        ]
    timeline = evaluation.sliding_window_infer(
        seq, model, window=args.window, stride=args.stride,
        video_id=args.video_id or seq.clip_id, ground_truth=ground_truth,
    )
    fmt = "json" if str(args.out).endswith(".json") else "csv"
    evaluation.timeline_export(timeline, args.out, format=fmt)
    flagged = sum(1 for e in timeline.entries if e.label == LABEL_MOVEMENT)
    print(f"{len(timeline.entries)} windows, {flagged} movement -> {args.out}")
    return 0


def _synth_spec_from_toml(path: str) -> synth.SynthSpec:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    patch = synth.PatchSpec(**raw.get("patch", {"x": 8, "y": 8, "w": 24, "h": 24}))
    texture = synth.TextureSpec(**raw.get("texture", {}))
    background = synth.BackgroundSpec(**raw.get("background", {}))
    clip = raw.get("clip", {})
    return synth.SynthSpec(
        height=clip.get("height", 64),
        width=clip.get("width", 64),
        num_frames=clip.get("num_frames", 10),
        fps=clip.get("fps", 25.0),
        patch=patch,
        texture=texture,
        background=background,
        roi_margin=clip.get("roi_margin", 4),
    )


def cmd_synth_clip(args) -> int:
    spec = _synth_spec_from_toml(args.spec)
    generated = synth.generate_clip(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frameio.write_frames(generated.frames, out / "clip.frames")
    frameio.write_region_track(generated.roi, out / "roi.csv")
    np.savez(
        out / "flow_gt.npz",
        u=np.stack([f.u for f in generated.flows]),
        v=np.stack([f.v for f in generated.flows]),
    )
    (out / "label.txt").write_text(generated.label + "\n", encoding="utf-8")
    print(f"synthetic {generated.label} clip -> {out}")
    return 0


def cmd_synth_features(args) -> int:
    with open(args.spec, "rb") as fh:
        raw = tomllib.load(fh).get("features", {})
    items = synth.generate_feature_dataset(
        n_per_class=raw.get("n_per_class", 20),
        t_range=tuple(raw.get("t_range", (2, 6))),
        dim=raw.get("dim", 768),
        class_mean_shift=raw.get("class_mean_shift", 1.0),
        noise_sigma=raw.get("noise_sigma", 0.3),
        seed=raw.get("seed", 0),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "labels.csv", "w", encoding="utf-8") as fh:
        fh.write("clip_id,label\n")
        for seq, y in items:
            features.write_features(seq, out / f"{seq.clip_id}.efseq")
            fh.write(f"{seq.clip_id},{'movement' if y else 'background'}\n")
    print(f"{len(items)} feature sequences -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earmotion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="build a balanced clip manifest from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--videos", help="directory of .frames files used for durations")
    p.add_argument("--durations", help="CSV video_id,duration_s as a duration source")
    p.add_argument("--seed", type=_parse_seed, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split-fractions", default="0.70,0.15,0.15")
    p.add_argument("--subject-wise", action="store_true")
    p.add_argument("--ear-prefixes", default="EAD")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("clips", help="cut manifest entries out of .frames videos")
    p.add_argument("--manifest", required=True)
    p.add_argument("--videos", required=True, help="directory of <video_id>.frames files")
    p.add_argument("--out", required=True)
    p.add_argument("--augment-seed", type=int, help="apply seeded flip/jitter to every clip")
    p.set_defaults(func=cmd_clips)

    p = sub.add_parser("movdet", help="classify one clip with the flow baseline")
    p.add_argument("--clip", required=True, help=".frames file or frame directory")
    p.add_argument("--roi", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--fps", type=float, help="fps when --clip is a directory")
    p.add_argument("--json", action="store_true")
    p.add_argument("--timeline", help="write per-window CSV over the whole input instead")
    p.add_argument("--window-s", type=float, default=2.0, help="timeline window in seconds")
    p.add_argument("--stride-s", type=float, help="timeline stride in seconds (default 0.7x window)")
    p.set_defaults(func=cmd_movdet)

    p = sub.add_parser("features", help="feature-file utilities")
    fsub = p.add_subparsers(dest="features_command", required=True)
    fi = fsub.add_parser("inspect", help="print .efseq header metadata as JSON")
    fi.add_argument("file")
    fi.set_defaults(func=cmd_features_inspect)

    p = sub.add_parser("train", help="train one LSTM configuration")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="TOML with an [lstm] table")
    p.add_argument("--seed", type=_parse_seed, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="grid-search the hyperparameter lattice")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=_parse_seed, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--layers", help="comma list overriding the layer grid")
    p.add_argument("--hidden", help="comma list overriding the hidden-size grid")
    p.add_argument("--lr", help="comma list overriding the learning-rate grid")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="evaluate a model over a manifest split")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--split", default="test", choices=list(dataset.SPLITS))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="sliding-window inference over full-video features")
    p.add_argument("--video-features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--stride", type=int, default=35)
    p.add_argument("--out", required=True)
    p.add_argument("--annotations", help="attach ground-truth intervals from this CSV")
    p.add_argument("--video-id")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("synth", help="generate synthetic fixtures")
    ssub = p.add_subparsers(dest="synth_command", required=True)
    sc = ssub.add_parser("clip", help="moving-patch clip with ground-truth flow")
    sc.add_argument("--spec", required=True)
    sc.add_argument("--out", required=True)
    sc.set_defaults(func=cmd_synth_clip)
    sf = ssub.add_parser("features", help="separable Gaussian feature sequences")
    sf.add_argument("--spec", required=True)
    sf.add_argument("--out", required=True)
    sf.set_defaults(func=cmd_synth_features)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
