"""Command-line entry point.

Subcommands cover the full run: ``preprocess`` caches vision artifacts,
``train`` fits a model, ``generate`` decodes sentences, ``evaluate`` writes a
metric report with a rendered figure, ``align`` scores predicted alignments
against gold, ``inspect`` renders overlay figures, ``export-features`` /
``import-features`` move feature files, ``extract-pairs`` filters candidate
frame pairs, and ``stats`` summarizes a corpus.

Exit codes: 0 success, 1 usage error, 2 data or model error. A config file of
``key = value`` lines supplies defaults; explicit flags win. All randomness
derives from ``--seed``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus, pipeline
from .errors import DiffcapError, InvalidInputError
from .imaging import ImagePair, align_pair, compute_diff_mask, load_image
from .clustering import dbscan_cluster
from .encoder import encode_pair, load_precomputed_features, save_features
from .inference import decode_multi, decode_single, predict_alignment
from .report import build_report, format_report, write_report
from .training import ModelCheckpoint, TrainConfig, train

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _load_config_file(argv: list[str]) -> dict[str, str]:
    if "--config" not in argv:
        return {}
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config needs a file path")
    cfg = {}
    for line in Path(argv[idx + 1]).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"bad config line: {line!r}")
        key, value = line.split("=", 1)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return tuple(parts)


def _build_parser(cfg: dict[str, str]) -> _Parser:
    parser = _Parser(prog="diffcap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    def opt(p, flag, *, type=str, default=None, required=False, help="",
            choices=None):
        dest = flag.lstrip("-").replace("-", "_")
        if dest in cfg:
            default = type(cfg[dest]) if type is not None else cfg[dest]
            required = False
        p.add_argument(flag, dest=dest, type=type, default=default,
                       required=required, help=help, choices=choices)

    def common(p):
        opt(p, "--seed", type=int, default=0, help="seed for all randomness")
        p.add_argument("--config", default=None, help="key = value defaults file")

    def vision_opts(p):
        opt(p, "--delta", type=float, default=30.0, help="pixel color distance threshold")
        opt(p, "--max-shift", type=int, default=5, help="registration search radius")
        opt(p, "--eps", type=float, default=5.0, help="clustering neighborhood radius")
        opt(p, "--min-pts", type=int, default=10, help="clustering core-point density")
        opt(p, "--sigma", type=float, default=2.0, help="mask smoothing width")
        opt(p, "--grid-h", type=int, default=14, help="feature grid rows")
        opt(p, "--grid-w", type=int, default=14, help="feature grid columns")

    p = sub.add_parser("preprocess", help="cache masks, clusters, projections, features")
    opt(p, "--annotations", required=True)
    opt(p, "--img-dir", required=True)
    opt(p, "--out", required=True, help="cache directory")
    opt(p, "--img2-suffix", default="_2")
    opt(p, "--video-delim", default="_")
    vision_opts(p)
    common(p)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="train a model on a preprocessed corpus")
    opt(p, "--annotations", required=True)
    opt(p, "--cache", required=True, help="preprocess output directory")
    opt(p, "--out", required=True, help="checkpoint path")
    opt(p, "--mode", default="ddla",
        choices=["ddla", "ddla-uniform", "capt", "capt-masked"])
    opt(p, "--epochs", type=int, default=50)
    opt(p, "--batch-size", type=int, default=8)
    opt(p, "--lr", type=float, default=1e-3)
    opt(p, "--patience", type=int, default=5, help="epochs without improvement; <= 0 disables")
    opt(p, "--min-count", type=int, default=5)
    opt(p, "--split-ratios", type=_ratios, default=(0.8, 0.1, 0.1))
    opt(p, "--video-delim", default="_")
    opt(p, "--embed-dim", type=int, default=32)
    opt(p, "--hidden-dim", type=int, default=64)
    opt(p, "--attn-dim", type=int, default=32)
    opt(p, "--max-len", type=int, default=40)
    vision_opts(p)
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="decode difference sentences for one pair")
    opt(p, "--checkpoint", required=True)
    opt(p, "--cache", required=True)
    opt(p, "--annotations", default=None)
    opt(p, "--img-id", required=True)
    opt(p, "--setting", default="multi", choices=["single", "multi"])
    opt(p, "--num-sentences", type=int, default=None)
    opt(p, "--out", default=None, help="also write a JSON record here")
    common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="metric report over a split")
    opt(p, "--checkpoint", required=True)
    opt(p, "--cache", required=True)
    opt(p, "--annotations", required=True)
    opt(p, "--split", default="test", choices=["train", "val", "test"])
    opt(p, "--setting", default="multi", choices=["single", "multi"])
    opt(p, "--out", required=True, help="report directory")
    common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("align", help="score predicted alignments against gold")
    opt(p, "--checkpoint", required=True)
    opt(p, "--cache", required=True)
    opt(p, "--annotations", required=True)
    opt(p, "--gold", required=True, help="JSON records {img_id, sentence_index, cluster_id}")
    opt(p, "--out", default=None)
    common(p)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("inspect", help="render mask and cluster overlays")
    opt(p, "--img1", required=True)
    opt(p, "--img2", required=True)
    opt(p, "--out", required=True, help="output directory")
    vision_opts(p)
    common(p)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("export-features", help="encode a pair and write a feature file")
    opt(p, "--img1", required=True)
    opt(p, "--img2", required=True)
    opt(p, "--out", required=True)
    opt(p, "--max-shift", type=int, default=5)
    opt(p, "--grid-h", type=int, default=14)
    opt(p, "--grid-w", type=int, default=14)
    common(p)
    p.set_defaults(func=_cmd_export_features)

    p = sub.add_parser("import-features", help="validate a feature file, optionally into the cache")
    opt(p, "--features", required=True)
    opt(p, "--cache", default=None)
    opt(p, "--img-id", default=None)
    common(p)
    p.set_defaults(func=_cmd_import_features)

    p = sub.add_parser("extract-pairs", help="sample and filter candidate frame pairs")
    opt(p, "--frames", required=True, help="directory of video frames")
    opt(p, "--count", type=int, default=50)
    opt(p, "--l2-lower", type=float, default=0.0)
    opt(p, "--l2-upper", type=float, default=float("inf"))
    opt(p, "--out", default=None, help="write kept pairs as JSON")
    common(p)
    p.set_defaults(func=_cmd_extract_pairs)

    p = sub.add_parser("stats", help="corpus summary statistics")
    opt(p, "--annotations", required=True)
    opt(p, "--min-count", type=int, default=5)
    opt(p, "--video-delim", default="_")
    common(p)
    p.set_defaults(func=_cmd_stats)

    return parser


def _cmd_preprocess(args):
    records = corpus.load_annotations(args.annotations, args.video_delim)
    index = pipeline.preprocess(
        records, args.img_dir, args.out, delta=args.delta, max_shift=args.max_shift,
        eps=args.eps, min_pts=args.min_pts, sigma=args.sigma,
        grid_h=args.grid_h, grid_w=args.grid_w, suffix=args.img2_suffix)
    print(f"cached {len(index['entries'])} pairs in {args.out}")


def _cmd_train(args):
    records = corpus.load_annotations(args.annotations, args.video_delim)
    config = TrainConfig(
        mode=args.mode, embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
        attn_dim=args.attn_dim, max_len=args.max_len, lr=args.lr,
        batch_size=args.batch_size, epochs=args.epochs,
        patience=args.patience if args.patience > 0 else None,
        seed=args.seed, min_count=args.min_count, split_ratios=args.split_ratios,
        video_delim=args.video_delim, delta=args.delta, max_shift=args.max_shift,
        eps=args.eps, min_pts=args.min_pts, sigma=args.sigma,
        grid_h=args.grid_h, grid_w=args.grid_w)
    split = corpus.split_by_video(records, config.split_ratios, config.seed)
    vocab = corpus.build_vocab(split.train, min_count=config.min_count)
    train_examples = pipeline.build_examples(split.train, args.cache, vocab)
    val_examples = pipeline.build_examples(split.val, args.cache, vocab)
    model = train(train_examples, val_examples, vocab, config)
    model.save(args.out)
    print(f"saved checkpoint to {args.out}")


def _cmd_generate(args):
    model = ModelCheckpoint.load(args.checkpoint)
    sentences = []
    if args.annotations:
        records = {r.img_id: r for r in corpus.load_annotations(args.annotations)}
        if args.img_id in records:
            sentences = records[args.img_id].sentences
    example = pipeline.load_cached_example(args.cache, args.img_id,
                                           sentences, model.vocab)
    rng = np.random.default_rng(args.seed)
    if example.k == 0:
        decoded = []
    elif args.setting == "single":
        decoded = [decode_single(model, example, rng=rng)]
    else:
        t = args.num_sentences or max(len(sentences), 1)
        decoded = decode_multi(model, example, t, rng=rng)
    lines = [" ".join(model.vocab.decode(ids)) for ids in decoded]
    for line in lines:
        print(line)
    if example.k == 0:
        print("no differences detected", file=sys.stderr)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"img_id": args.img_id, "sentences": lines,
                       "no_differences": example.k == 0}, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _cmd_evaluate(args):
    model = ModelCheckpoint.load(args.checkpoint)
    records = corpus.load_annotations(args.annotations, model.config.video_delim)
    split = corpus.split_by_video(records, model.config.split_ratios, model.config.seed)
    examples = pipeline.build_examples(split.part(args.split), args.cache, model.vocab)
    report = build_report(model, examples, setting=args.setting,
                          rng=np.random.default_rng(args.seed))
    paths = write_report(report, args.out)
    print(format_report(report))
    print(f"wrote {paths['json']}, {paths['tsv']}, {paths['figure']}", file=sys.stderr)


def _cmd_align(args):
    model = ModelCheckpoint.load(args.checkpoint)
    records = {r.img_id: r for r in corpus.load_annotations(
        args.annotations, model.config.video_delim)}
    with open(args.gold, "r", encoding="utf-8") as fh:
        gold = json.load(fh)
    if not gold:
        raise InvalidInputError("gold alignment file is empty")
    results = []
    examples = {}
    for item in gold:
        img_id = str(item["img_id"])
        if img_id not in examples:
            if img_id not in records:
                raise InvalidInputError(f"no annotation record for {img_id!r}")
            examples[img_id] = pipeline.load_cached_example(
                args.cache, img_id, records[img_id].sentences, model.vocab)
        predicted = predict_alignment(model, examples[img_id], int(item["sentence_index"]))
        results.append({"img_id": img_id,
                        "sentence_index": int(item["sentence_index"]),
                        "gold": int(item["cluster_id"]),
                        "predicted": predicted})
    precision = sum(r["gold"] == r["predicted"] for r in results) / len(results)
    print(f"alignment precision\t{precision}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"alignments": results, "precision": precision},
                      fh, indent=1, sort_keys=True)
            fh.write("\n")


def _cmd_inspect(args):
    from .viz import render_cluster_boxes, render_diff_overlay

    img1, img2 = load_image(args.img1), load_image(args.img2)
    shift = align_pair(img1, img2, max_shift=args.max_shift)
    pair = ImagePair(img1=img1, img2=img2, shift=shift)
    mask = compute_diff_mask(pair, delta=args.delta)
    clusters = dbscan_cluster(mask, eps=args.eps, min_pts=args.min_pts)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.img1).stem
    overlay = render_diff_overlay(pair, mask, clusters, out_dir / f"{stem}_overlay.png")
    boxes = render_cluster_boxes(pair, clusters, out_dir / f"{stem}_boxes.png")
    print(f"shift {shift}, {clusters.k} clusters")
    print(overlay)
    print(boxes)


def _cmd_export_features(args):
    img1, img2 = load_image(args.img1), load_image(args.img2)
    shift = align_pair(img1, img2, max_shift=args.max_shift)
    pair = ImagePair(img1=img1, img2=img2, shift=shift)
    feats = encode_pair(pair, grid_h=args.grid_h, grid_w=args.grid_w)
    save_features(args.out, feats)
    print(f"wrote {feats.grid_h}x{feats.grid_w}x{feats.dim} features to {args.out}")


def _cmd_import_features(args):
    feats = load_precomputed_features(args.features)
    print(f"valid feature file: {feats.grid_h}x{feats.grid_w}x{feats.dim}")
    if args.cache and args.img_id:
        pipeline.replace_cached_features(args.cache, args.img_id, args.features)
        print(f"updated cache entry {args.img_id}")
    elif args.cache or args.img_id:
        raise UsageError("--cache and --img-id must be given together")


def _cmd_extract_pairs(args):
    kept = corpus.extract_frame_pairs(args.frames, count=args.count,
                                      lower=args.l2_lower, upper=args.l2_upper,
                                      seed=args.seed)
    rows = [{"file1": k.file1, "file2": k.file2, "distance": k.distance}
            for k in kept]
    for row in rows:
        print(f"{row['file1']}\t{row['file2']}\t{row['distance']}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _cmd_stats(args):
    records = corpus.load_annotations(args.annotations, args.video_delim)
    stats = corpus.dataset_stats(records, min_count=args.min_count)
    for key in sorted(stats):
        print(f"{key}\t{stats[key]}")


def run(argv: list[str]) -> int:
    """Dispatch a CLI invocation; returns the process exit code."""
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config_file(list(argv))
        parser = _build_parser(cfg)
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_usage())
        args.func(args)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else int(exc.code)
    except (DiffcapError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
