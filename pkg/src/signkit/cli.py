"""Pipeline entry point: corpus build -> spot -> train -> translate -> eval.

One binary with subcommands; a YAML config plus ``--dotted.path value``
overrides drives everything.  Logs go to stderr, data to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from collections import defaultdict
from pathlib import Path

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import spotting as spotting_mod
from .config import ConfigError, PipelineConfig, dump_config, load_config
from .corpus import (
    ClipRecord,
    Vocabulary,
    build_vocab,
    detect_duplicates,
    extend_boundaries,
    read_manifest,
    records_from_captions,
    write_manifest,
)
from .subtitles import CaptionParseError, parse_srt, parse_webvtt
from .textnorm import normalize_tokens

log = logging.getLogger("signkit")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2


def _echo_config(cfg: PipelineConfig) -> None:
    for line in dump_config(cfg).rstrip().splitlines():
        log.info("config: %s", line)


def _load_video_meta(captions_dir: Path) -> dict:
    meta_path = captions_dir / "videos.json"
    if meta_path.exists():
        return json.loads(meta_path.read_text(encoding="utf-8"))
    return {}


def cmd_corpus_build(cfg: PipelineConfig) -> int:
    cfg.validate_paths("captions_dir")
    captions_dir = Path(cfg.paths.captions_dir)
    out_dir = Path(cfg.paths.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = _load_video_meta(captions_dir)

    caption_files = sorted(
        p for p in captions_dir.iterdir() if p.suffix.lower() in (".vtt", ".srt")
    )
    if not caption_files:
        raise ConfigError(f"no caption files in {captions_dir}")

    records: list[ClipRecord] = []
    for path in caption_files:
        data = path.read_bytes()
        cues = parse_webvtt(data) if path.suffix.lower() == ".vtt" else parse_srt(data)
        video_id = path.stem
        info = meta.get(video_id, {})
        recs = records_from_captions(
            cues,
            video_id=video_id,
            source=info.get("source", "other"),
            signer_id=info.get("signer_id"),
        )
        records.extend(recs)
        log.info("parsed %s: %d cues -> %d records", path.name, len(cues), len(recs))

    records.sort(key=lambda r: r.clip_id)
    order = list(range(len(records)))
    random.Random(cfg.corpus.split_seed).shuffle(order)
    test_idx = set(order[: cfg.corpus.test_size])
    dev_idx = set(order[cfg.corpus.test_size : cfg.corpus.test_size + cfg.corpus.dev_size])

    def with_split(i: int, rec: ClipRecord) -> ClipRecord:
        split = "test" if i in test_idx else "dev" if i in dev_idx else "train"
        return ClipRecord(
            rec.clip_id, rec.video_id, rec.start_ms, rec.end_ms, rec.text,
            rec.source, rec.signer_id, split,
        )

    records = [with_split(i, r) for i, r in enumerate(records)]
    video_end = defaultdict(int)
    for rec in records:
        video_end[rec.video_id] = max(video_end[rec.video_id], rec.end_ms)

    splits: dict[str, list[ClipRecord]] = {"train": [], "dev": [], "test": []}
    for rec in records:
        if rec.split == "train":
            duration = meta.get(rec.video_id, {}).get(
                "duration_sec", video_end[rec.video_id] / 1000.0 + cfg.corpus.pad_sec
            )
            rec = extend_boundaries(rec, cfg.corpus.pad_sec, duration)
        splits[rec.split].append(rec)

    for split, recs in splits.items():
        write_manifest(recs, out_dir / f"{split}.jsonl")
        log.info("wrote %s.jsonl (%d records)", split, len(recs))
    vocab = build_vocab(splits["train"], cfg.corpus.min_count)
    vocab.save(out_dir / "vocab.tsv")
    log.info("vocabulary: %d entries (min_count=%d)", len(vocab), cfg.corpus.min_count)

    stats = corpus_mod.corpus_stats(splits["train"])
    print(stats.format())
    return EXIT_OK


def cmd_corpus_stats(cfg: PipelineConfig, split: str) -> int:
    out_dir = Path(cfg.paths.output_dir)
    records = read_manifest(out_dir / f"{split}.jsonl")
    reference = None
    if split != "train":
        train_path = out_dir / "train.jsonl"
        if train_path.exists():
            reference = read_manifest(train_path)
    stats = corpus_mod.corpus_stats(records, reference)
    print(stats.format())
    return EXIT_OK


def cmd_spot(cfg: PipelineConfig) -> int:
    cfg.validate_paths("posteriors_dir")
    out_dir = Path(cfg.paths.output_dir)
    posteriors_dir = Path(cfg.paths.posteriors_dir)
    records = read_manifest(out_dir / "train.jsonl")
    sign_vocab = spotting_mod.read_sign_vocab(posteriors_dir / "sign_vocab.txt")

    proposals_by_clip: dict[str, list] = defaultdict(list)
    proposals_path = Path(cfg.paths.proposals_file)
    if proposals_path.exists():
        for prop in spotting_mod.read_fs_proposals(proposals_path):
            proposals_by_clip[prop.clip_id].append(prop)
    else:
        log.warning("no proposals file at %s; fingerspelling search skipped", proposals_path)

    all_spots = []
    skipped = []
    for rec in sorted(records, key=lambda r: r.clip_id):
        tokens = normalize_tokens(rec.text)
        pst_path = posteriors_dir / f"{rec.clip_id}.pst"
        spots = []
        if pst_path.exists():
            stream = spotting_mod.read_posterior_stream(pst_path, rec.clip_id, sign_vocab)
            spots += spotting_mod.spot_lexical(stream, tokens, cfg.spotting)
        else:
            skipped.append(rec.clip_id)
        spots += spotting_mod.spot_fingerspelling(
            proposals_by_clip.get(rec.clip_id, []), tokens, cfg.spotting
        )
        all_spots.extend(spotting_mod.resolve_overlaps(spots, cfg.spotting.overlap_iou))

    manifest = spotting_mod.export_pretraining_manifest(all_spots)
    spotting_mod.write_pretraining_manifest(manifest, out_dir / "spotted.jsonl")
    counts = defaultdict(int)
    for r in manifest:
        counts[r.kind] += 1
    print(f"lexical\t{counts['lexical']}")
    print(f"fingerspelled\t{counts['fingerspelled']}")
    print(f"total\t{len(manifest)}")
    if skipped:
        log.warning("skipped %d clips with missing posteriors: %s",
                    len(skipped), ", ".join(skipped))
    return EXIT_OK


def _fusion_config(cfg: PipelineConfig, vocab_size: int, dropout=None):
    from .fusion import FusionConfig

    f = cfg.fusion
    return FusionConfig(
        vocab_size=vocab_size,
        stream_dims=dict(f.stream_dims),
        model_dim=f.model_dim,
        num_heads=f.num_heads,
        enc_layers=f.enc_layers,
        dec_layers=f.dec_layers,
        ffn_dim=f.ffn_dim,
        max_len=f.max_len,
        dropout=f.dropout if dropout is None else dropout,
        lr_peak=f.lr_peak,
        warmup_iters=f.warmup_iters,
        total_iters=f.total_iters,
        batch_size=f.batch_size,
        seed=f.seed,
    )


def cmd_train(cfg: PipelineConfig) -> int:
    from .fusion import save_checkpoint, train
    from .fusion.training import load_training_pairs

    cfg.validate_paths("features_dir")
    out_dir = Path(cfg.paths.output_dir)
    records = read_manifest(out_dir / "train.jsonl")
    vocab = Vocabulary.load(out_dir / "vocab.tsv")
    model_cfg = _fusion_config(cfg, len(vocab))
    pairs = load_training_pairs(records, cfg.paths.features_dir, vocab, model_cfg)
    model, curve = train(pairs, model_cfg, log_every=100)
    save_checkpoint(model, out_dir / "model.pt")
    (out_dir / "loss_curve.txt").write_text(
        "".join(f"{v:.6f}\n" for v in curve), encoding="utf-8"
    )
    log.info("final loss %.4f after %d iters", curve[-1], len(curve))
    return EXIT_OK


def cmd_translate(cfg: PipelineConfig, split: str) -> int:
    import torch

    from .features import read_feature_stream, stream_path
    from .fusion import beam_search, load_checkpoint

    out_dir = Path(cfg.paths.output_dir)
    checkpoint = out_dir / "model.pt"
    if not checkpoint.exists():
        raise ConfigError(f"checkpoint not found: {checkpoint}")
    model = load_checkpoint(checkpoint)
    vocab = Vocabulary.load(out_dir / "vocab.tsv")
    records = read_manifest(out_dir / f"{split}.jsonl")

    lines = []
    for rec in sorted(records, key=lambda r: r.clip_id):
        features = {}
        for modality in model.cfg.enabled_streams:
            path = stream_path(cfg.paths.features_dir, rec.clip_id, modality)
            if not path.exists():
                raise FileNotFoundError(f"missing feature stream {path}")
            stream = read_feature_stream(path, rec.clip_id, modality)
            features[modality] = torch.from_numpy(stream.data).unsqueeze(0)
        hyp = beam_search(
            model,
            features,
            beam_width=cfg.decode.beam_width,
            length_penalty=cfg.decode.length_penalty,
        )
        text = " ".join(vocab.decode(hyp.tokens))
        lines.append(f"{rec.clip_id}\t{text}")
    out_path = out_dir / f"hypotheses_{split}.tsv"
    out_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    log.info("wrote %s (%d hypotheses)", out_path, len(lines))
    return EXIT_OK


def _fs_clip_ids(out_dir: Path) -> set[str]:
    spotted = out_dir / "spotted.jsonl"
    clips = set()
    if spotted.exists():
        with open(spotted, encoding="utf-8") as f:
            for line in f:
                row = json.loads(line)
                if row.get("kind") == "fingerspelled":
                    clips.add(row["clip_id"])
    return clips


def cmd_eval(cfg: PipelineConfig, split: str, hypotheses: str | None) -> int:
    out_dir = Path(cfg.paths.output_dir)
    hyp_path = Path(hypotheses) if hypotheses else out_dir / f"hypotheses_{split}.tsv"
    if not hyp_path.exists():
        raise ConfigError(f"hypotheses file not found: {hyp_path}")
    records = read_manifest(out_dir / f"{split}.jsonl")
    train_records = read_manifest(out_dir / "train.jsonl")
    duplicates, _ = detect_duplicates(records, train_records)
    duplicate_ids = {r.clip_id for r in duplicates}
    fs_ids = _fs_clip_ids(out_dir)

    hyp_by_clip = {}
    with open(hyp_path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            clip_id, _, text = line.partition("\t")
            hyp_by_clip[clip_id] = text

    pairs = []
    for rec in records:
        if rec.clip_id not in hyp_by_clip:
            raise ConfigError(f"no hypothesis for clip {rec.clip_id}")
        tags = {rec.source}
        if rec.clip_id in duplicate_ids:
            tags.add("duplicate")
        if rec.clip_id in fs_ids:
            tags.add("has_fingerspelling")
        pairs.append(
            metrics_mod.EvalPair(
                clip_id=rec.clip_id,
                hypothesis=tuple(normalize_tokens(hyp_by_clip[rec.clip_id])),
                reference=tuple(normalize_tokens(rec.text)),
                tags=frozenset(tags),
            )
        )
    report = metrics_mod.breakdown(pairs)
    text = report.format()
    (out_dir / f"report_{split}.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_gradcheck(cfg: PipelineConfig) -> int:
    import torch

    from .corpus import BOS, EOS
    from .fusion import FusionConfig, FusionModel, grad_check

    streams = list(cfg.fusion.stream_dims) or ["global", "mouthing", "hand"]
    # tiny double-precision twin of the configured model; finite
    # differences over a desk-scale model would take minutes
    model_cfg = FusionConfig(
        vocab_size=10,
        stream_dims={m: 4 for m in streams},
        model_dim=8,
        num_heads=2,
        enc_layers=1,
        dec_layers=1,
        ffn_dim=8,
        max_len=8,
        dropout=0.0,
        seed=cfg.fusion.seed,
    )
    torch.manual_seed(model_cfg.seed)
    model = FusionModel(model_cfg).double()
    features = {m: torch.randn(1, 5, 4, dtype=torch.float64) for m in streams}
    targets = torch.tensor([[BOS, 5, 6, 7, EOS]], dtype=torch.long)
    err = grad_check(model, features, targets)
    print(f"max relative error\t{err:.3e}")
    return EXIT_OK if err < 1e-4 else EXIT_INTERNAL


def _parse_overrides(extras: list[str]) -> list[tuple[str, str]]:
    overrides = []
    i = 0
    while i < len(extras):
        key = extras[i]
        if not key.startswith("--") or "." not in key:
            raise ConfigError(f"unrecognized argument {key!r} (expected --section.key value)")
        if "=" in key:
            path, _, value = key[2:].partition("=")
            overrides.append((path, value))
            i += 1
        else:
            if i + 1 >= len(extras):
                raise ConfigError(f"override {key} is missing a value")
            overrides.append((key[2:], extras[i + 1]))
            i += 2
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signkit",
        description="Sign-language translation corpus, spotting, training and evaluation pipeline",
    )
    parser.add_argument("-c", "--config", help="YAML pipeline config file")
    sub = parser.add_subparsers(dest="command", required=True)

    corpus_p = sub.add_parser("corpus", help="corpus construction")
    corpus_sub = corpus_p.add_subparsers(dest="subcommand", required=True)
    corpus_sub.add_parser("build", help="parse captions, write manifests and vocabulary")
    stats_p = corpus_sub.add_parser("stats", help="print statistics for a split")
    stats_p.add_argument("--split", default="train", choices=("train", "dev", "test"))

    sub.add_parser("spot", help="mine weakly-labeled sign pairs")
    sub.add_parser("train", help="train the fusion translation model")
    translate_p = sub.add_parser("translate", help="decode a split with beam search")
    translate_p.add_argument("--split", default="dev", choices=("train", "dev", "test"))
    eval_p = sub.add_parser("eval", help="score hypotheses and print the breakdown report")
    eval_p.add_argument("--split", default="dev", choices=("train", "dev", "test"))
    eval_p.add_argument("--hypotheses", help="hypotheses TSV (default: pipeline output)")
    sub.add_parser("gradcheck", help="finite-difference check of model gradients")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SIGNKIT_LOG", "INFO").upper(),
        stream=sys.stderr,
        format="%(levelname)s %(message)s",
    )
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        overrides = _parse_overrides(extras)
        cfg = load_config(args.config, overrides)
        _echo_config(cfg)
        if args.command == "corpus":
            if args.subcommand == "build":
                return cmd_corpus_build(cfg)
            return cmd_corpus_stats(cfg, args.split)
        if args.command == "spot":
            return cmd_spot(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "translate":
            return cmd_translate(cfg, args.split)
        if args.command == "eval":
            return cmd_eval(cfg, args.split, args.hypotheses)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, CaptionParseError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (AssertionError, FloatingPointError) as exc:
        log.error("internal invariant violated: %s", exc)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
