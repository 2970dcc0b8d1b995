"""Training loop (Adam + linear warmup/decay), batching of feature
streams, and checkpoint serialization."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Optional

import torch

from ..corpus import BOS, EOS, PAD, ClipRecord, Vocabulary
from ..features import read_feature_stream, stream_path
from ..textnorm import normalize_tokens
from .model import FusionConfig, FusionModel

CHECKPOINT_VERSION = 1


def learning_rate(step: int, cfg: FusionConfig) -> float:
    """Linear warmup to ``lr_peak`` over ``warmup_iters`` (1-based steps),
    then linear decay to 0 at ``total_iters``."""
    if step <= 0:
        return 0.0
    if step <= cfg.warmup_iters:
        return cfg.lr_peak * step / cfg.warmup_iters
    remaining = max(0, cfg.total_iters - step)
    return cfg.lr_peak * remaining / (cfg.total_iters - cfg.warmup_iters)


class TrainingPair:
    """One clip's feature tensors and encoded target sentence."""

    def __init__(self, clip_id: str, features: dict[str, torch.Tensor], target: list[int]):
        self.clip_id = clip_id
        self.features = features
        self.target = target


def load_training_pairs(
    records: list[ClipRecord],
    feature_dir: Path | str,
    vocab: Vocabulary,
    cfg: FusionConfig,
) -> list[TrainingPair]:
    """Load every clip's enabled streams; a missing feature file fails up
    front, naming the clip, before any training happens."""
    missing = []
    for rec in records:
        for modality in cfg.enabled_streams:
            if not stream_path(feature_dir, rec.clip_id, modality).exists():
                missing.append(f"{rec.clip_id}.{modality}")
    if missing:
        raise FileNotFoundError("missing feature files: " + ", ".join(missing))
    pairs = []
    for rec in records:
        feats = {}
        for modality in cfg.enabled_streams:
            stream = read_feature_stream(
                stream_path(feature_dir, rec.clip_id, modality), rec.clip_id, modality
            )
            if stream.dim != cfg.stream_dims[modality]:
                raise ValueError(
                    f"{rec.clip_id}.{modality}: dim {stream.dim} != configured "
                    f"{cfg.stream_dims[modality]}"
                )
            feats[modality] = torch.from_numpy(stream.data)
        ids = vocab.encode(normalize_tokens(rec.text))[: cfg.max_len - 1]
        pairs.append(TrainingPair(rec.clip_id, feats, [BOS] + ids + [EOS]))
    return pairs


def collate(pairs: list[TrainingPair], cfg: FusionConfig):
    """Pad feature streams and targets to the batch maxima; returns
    (features, feature padding masks, target ids)."""
    features = {}
    padding = {}
    for modality in cfg.enabled_streams:
        max_t = max(p.features[modality].shape[0] for p in pairs)
        dim = cfg.stream_dims[modality]
        feats = torch.zeros(len(pairs), max_t, dim)
        pad = torch.ones(len(pairs), max_t, dtype=torch.bool)
        for i, p in enumerate(pairs):
            t = p.features[modality].shape[0]
            feats[i, :t] = p.features[modality]
            pad[i, :t] = False
        features[modality] = feats
        padding[modality] = pad
    max_l = max(len(p.target) for p in pairs)
    targets = torch.full((len(pairs), max_l), PAD, dtype=torch.long)
    for i, p in enumerate(pairs):
        targets[i, : len(p.target)] = torch.tensor(p.target, dtype=torch.long)
    return features, padding, targets


def train(
    pairs: list[TrainingPair],
    cfg: FusionConfig,
    num_iters: Optional[int] = None,
    log_every: int = 0,
) -> tuple[FusionModel, list[float]]:
    """Train from scratch; deterministic given cfg.seed.  Returns the
    model and the per-iteration loss curve."""
    if not pairs:
        raise ValueError("no training pairs")
    torch.manual_seed(cfg.seed)
    model = FusionModel(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr_peak)
    total = num_iters if num_iters is not None else cfg.total_iters
    rng = torch.Generator().manual_seed(cfg.seed)

    order: list[int] = []
    curve: list[float] = []
    model.train()
    for step in range(1, total + 1):
        if len(order) < cfg.batch_size:
            order += torch.randperm(len(pairs), generator=rng).tolist()
        batch_idx = order[: cfg.batch_size]
        order = order[cfg.batch_size :]
        features, padding, targets = collate([pairs[i] for i in batch_idx], cfg)
        lr = learning_rate(step, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        optimizer.zero_grad(set_to_none=True)
        _, loss = model(features, targets, padding)
        loss.backward()
        optimizer.step()
        for param in model.parameters():
            if not torch.isfinite(param).all():
                raise FloatingPointError(f"non-finite parameter after step {step}")
        curve.append(float(loss.detach()))
        if log_every and step % log_every == 0:
            print(f"iter {step}/{total} lr {lr:.6f} loss {curve[-1]:.4f}", flush=True)
    model.eval()
    return model, curve


def save_checkpoint(model: FusionModel, path: Path | str) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "config": asdict(model.cfg),
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: Path | str) -> FusionModel:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    cfg = FusionConfig(**payload["config"])
    model = FusionModel(cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
