"""Model definition: per-stream transformer encoders and a decoder whose
layers cross-attend to every enabled stream and fuse the contexts by
concatenation + projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..corpus import PAD

CANONICAL_STREAMS = ("global", "mouthing", "hand")


class ConfigurationError(ValueError):
    pass


@dataclass
class FusionConfig:
    vocab_size: int
    stream_dims: dict[str, int]  # enabled modality -> input feature dim
    model_dim: int = 32
    num_heads: int = 2
    enc_layers: int = 2
    dec_layers: int = 2
    ffn_dim: int = 64
    max_len: int = 32
    dropout: float = 0.1
    lr_peak: float = 1e-3
    warmup_iters: int = 2000
    total_iters: int = 14000
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if not self.stream_dims:
            raise ConfigurationError("at least one stream must be enabled")
        unknown = set(self.stream_dims) - set(CANONICAL_STREAMS)
        if unknown:
            raise ConfigurationError(f"unknown streams {sorted(unknown)}")
        if self.model_dim % self.num_heads != 0:
            raise ConfigurationError("model_dim must be divisible by num_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0,1)")
        if self.warmup_iters >= self.total_iters:
            raise ConfigurationError("warmup_iters must be < total_iters")
        if self.vocab_size <= PAD:
            raise ConfigurationError("vocab_size too small")

    @property
    def enabled_streams(self) -> tuple[str, ...]:
        return tuple(m for m in CANONICAL_STREAMS if m in self.stream_dims)


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    """Fixed sine/cosine positional encodings, shape (length, dim)."""
    position = torch.arange(length, dtype=dtype).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=dtype)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div[: dim // 2])
    return pe


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention returning both outputs and weights so
    masking behaviour stays inspectable."""

    def __init__(self, dim: int, num_heads: int, dropout: float):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q_proj = nn.Linear(dim, dim)
        # no key bias: softmax over scores is invariant to a per-query
        # constant shift, so a key bias would be a dead parameter
        self.k_proj = nn.Linear(dim, dim, bias=False)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        query: torch.Tensor,  # (B, Lq, dim)
        key: torch.Tensor,  # (B, Lk, dim)
        value: torch.Tensor,
        key_padding_mask: torch.Tensor | None = None,  # (B, Lk) True = pad
        attn_mask: torch.Tensor | None = None,  # (Lq, Lk) True = disallowed
    ) -> tuple[torch.Tensor, torch.Tensor]:
        batch, len_q, _ = query.shape
        len_k = key.shape[1]
        h, dh = self.num_heads, self.head_dim
        q = self.q_proj(query).view(batch, len_q, h, dh).transpose(1, 2)
        k = self.k_proj(key).view(batch, len_k, h, dh).transpose(1, 2)
        v = self.v_proj(value).view(batch, len_k, h, dh).transpose(1, 2)
        scores = torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(dh)  # (B,h,Lq,Lk)

        mask = None
        if attn_mask is not None:
            mask = attn_mask.view(1, 1, len_q, len_k)
        if key_padding_mask is not None:
            pad = key_padding_mask.view(batch, 1, 1, len_k)
            mask = pad if mask is None else mask | pad
        if mask is not None:
            mask = mask.expand(batch, h, len_q, len_k)
            if bool(mask.all(dim=-1).any()):
                raise ValueError("attention row with all source positions masked")
            scores = scores.masked_fill(mask, float("-inf"))
        weights = F.softmax(scores, dim=-1)  # exact zeros at -inf entries
        out = torch.matmul(self.dropout(weights), v)
        out = out.transpose(1, 2).contiguous().view(batch, len_q, h * dh)
        return self.out_proj(out), weights


class FeedForward(nn.Module):
    def __init__(self, dim: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(dim, ffn_dim)
        self.fc2 = nn.Linear(ffn_dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.dropout(F.relu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: FusionConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.model_dim, cfg.num_heads, cfg.dropout)
        self.ffn = FeedForward(cfg.model_dim, cfg.ffn_dim, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.model_dim)
        self.norm2 = nn.LayerNorm(cfg.model_dim)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, key_padding_mask=None):
        attn, weights = self.self_attn(x, x, x, key_padding_mask=key_padding_mask)
        x = self.norm1(x + self.dropout(attn))
        x = self.norm2(x + self.dropout(self.ffn(x)))
        return x, weights


class StreamEncoder(nn.Module):
    """Transformer encoder for one feature modality."""

    def __init__(self, input_dim: int, cfg: FusionConfig):
        super().__init__()
        self.in_proj = nn.Linear(input_dim, cfg.model_dim)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.enc_layers))
        self.dropout = nn.Dropout(cfg.dropout)
        self.model_dim = cfg.model_dim

    def forward(self, feats, key_padding_mask=None, collect=None):
        x = self.in_proj(feats)
        x = x + sinusoidal_positions(x.shape[1], self.model_dim, dtype=x.dtype).to(x.device)
        x = self.dropout(x)
        for layer in self.layers:
            x, weights = layer(x, key_padding_mask=key_padding_mask)
            if collect is not None:
                collect.append(weights)
        return x


class DecoderLayer(nn.Module):
    """Self-attention, one cross-attention per enabled stream, context
    concatenation + projection, then feedforward; post-norm residuals."""

    def __init__(self, cfg: FusionConfig):
        super().__init__()
        self.streams = cfg.enabled_streams
        self.self_attn = MultiHeadAttention(cfg.model_dim, cfg.num_heads, cfg.dropout)
        self.cross_attn = nn.ModuleDict(
            {m: MultiHeadAttention(cfg.model_dim, cfg.num_heads, cfg.dropout) for m in self.streams}
        )
        self.fuse_proj = nn.Linear(len(self.streams) * cfg.model_dim, cfg.model_dim)
        self.ffn = FeedForward(cfg.model_dim, cfg.ffn_dim, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.model_dim)
        self.norm2 = nn.LayerNorm(cfg.model_dim)
        self.norm3 = nn.LayerNorm(cfg.model_dim)
        self.dropout = nn.Dropout(cfg.dropout)

    def fuse_contexts(self, contexts: dict[str, torch.Tensor]) -> torch.Tensor:
        """Concatenate per-stream contexts in canonical order and project
        back to model width.  The ordering is part of the contract."""
        if tuple(contexts.keys()) != self.streams:
            raise ConfigurationError(
                f"context order {tuple(contexts.keys())} != enabled order {self.streams}"
            )
        return self.fuse_proj(torch.cat(list(contexts.values()), dim=-1))

    def forward(self, x, encodings, self_attn_mask=None, tgt_padding_mask=None,
                src_padding_masks=None, collect=None):
        attn, self_weights = self.self_attn(
            x, x, x, key_padding_mask=tgt_padding_mask, attn_mask=self_attn_mask
        )
        x = self.norm1(x + self.dropout(attn))
        contexts = {}
        for m in self.streams:
            pad = None if src_padding_masks is None else src_padding_masks.get(m)
            ctx, weights = self.cross_attn[m](x, encodings[m], encodings[m], key_padding_mask=pad)
            contexts[m] = ctx
            if collect is not None:
                collect.append(weights)
        if collect is not None:
            collect.append(self_weights)
        x = self.norm2(x + self.dropout(self.fuse_contexts(contexts)))
        x = self.norm3(x + self.dropout(self.ffn(x)))
        return x


def causal_mask(length: int, device=None) -> torch.Tensor:
    """(L, L) boolean mask, True above the diagonal (disallowed)."""
    return torch.triu(torch.ones(length, length, dtype=torch.bool, device=device), diagonal=1)


class FusionModel(nn.Module):
    """Three-encoder (or fewer) sequence-to-sequence translation model."""

    def __init__(self, cfg: FusionConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.model_dim)
        self.encoders = nn.ModuleDict(
            {m: StreamEncoder(cfg.stream_dims[m], cfg) for m in cfg.enabled_streams}
        )
        self.dec_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.dec_layers))
        self.out_proj = nn.Linear(cfg.model_dim, cfg.vocab_size)
        self.dropout = nn.Dropout(cfg.dropout)

    def encode_stream(self, modality: str, feats: torch.Tensor,
                      padding_mask: torch.Tensor | None = None,
                      collect=None) -> torch.Tensor:
        """Encode one modality's (B, T, D) features to (B, T, model_dim)."""
        if modality not in self.encoders:
            raise ConfigurationError(f"stream {modality!r} is not enabled")
        return self.encoders[modality](feats, key_padding_mask=padding_mask, collect=collect)

    def encode(self, features: dict[str, torch.Tensor],
               padding_masks: dict[str, torch.Tensor] | None = None,
               collect=None) -> dict[str, torch.Tensor]:
        masks = padding_masks or {}
        missing = set(self.cfg.enabled_streams) - set(features)
        if missing:
            raise ConfigurationError(f"missing enabled streams {sorted(missing)}")
        return {
            m: self.encode_stream(m, features[m], masks.get(m), collect=collect)
            for m in self.cfg.enabled_streams
        }

    def decode(self, encodings: dict[str, torch.Tensor], tokens: torch.Tensor,
               src_padding_masks: dict[str, torch.Tensor] | None = None,
               collect=None) -> torch.Tensor:
        """Run the decoder stack over a (B, L) token prefix; returns
        (B, L, vocab) logits with causal masking."""
        if int(tokens.max()) >= self.cfg.vocab_size:
            raise ValueError(f"token id {int(tokens.max())} >= vocab_size {self.cfg.vocab_size}")
        length = tokens.shape[1]
        dtype = next(self.parameters()).dtype
        x = self.embed(tokens) * math.sqrt(self.cfg.model_dim)
        x = x + sinusoidal_positions(length, self.cfg.model_dim, dtype=dtype).to(tokens.device)
        x = self.dropout(x)
        mask = causal_mask(length, device=tokens.device)
        tgt_pad = tokens.eq(PAD)
        if not bool(tgt_pad.any()):
            tgt_pad = None
        for layer in self.dec_layers:
            x = layer(
                x,
                encodings,
                self_attn_mask=mask,
                tgt_padding_mask=tgt_pad,
                src_padding_masks=src_padding_masks,
                collect=collect,
            )
        return self.out_proj(x)

    def forward(self, features: dict[str, torch.Tensor], targets: torch.Tensor,
                feature_padding: dict[str, torch.Tensor] | None = None,
                collect=None) -> tuple[torch.Tensor, torch.Tensor]:
        """Teacher-forced forward pass.

        ``targets`` are BOS-prefixed, EOS-suffixed and PAD-padded (B, L).
        Returns (logits over positions 1..L-1, PAD-ignoring cross entropy).
        """
        encodings = self.encode(features, feature_padding, collect=collect)
        dec_in = targets[:, :-1]
        dec_out = targets[:, 1:]
        logits = self.decode(encodings, dec_in, src_padding_masks=feature_padding, collect=collect)
        loss = F.cross_entropy(
            logits.reshape(-1, self.cfg.vocab_size), dec_out.reshape(-1), ignore_index=PAD
        )
        return logits, loss


def expected_param_count(cfg: FusionConfig) -> int:
    """Closed-form parameter count implied by a config; used to verify that
    disabling a stream removes exactly its encoder and cross-attention."""
    d, ffn, v = cfg.model_dim, cfg.ffn_dim, cfg.vocab_size
    mha = 4 * d * d + 3 * d  # q/k/v/out weights, no key bias
    norm = 2 * d
    ffn_params = d * ffn + ffn + ffn * d + d
    enc_layer = mha + ffn_params + 2 * norm
    total = v * d  # embedding
    for m in cfg.enabled_streams:
        total += cfg.stream_dims[m] * d + d  # input projection
        total += cfg.enc_layers * enc_layer
    k = len(cfg.enabled_streams)
    dec_layer = mha + k * mha + (k * d * d + d) + ffn_params + 3 * norm
    total += cfg.dec_layers * dec_layer
    total += d * v + v  # output projection
    return total
