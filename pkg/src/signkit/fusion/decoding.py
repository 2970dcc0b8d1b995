"""Beam-search decoding with length-penalty hypothesis ranking."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..corpus import BOS, EOS
from .model import FusionModel


@dataclass(frozen=True)
class Hypothesis:
    """A BOS-initiated token sequence with its running log-probability."""

    tokens: tuple[int, ...]
    score: float
    finished: bool = False
    forced_eos: bool = False

    def normalized_score(self, length_penalty: float) -> float:
        # generated tokens, excluding the BOS primer
        length = max(1, len(self.tokens) - 1)
        return self.score / (length ** length_penalty)


def _step_logprobs(model: FusionModel, encodings, src_padding, tokens: tuple[int, ...]):
    prefix = torch.tensor([tokens], dtype=torch.long)
    logits = model.decode(encodings, prefix, src_padding_masks=src_padding)
    return F.log_softmax(logits[0, -1], dim=-1)


@torch.no_grad()
def beam_search(
    model: FusionModel,
    features: dict[str, torch.Tensor],
    beam_width: int = 5,
    length_penalty: float = 1.0,
    max_len: int | None = None,
    feature_padding: dict[str, torch.Tensor] | None = None,
) -> Hypothesis:
    """Decode one clip (batch of 1).

    Keeps the ``beam_width`` best unfinished hypotheses per step, banks
    every EOS-ending expansion, and finally ranks all finished hypotheses
    by score / length**length_penalty.  Hypotheses still alive at
    ``max_len`` are force-terminated with EOS and flagged.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    model.eval()
    if max_len is None:
        max_len = model.cfg.max_len
    encodings = model.encode(features, feature_padding)

    live = [Hypothesis((BOS,), 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        if not live:
            break
        candidates = []
        for hyp in live:
            logprobs = _step_logprobs(model, encodings, feature_padding, hyp.tokens)
            k = min(beam_width, logprobs.shape[0])
            top_lp, top_id = torch.topk(logprobs, k)
            for lp, tok in zip(top_lp.tolist(), top_id.tolist()):
                candidates.append(
                    Hypothesis(hyp.tokens + (tok,), hyp.score + lp, finished=tok == EOS)
                )
        candidates.sort(key=lambda h: (-h.score, h.tokens))
        live = []
        for cand in candidates[: beam_width]:
            if cand.finished:
                finished.append(cand)
            else:
                live.append(cand)
    for hyp in live:  # ran out of length budget
        logprobs = _step_logprobs(model, encodings, feature_padding, hyp.tokens)
        finished.append(
            Hypothesis(
                hyp.tokens + (EOS,),
                hyp.score + float(logprobs[EOS]),
                finished=True,
                forced_eos=True,
            )
        )
    return max(finished, key=lambda h: (h.normalized_score(length_penalty), h.tokens))


@torch.no_grad()
def greedy_decode(
    model: FusionModel,
    features: dict[str, torch.Tensor],
    max_len: int | None = None,
    feature_padding: dict[str, torch.Tensor] | None = None,
) -> Hypothesis:
    """Argmax rollout; equivalent to beam_search with beam_width=1."""
    model.eval()
    if max_len is None:
        max_len = model.cfg.max_len
    encodings = model.encode(features, feature_padding)
    tokens: tuple[int, ...] = (BOS,)
    score = 0.0
    for _ in range(max_len):
        logprobs = _step_logprobs(model, encodings, feature_padding, tokens)
        tok = int(torch.argmax(logprobs))
        score += float(logprobs[tok])
        tokens = tokens + (tok,)
        if tok == EOS:
            return Hypothesis(tokens, score, finished=True)
    logprobs = _step_logprobs(model, encodings, feature_padding, tokens)
    return Hypothesis(
        tokens + (EOS,), score + float(logprobs[EOS]), finished=True, forced_eos=True
    )
