"""Weakly-supervised sign spotting: mine (interval, word) pretraining pairs
from translation clips using external recognizer outputs.

Lexical signs are found by thresholding per-window word posteriors against
the words of the clip's sentence; fingerspelled signs by edit-distance
matching of detector proposals' letter hypotheses against sentence words.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


@dataclass
class SpotConfig:
    """Thresholds and window geometry for sign search."""

    delta_l: float = 0.6  # min lexical posterior
    delta_f: float = 0.2  # max normalized edit distance
    conf_min: float = 0.5  # fingerspelling detector confidence floor
    window_len: int = 32
    stride: int = 8
    min_fs_word_len: int = 3
    overlap_iou: float = 0.5

    def __post_init__(self):
        for name in ("delta_l", "delta_f", "conf_min", "overlap_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        for name in ("window_len", "stride", "min_fs_word_len"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v > 0):
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if self.stride > self.window_len:
            raise ValueError("stride must not exceed window_len")


@dataclass(frozen=True)
class PosteriorWindow:
    start_frame: int
    end_frame: int
    probs: np.ndarray  # shape (V,), values in [0,1]

    def __post_init__(self):
        if self.end_frame <= self.start_frame:
            raise ValueError("window end_frame must exceed start_frame")


@dataclass
class PosteriorStream:
    """Per-window word probability vectors from an external lexical
    recognizer, plus its sign vocabulary."""

    clip_id: str
    windows: list[PosteriorWindow]
    sign_vocab: list[str]

    def __post_init__(self):
        v = len(self.sign_vocab)
        prev_start = -1
        for w in self.windows:
            if len(w.probs) != v:
                raise ValueError(f"{self.clip_id}: probs length {len(w.probs)} != vocab size {v}")
            if w.probs.min() < 0 or w.probs.max() > 1:
                raise ValueError(f"{self.clip_id}: posterior outside [0,1]")
            if w.probs.sum() > 1 + 1e-4:
                raise ValueError(f"{self.clip_id}: posterior mass exceeds 1")
            if w.start_frame < prev_start:
                raise ValueError(f"{self.clip_id}: windows not sorted by start_frame")
            prev_start = w.start_frame


@dataclass(frozen=True)
class FsProposal:
    """A fingerspelling detector interval with its letter hypothesis."""

    clip_id: str
    start_frame: int
    end_frame: int
    confidence: float
    letters: str

    def __post_init__(self):
        if self.end_frame <= self.start_frame:
            raise ValueError("proposal end_frame must exceed start_frame")
        if not self.letters or not all("A" <= c <= "Z" for c in self.letters):
            raise ValueError(f"letters must be non-empty uppercase A-Z, got {self.letters!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0,1]")


@dataclass(frozen=True)
class SpottedSign:
    clip_id: str
    start_frame: int
    end_frame: int
    word: str
    kind: str  # "lexical" | "fingerspelled"
    score: float


def slide_windows(num_frames: int, window_len: int, stride: int) -> list[tuple[int, int]]:
    """Half-open [start, end) windows covering a clip of ``num_frames``.

    Clips shorter than the window yield a single whole-clip window.
    """
    if num_frames <= 0:
        raise ValueError("num_frames must be positive")
    if num_frames < window_len:
        return [(0, num_frames)]
    return [
        (k * stride, k * stride + window_len)
        for k in range((num_frames - window_len) // stride + 1)
    ]


def spot_lexical(
    stream: PosteriorStream, sentence_tokens: list[str], cfg: SpotConfig
) -> list[SpottedSign]:
    """Emit a lexical spot for every (window, sentence token) pair whose
    posterior reaches delta_l.  Only words of the clip's own sentence are
    assignable.  Overlap resolution is a separate step."""
    vocab_index = {}
    for i, word in enumerate(stream.sign_vocab):
        vocab_index.setdefault(word, i)
    spots = []
    for window in stream.windows:
        for token in sentence_tokens:
            idx = vocab_index.get(token)
            if idx is None:
                continue
            p = float(window.probs[idx])
            if p >= cfg.delta_l:
                spots.append(
                    SpottedSign(
                        clip_id=stream.clip_id,
                        start_frame=window.start_frame,
                        end_frame=window.end_frame,
                        word=token,
                        kind="lexical",
                        score=p,
                    )
                )
    return spots


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute edit distance."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[len(b)]


def normalized_edit_distance(a: str, b: str) -> float:
    """Levenshtein distance divided by max(|a|, |b|); 0 for two empties."""
    if not a and not b:
        return 0.0
    return levenshtein(a, b) / max(len(a), len(b))


def _fs_candidates(sentence_tokens: list[str], min_len: int, max_span: int = 3):
    """(target letters, display word, start, span) for every run of up to
    ``max_span`` consecutive tokens whose concatenation is long enough."""
    for start in range(len(sentence_tokens)):
        for span in range(1, max_span + 1):
            if start + span > len(sentence_tokens):
                break
            tokens = sentence_tokens[start : start + span]
            target = "".join(tokens).upper()
            if len(target) < min_len:
                continue
            yield target, " ".join(tokens), start, span


def spot_fingerspelling(
    proposals: list[FsProposal], sentence_tokens: list[str], cfg: SpotConfig
) -> list[SpottedSign]:
    """Match each confident proposal's letter hypothesis against sentence
    words (and runs of up to 3 consecutive words, for multi-word spellings);
    keep the closest candidate if its normalized edit distance is within
    delta_f."""
    spots = []
    candidates = list(_fs_candidates(sentence_tokens, cfg.min_fs_word_len))
    for prop in proposals:
        if prop.confidence < cfg.conf_min:
            continue
        best = None
        for target, word, start, span in candidates:
            dist = normalized_edit_distance(prop.letters, target)
            key = (dist, start, span)
            if best is None or key < best[0]:
                best = (key, word)
        if best is None:
            continue
        (dist, _, _), word = best
        if dist <= cfg.delta_f:
            spots.append(
                SpottedSign(
                    clip_id=prop.clip_id,
                    start_frame=prop.start_frame,
                    end_frame=prop.end_frame,
                    word=word,
                    kind="fingerspelled",
                    score=1.0 - dist,
                )
            )
    return spots


def interval_iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union else 0.0


def resolve_overlaps(spots: list[SpottedSign], overlap_iou: float) -> list[SpottedSign]:
    """Greedy non-maximum suppression within each kind: highest score first,
    a spot survives only if its IoU with every kept spot of the same kind
    stays within the threshold.  Ties break on earlier start, then word."""
    ordered = sorted(spots, key=lambda s: (-s.score, s.start_frame, s.word))
    kept: list[SpottedSign] = []
    for spot in ordered:
        interval = (spot.start_frame, spot.end_frame)
        ok = all(
            interval_iou(interval, (k.start_frame, k.end_frame)) <= overlap_iou
            for k in kept
            if k.kind == spot.kind
        )
        if ok:
            kept.append(spot)
    kept.sort(key=lambda s: (s.start_frame, s.end_frame, s.word))
    return kept


@dataclass
class PretrainRecord:
    clip_id: str
    start_frame: int
    end_frame: int
    word: str
    kind: str
    score: float
    origin: str  # "spotted" | "isolated"


def export_pretraining_manifest(
    spots: list[SpottedSign],
    isolated_lexicon: Optional[list[dict]] = None,
) -> list[PretrainRecord]:
    """Spots plus optional isolated-sign dictionary entries, tagged by
    origin, ready for serialization."""
    records = [
        PretrainRecord(s.clip_id, s.start_frame, s.end_frame, s.word, s.kind, s.score, "spotted")
        for s in spots
    ]
    for entry in isolated_lexicon or []:
        records.append(
            PretrainRecord(
                clip_id=entry["clip_id"],
                start_frame=entry["start_frame"],
                end_frame=entry["end_frame"],
                word=entry["word"],
                kind=entry.get("kind", "lexical"),
                score=float(entry.get("score", 1.0)),
                origin="isolated",
            )
        )
    return records


def write_pretraining_manifest(records: list[PretrainRecord], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(
                json.dumps(
                    {
                        "clip_id": r.clip_id,
                        "start_frame": r.start_frame,
                        "end_frame": r.end_frame,
                        "word": r.word,
                        "kind": r.kind,
                        "score": round(r.score, 6),
                        "origin": r.origin,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


# --- recognizer output file formats ---

_PST_MAGIC = b"PST1"


def write_posterior_stream(stream: PosteriorStream, path: Path | str) -> None:
    """Binary posterior file: magic "PST1", u32 window count, u32 vocab
    size, then per window {u32 start, u32 end, V little-endian f32}."""
    with open(path, "wb") as f:
        f.write(_PST_MAGIC)
        f.write(struct.pack("<II", len(stream.windows), len(stream.sign_vocab)))
        for w in stream.windows:
            f.write(struct.pack("<II", w.start_frame, w.end_frame))
            f.write(np.asarray(w.probs, dtype="<f4").tobytes())


def read_posterior_stream(path: Path | str, clip_id: str, sign_vocab: list[str]) -> PosteriorStream:
    data = Path(path).read_bytes()
    if data[:4] != _PST_MAGIC:
        raise ValueError(f"{path}: not a PST1 file")
    num_windows, vocab_size = struct.unpack_from("<II", data, 4)
    if vocab_size != len(sign_vocab):
        raise ValueError(
            f"{path}: vocab size {vocab_size} != sidecar vocabulary {len(sign_vocab)}"
        )
    offset = 12
    windows = []
    for _ in range(num_windows):
        start, end = struct.unpack_from("<II", data, offset)
        offset += 8
        probs = np.frombuffer(data, dtype="<f4", count=vocab_size, offset=offset).astype(np.float64)
        offset += 4 * vocab_size
        windows.append(PosteriorWindow(start, end, probs))
    return PosteriorStream(clip_id=clip_id, windows=windows, sign_vocab=sign_vocab)


def read_sign_vocab(path: Path | str) -> list[str]:
    """Sidecar vocabulary: one word per line, line index = class id."""
    return Path(path).read_text(encoding="utf-8").splitlines()


def read_fs_proposals(path: Path | str) -> list[FsProposal]:
    """Tab-separated proposals: clip_id, start_frame, end_frame,
    confidence, letters."""
    proposals = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{line_no}: expected 5 fields, got {len(parts)}")
            clip_id, start, end, conf, letters = parts
            proposals.append(FsProposal(clip_id, int(start), int(end), float(conf), letters))
    return proposals


def write_fs_proposals(proposals: list[FsProposal], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in proposals:
            f.write(f"{p.clip_id}\t{p.start_frame}\t{p.end_frame}\t{p.confidence}\t{p.letters}\n")
