"""Corpus construction: sentence/cue alignment, clip manifests, vocabulary
and dataset statistics.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .subtitles import CaptionCue
from .textnorm import normalize_tokens, segment_sentences

SOURCES = ("news", "vlog", "other")
SPLITS = ("train", "dev", "test")

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class ClipRecord:
    """One (video interval, English sentence) translation pair."""

    clip_id: str
    video_id: str
    start_ms: int
    end_ms: int
    text: str
    source: str = "other"
    signer_id: Optional[str] = None
    split: str = "train"

    @property
    def start_sec(self) -> float:
        return self.start_ms / 1000.0

    @property
    def end_sec(self) -> float:
        return self.end_ms / 1000.0

    def __post_init__(self):
        if self.start_ms >= self.end_ms:
            raise ValueError(f"{self.clip_id}: start_ms >= end_ms")
        if self.source not in SOURCES:
            raise ValueError(f"{self.clip_id}: unknown source {self.source!r}")
        if self.split not in SPLITS:
            raise ValueError(f"{self.clip_id}: unknown split {self.split!r}")
        if not normalize_tokens(self.text):
            raise ValueError(f"{self.clip_id}: text has no tokens after normalization")


def align_sentences_to_cues(
    cues: list[CaptionCue],
    sentences: list[str],
    video_id: str,
    source: str = "other",
    signer_id: Optional[str] = None,
    split: str = "train",
) -> list[ClipRecord]:
    """Assign a time span to each sentence from the cue stream.

    Sentences must be the segmentation of the whitespace-normalized,
    space-joined cue text.  A cue containing a sentence boundary is split
    proportionally to the character counts of the sentence portions it
    holds; slices within a cue are contiguous so no cue time is lost.
    """
    if not sentences:
        return []
    cue_texts = [" ".join(c.text.split()) for c in cues]
    joined = " ".join(cue_texts)

    # sentence char ranges in the joined text
    sent_ranges = []
    offset = 0
    for sent in sentences:
        if joined[offset : offset + len(sent)] != sent:
            raise AlignmentError(f"sentence not locatable in cue stream: {sent!r}")
        sent_ranges.append((offset, offset + len(sent)))
        offset += len(sent) + 1

    # cue char ranges in the joined text
    cue_ranges = []
    offset = 0
    for text in cue_texts:
        cue_ranges.append((offset, offset + len(text)))
        offset += len(text) + 1

    starts: list[Optional[int]] = [None] * len(sentences)
    ends: list[Optional[int]] = [None] * len(sentences)
    for cue, (cs, ce) in zip(cues, cue_ranges):
        portions = []  # (sentence index, chars of that sentence inside this cue)
        for si, (sa, sb) in enumerate(sent_ranges):
            overlap = min(sb, ce) - max(sa, cs)
            if overlap > 0:
                portions.append((si, overlap))
        if not portions:
            continue
        total = sum(n for _, n in portions)
        duration = cue.end_ms - cue.start_ms
        cum = 0
        slice_start = cue.start_ms
        for k, (si, count) in enumerate(portions):
            cum += count
            if k == len(portions) - 1:
                slice_end = cue.end_ms
            else:
                slice_end = cue.start_ms + round(cum / total * duration)
            if starts[si] is None:
                starts[si] = slice_start
            ends[si] = slice_end
            slice_start = slice_end

    records = []
    for si, sent in enumerate(sentences):
        if starts[si] is None or ends[si] is None:
            raise AlignmentError(f"sentence received no cue time: {sent!r}")
        records.append(
            ClipRecord(
                clip_id=f"{video_id}-{si:04d}",
                video_id=video_id,
                start_ms=starts[si],
                end_ms=ends[si],
                text=sent,
                source=source,
                signer_id=signer_id,
                split=split,
            )
        )
    records.sort(key=lambda r: r.start_ms)
    return records


def records_from_captions(
    cues: list[CaptionCue],
    video_id: str,
    source: str = "other",
    signer_id: Optional[str] = None,
    split: str = "train",
) -> list[ClipRecord]:
    """Segment the cue transcript into sentences and align them."""
    transcript = " ".join(" ".join(c.text.split()) for c in cues)
    sentences = segment_sentences(transcript)
    return align_sentences_to_cues(cues, sentences, video_id, source, signer_id, split)


def extend_boundaries(rec: ClipRecord, pad_sec: float, video_duration_sec: float) -> ClipRecord:
    """Pad the clip interval on both sides, clamped to the video extent."""
    if pad_sec < 0:
        raise ValueError("pad must be non-negative")
    pad_ms = round(pad_sec * 1000)
    duration_ms = round(video_duration_sec * 1000)
    return ClipRecord(
        clip_id=rec.clip_id,
        video_id=rec.video_id,
        start_ms=max(0, rec.start_ms - pad_ms),
        end_ms=min(duration_ms, rec.end_ms + pad_ms),
        text=rec.text,
        source=rec.source,
        signer_id=rec.signer_id,
        split=rec.split,
    )


class Vocabulary:
    """Word-to-id map with PAD/BOS/EOS/UNK specials at ids 0..3."""

    def __init__(self, words: Iterable[str], min_count: int = 1):
        self.min_count = min_count
        self.word_to_id: dict[str, int] = {}
        for word in words:
            if word not in self.word_to_id:
                self.word_to_id[word] = len(SPECIAL_TOKENS) + len(self.word_to_id)
        self.id_to_word = {i: w for w, i in self.word_to_id.items()}

    def __len__(self) -> int:
        return len(SPECIAL_TOKENS) + len(self.word_to_id)

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_id

    def encode(self, tokens: list[str], add_bos_eos: bool = False) -> list[int]:
        ids = [self.word_to_id.get(t, UNK) for t in tokens]
        if add_bos_eos:
            ids = [BOS] + ids + [EOS]
        return ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        words = []
        for i in ids:
            if i in (PAD, BOS, EOS):
                continue
            words.append(self.id_to_word.get(i, SPECIAL_TOKENS[UNK]))
        return words

    def save(self, path: Path | str) -> None:
        lines = [f"{tok}\t{i}" for i, tok in enumerate(SPECIAL_TOKENS)]
        lines += [f"{w}\t{i}" for w, i in sorted(self.word_to_id.items(), key=lambda kv: kv[1])]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "Vocabulary":
        words = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            word, idx = line.rsplit("\t", 1)
            if int(idx) >= len(SPECIAL_TOKENS):
                words.append(word)
        return cls(words)


def build_vocab(records: list[ClipRecord], min_count: int = 2) -> Vocabulary:
    """Keep every word occurring at least ``min_count`` times in the records."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    for rec in records:
        counts.update(normalize_tokens(rec.text))
    kept = sorted(w for w, c in counts.items() if c >= min_count)
    vocab = Vocabulary(kept, min_count=min_count)
    return vocab


def detect_duplicates(
    eval_records: list[ClipRecord], train_records: list[ClipRecord]
) -> tuple[list[ClipRecord], list[ClipRecord]]:
    """Partition eval records into (duplicate, non_duplicate) by exact
    normalized-token-sequence match against the train records."""
    train_keys = {tuple(normalize_tokens(r.text)) for r in train_records}
    duplicates, non_duplicates = [], []
    for rec in eval_records:
        if tuple(normalize_tokens(rec.text)) in train_keys:
            duplicates.append(rec)
        else:
            non_duplicates.append(rec)
    return duplicates, non_duplicates


@dataclass
class CorpusStats:
    num_records: int
    length_histogram: dict[int, int]
    signer_share: dict[str, float]
    source_counts: dict[str, int]
    duplicate_count: Optional[int] = None

    def format(self) -> str:
        lines = [f"records\t{self.num_records}"]
        for length in sorted(self.length_histogram):
            lines.append(f"length\t{length}\t{self.length_histogram[length]}")
        for signer in sorted(self.signer_share):
            lines.append(f"signer\t{signer}\t{self.signer_share[signer]:.4f}")
        for source in sorted(self.source_counts):
            lines.append(f"source\t{source}\t{self.source_counts[source]}")
        if self.duplicate_count is not None:
            lines.append(f"duplicates\t{self.duplicate_count}")
        return "\n".join(lines)


def corpus_stats(
    records: list[ClipRecord], reference: Optional[list[ClipRecord]] = None
) -> CorpusStats:
    """Aggregate sentence-length, signer-share and source statistics.

    Records with unknown signer are excluded from the signer share.  When a
    reference split is given, counts records duplicated in it.
    """
    length_hist = Counter(len(normalize_tokens(r.text)) for r in records)
    signer_counts = Counter(r.signer_id for r in records if r.signer_id is not None)
    known = sum(signer_counts.values())
    signer_share = {s: c / known for s, c in signer_counts.items()} if known else {}
    source_counts = Counter(r.source for r in records)
    duplicate_count = None
    if reference is not None:
        duplicates, _ = detect_duplicates(records, reference)
        duplicate_count = len(duplicates)
    return CorpusStats(
        num_records=len(records),
        length_histogram=dict(length_hist),
        signer_share=signer_share,
        source_counts=dict(source_counts),
        duplicate_count=duplicate_count,
    )


def write_manifest(records: list[ClipRecord], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            row = {
                "clip_id": rec.clip_id,
                "video_id": rec.video_id,
                "start_ms": rec.start_ms,
                "end_ms": rec.end_ms,
                "text": rec.text,
                "source": rec.source,
                "split": rec.split,
            }
            if rec.signer_id is not None:
                row["signer_id"] = rec.signer_id
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_manifest(path: Path | str) -> list[ClipRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            records.append(
                ClipRecord(
                    clip_id=row["clip_id"],
                    video_id=row["video_id"],
                    start_ms=row["start_ms"],
                    end_ms=row["end_ms"],
                    text=row["text"],
                    source=row.get("source", "other"),
                    signer_id=row.get("signer_id"),
                    split=row.get("split", "train"),
                )
            )
    seen = set()
    for rec in records:
        if rec.clip_id in seen:
            raise ValueError(f"duplicate clip_id in manifest: {rec.clip_id}")
        seen.add(rec.clip_id)
    return records
