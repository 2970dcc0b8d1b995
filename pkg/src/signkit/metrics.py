"""Corpus-level BLEU-{1..4} and ROUGE-L, plus the tag-subset breakdowns
(duplicate / source / fingerspelling) used for analysis reports.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

SOURCE_TAGS = ("news", "vlog", "other")
KNOWN_TAGS = frozenset(SOURCE_TAGS) | {"duplicate", "has_fingerspelling"}


@dataclass(frozen=True)
class EvalPair:
    clip_id: str
    hypothesis: tuple[str, ...]
    reference: tuple[str, ...]
    tags: frozenset[str] = frozenset()

    def __post_init__(self):
        unknown = self.tags - KNOWN_TAGS
        if unknown:
            raise ValueError(f"{self.clip_id}: unknown tags {sorted(unknown)}")
        if len(self.tags & set(SOURCE_TAGS)) != 1:
            raise ValueError(f"{self.clip_id}: exactly one source tag required")


def _ngram_counts(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def bleu(pairs: list[EvalPair], max_n: int = 4) -> float:
    """Corpus BLEU in [0, 100]: clipped n-gram precisions pooled over all
    pairs, geometric mean over orders 1..max_n, times the brevity penalty
    min(1, exp(1 - r/c)).  Unsmoothed: any order with zero matches gives 0.
    """
    if not pairs:
        raise ValueError("bleu requires at least one pair")
    if max_n not in (1, 2, 3, 4):
        raise ValueError("max_n must be in 1..4")
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for pair in pairs:
        hyp_len += len(pair.hypothesis)
        ref_len += len(pair.reference)
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(pair.hypothesis, n)
            ref_counts = _ngram_counts(pair.reference, n)
            matched[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            total[n - 1] += max(0, len(pair.hypothesis) - n + 1)
    if any(m == 0 for m in matched):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    bp = min(1.0, math.exp(1.0 - ref_len / hyp_len)) if hyp_len > 0 else 0.0
    return 100.0 * bp * math.exp(log_precision)


def _lcs_length(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def rouge_l(pairs: list[EvalPair]) -> float:
    """Mean per-pair LCS F1 in [0, 100]."""
    if not pairs:
        raise ValueError("rouge_l requires at least one pair")
    scores = []
    for pair in pairs:
        lcs = _lcs_length(pair.hypothesis, pair.reference)
        if lcs == 0 or not pair.hypothesis or not pair.reference:
            scores.append(0.0)
            continue
        p = lcs / len(pair.hypothesis)
        r = lcs / len(pair.reference)
        scores.append(2 * p * r / (p + r))
    return 100.0 * sum(scores) / len(scores)


@dataclass
class SubsetScores:
    count: int
    bleu: dict[int, float]  # order -> score
    rouge_l: float


@dataclass
class MetricReport:
    subsets: dict[str, SubsetScores] = field(default_factory=dict)

    def format(self) -> str:
        lines = []
        for name, s in self.subsets.items():
            for n in sorted(s.bleu):
                lines.append(f"{name}\tbleu-{n}\t{s.bleu[n]:.2f}")
            lines.append(f"{name}\trouge-l\t{s.rouge_l:.2f}")
            lines.append(f"{name}\tpairs\t{s.count}")
        return "\n".join(lines)


def _score_subset(pairs: list[EvalPair]) -> SubsetScores:
    return SubsetScores(
        count=len(pairs),
        bleu={n: bleu(pairs, n) for n in (1, 2, 3, 4)},
        rouge_l=rouge_l(pairs),
    )


def breakdown(pairs: list[EvalPair]) -> MetricReport:
    """Full metric set on the analysis subsets; empty subsets are omitted
    rather than reported as zero."""
    subsets = {
        "all": pairs,
        "duplicate": [p for p in pairs if "duplicate" in p.tags],
        "non_duplicate": [p for p in pairs if "duplicate" not in p.tags],
        "news": [p for p in pairs if "news" in p.tags],
        "vlog": [p for p in pairs if "vlog" in p.tags],
        "other": [p for p in pairs if "other" in p.tags],
        "with_fs": [p for p in pairs if "has_fingerspelling" in p.tags],
        "without_fs": [p for p in pairs if "has_fingerspelling" not in p.tags],
    }
    report = MetricReport()
    for name, subset in subsets.items():
        if subset:
            report.subsets[name] = _score_subset(subset)
    return report
