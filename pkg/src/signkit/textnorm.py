"""Sentence segmentation and token normalization shared across the pipeline.

The same tokenizer feeds vocabulary construction, duplicate detection and
metric scoring so that train and eval text receive identical treatment.
"""

from __future__ import annotations

import re

# Terminal punctuation does not end a sentence after these.
ABBREVIATIONS = frozenset({"Dr.", "Mr.", "Mrs.", "Ms.", "St.", "U.S.", "e.g.", "i.e."})

_WS = re.compile(r"\s+")
# keep apostrophes inside words ("don't"), drop all other punctuation
_TOKEN_JUNK = re.compile(r"[^\w\s']|_")
_EDGE_APOSTROPHE = re.compile(r"^'+|'+$")


def segment_sentences(transcript: str) -> list[str]:
    """Split a transcript into sentences.

    A boundary is a '.', '!' or '?' followed by whitespace and a capital
    letter, unless the word ending at that punctuation is a known
    abbreviation.  Whitespace runs are collapsed to single spaces; no
    non-whitespace character is ever dropped.
    """
    text = _WS.sub(" ", transcript).strip()
    if not text:
        return []
    sentences = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in ".!?" and i + 1 < n and text[i + 1] == " ":
            nxt = i + 2
            if nxt < n and text[nxt].isupper():
                word_start = max(start, text.rfind(" ", start, i) + 1)
                word = text[word_start : i + 1]
                if word not in ABBREVIATIONS:
                    sentences.append(text[start : i + 1])
                    start = nxt
                    i = nxt
                    continue
        i += 1
    if start < n:
        sentences.append(text[start:])
    return sentences


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, strip punctuation (keeping internal apostrophes), split
    on whitespace."""
    cleaned = _TOKEN_JUNK.sub(" ", text.lower())
    tokens = []
    for tok in cleaned.split():
        tok = _EDGE_APOSTROPHE.sub("", tok)
        if tok:
            tokens.append(tok)
    return tokens
