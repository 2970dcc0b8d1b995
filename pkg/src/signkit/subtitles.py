"""WebVTT / SRT caption parsing and serialization.

Timestamps are held as integer milliseconds internally and exposed as
seconds; this keeps repeated parse/serialize cycles free of float drift.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class CaptionParseError(ValueError):
    """Malformed caption input; carries the 1-based offending line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class CaptionCue:
    """One subtitle unit: an index, a time interval and its text."""

    index: int
    start_ms: int
    end_ms: int
    text: str

    @property
    def start_sec(self) -> float:
        return self.start_ms / 1000.0

    @property
    def end_sec(self) -> float:
        return self.end_ms / 1000.0

    def __post_init__(self):
        if self.start_ms >= self.end_ms:
            raise ValueError(f"cue {self.index}: start {self.start_ms} >= end {self.end_ms}")
        if not self.text.strip():
            raise ValueError(f"cue {self.index}: empty text")


_VTT_TIME = re.compile(r"^(?:(\d+):)?(\d{2}):(\d{2})\.(\d{3})$")
_SRT_TIME = re.compile(r"^(\d+):(\d{2}):(\d{2}),(\d{3})$")
_TAG = re.compile(r"<[^>]*>")


def _parse_timestamp(token: str, pattern: re.Pattern, line_no: int) -> int:
    m = pattern.match(token)
    if not m:
        raise CaptionParseError(f"bad timestamp {token!r}", line_no)
    groups = m.groups()
    hours = int(groups[0]) if groups[0] is not None else 0
    minutes, seconds, millis = int(groups[1]), int(groups[2]), int(groups[3])
    if minutes >= 60 or seconds >= 60:
        raise CaptionParseError(f"timestamp field out of range in {token!r}", line_no)
    return ((hours * 60 + minutes) * 60 + seconds) * 1000 + millis


def _parse_cue_timing(line: str, pattern: re.Pattern, line_no: int) -> tuple[int, int]:
    if "-->" not in line:
        raise CaptionParseError("expected '-->' timing line", line_no)
    left, right = line.split("-->", 1)
    # anything after the end timestamp (VTT cue settings) is positional payload
    end_token = right.strip().split()[0] if right.strip() else ""
    start = _parse_timestamp(left.strip(), pattern, line_no)
    end = _parse_timestamp(end_token, pattern, line_no)
    if start >= end:
        raise CaptionParseError("cue start must precede end", line_no)
    return start, end


def _clean_text(lines: list[str]) -> str:
    text = "\n".join(lines)
    text = _TAG.sub("", text)
    return text.strip()


def parse_webvtt(data: bytes) -> list[CaptionCue]:
    """Parse a WEBVTT document into time-ordered cues.

    Inline styling tags and cue settings are stripped.  NOTE / STYLE /
    REGION blocks are skipped.  Raises :class:`CaptionParseError` with a
    line number on malformed timing lines.
    """
    lines = data.decode("utf-8-sig").splitlines()
    if not lines or not lines[0].startswith("WEBVTT"):
        raise CaptionParseError("missing WEBVTT signature", 1)

    cues: list[CaptionCue] = []
    i = 1
    n = len(lines)
    while i < n:
        if not lines[i].strip():
            i += 1
            continue
        first = lines[i].strip()
        if first.startswith(("NOTE", "STYLE", "REGION")):
            while i < n and lines[i].strip():
                i += 1
            continue
        # optional cue identifier line before the timing line
        if "-->" not in lines[i]:
            i += 1
            if i >= n:
                raise CaptionParseError("dangling cue identifier", n)
        timing_line_no = i + 1
        start, end = _parse_cue_timing(lines[i], _VTT_TIME, timing_line_no)
        i += 1
        text_lines = []
        while i < n and lines[i].strip():
            text_lines.append(lines[i])
            i += 1
        text = _clean_text(text_lines)
        if text:
            cues.append(CaptionCue(len(cues) + 1, start, end, text))
    cues.sort(key=lambda c: c.start_ms)
    return [CaptionCue(k + 1, c.start_ms, c.end_ms, c.text) for k, c in enumerate(cues)]


def parse_srt(data: bytes) -> list[CaptionCue]:
    """Parse an SRT document (index / timing / text blocks)."""
    lines = data.decode("utf-8-sig").splitlines()
    cues: list[CaptionCue] = []
    i = 0
    n = len(lines)
    while i < n:
        if not lines[i].strip():
            i += 1
            continue
        if not lines[i].strip().isdigit():
            raise CaptionParseError(f"expected cue index, got {lines[i]!r}", i + 1)
        i += 1
        if i >= n:
            raise CaptionParseError("missing timing line", n)
        start, end = _parse_cue_timing(lines[i], _SRT_TIME, i + 1)
        i += 1
        text_lines = []
        while i < n and lines[i].strip():
            text_lines.append(lines[i])
            i += 1
        text = _clean_text(text_lines)
        if text:
            cues.append(CaptionCue(len(cues) + 1, start, end, text))
    cues.sort(key=lambda c: c.start_ms)
    return [CaptionCue(k + 1, c.start_ms, c.end_ms, c.text) for k, c in enumerate(cues)]


def _format_ms(ms: int, sep: str) -> str:
    hours, rem = divmod(ms, 3_600_000)
    minutes, rem = divmod(rem, 60_000)
    seconds, millis = divmod(rem, 1000)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d}{sep}{millis:03d}"


def cues_to_webvtt(cues: list[CaptionCue]) -> bytes:
    out = ["WEBVTT", ""]
    for cue in cues:
        out.append(f"{_format_ms(cue.start_ms, '.')} --> {_format_ms(cue.end_ms, '.')}")
        out.append(cue.text)
        out.append("")
    return "\n".join(out).encode("utf-8")


def cues_to_srt(cues: list[CaptionCue]) -> bytes:
    out = []
    for cue in cues:
        out.append(str(cue.index))
        out.append(f"{_format_ms(cue.start_ms, ',')} --> {_format_ms(cue.end_ms, ',')}")
        out.append(cue.text)
        out.append("")
    return "\n".join(out).encode("utf-8")
