"""
Publication formats for a TranscriptDoc.

Transcript layout (locked by golden tests):

    # <lecture title>

    *<preamble>*

    ## 1. <title>

    <recognized text>

    *<N> seconds*

Chapter lines are `M:SS label` below one hour and `H:MM:SS label` from one hour on,
with offsets floored to whole seconds.
"""
import logging
import re
from typing import Iterable, List, Optional, Tuple, Union

from .exceptions import MissingDuration, NotTranscriptLayout
from .models import (
    FAILED_PLACEHOLDER,
    ChapterList,
    ChapterMark,
    SegmentSource,
    TranscriptDoc,
    TranscriptSegment,
)

logger = logging.getLogger(__name__)

MIN_CHAPTER_MS = 10_000

_CHAPTER_LINE = re.compile(r"^(?:(\d+):(\d{2})|(\d{1,2})):(\d{2}) (\S.*)$")
_H2 = re.compile(r"^## (\d+)\. (.+)$")
_DURATION_LINE = re.compile(r"^\*\d+ seconds?\*$")
_ITALIC_LINE = re.compile(r"^(\*[^*].*\*|_[^_].*_)$")
_ESCAPE_LEADING = ("#", "*", "\\", "_")


# --- chapters ---


def _durations(
    segments: Iterable[TranscriptSegment], gap_fallback_ms: Optional[int], warnings: List[str]
) -> List[Tuple[TranscriptSegment, int]]:
    out = []
    for seg in segments:
        duration = seg.duration_ms
        if duration is None:
            if gap_fallback_ms is None:
                raise MissingDuration(seg.export_index)
            msg = f"slide {seg.export_index} has no duration; using fallback of {gap_fallback_ms} ms"
            logger.warning(msg)
            warnings.append(msg)
            duration = gap_fallback_ms
        out.append((seg, duration))
    return out


def chapter_marks(doc: TranscriptDoc, gap_fallback_ms: Optional[int] = None) -> ChapterList:
    """
    One chapter per segment at the running sum of the preceding durations, labelled
    "<index> - <title>". Zero-length slides, and slides starting in the same whole second
    as the previous chapter, get no chapter; slides shorter than the platform's 10 s
    minimum are reported in `warnings`.

    Raises:
        MissingDuration: a segment has no duration and no fallback was given.
    """
    warnings: List[str] = []
    marks: List[ChapterMark] = []
    offset = 0
    for seg, duration in _durations(doc.segments, gap_fallback_ms, warnings):
        if duration == 0:
            msg = f"slide {seg.export_index} has zero duration; no chapter emitted"
            logger.warning(msg)
            warnings.append(msg)
            continue
        if marks and marks[-1].offset_ms // 1000 == offset // 1000:
            msg = f"slide {seg.export_index} starts in the same second as the previous chapter; no chapter emitted"
            logger.warning(msg)
            warnings.append(msg)
            offset += duration
            continue
        marks.append(ChapterMark(offset_ms=offset, label=f"{seg.export_index} - {seg.heading_title}"))
        if duration < MIN_CHAPTER_MS:
            msg = f"slide {seg.export_index} lasts {duration / 1000:.1f} s, below the 10 s minimum chapter length"
            logger.warning(msg)
            warnings.append(msg)
        offset += duration
    return ChapterList(marks=tuple(marks), warnings=tuple(warnings))


def format_timestamp(offset_ms: int) -> str:
    seconds = offset_ms // 1000
    hours, rest = divmod(seconds, 3600)
    minutes, seconds = divmod(rest, 60)
    if hours:
        return f"{hours}:{minutes:02d}:{seconds:02d}"
    return f"{minutes}:{seconds:02d}"


def render_chapters(marks: Union[ChapterList, Iterable[ChapterMark]]) -> str:
    items = marks.marks if isinstance(marks, ChapterList) else marks
    return "".join(f"{format_timestamp(m.offset_ms)} {m.label}\n" for m in items)


def parse_chapters(text: str) -> ChapterList:
    """Parse chapter text back into marks; offsets come back in whole seconds."""
    marks = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        m = _CHAPTER_LINE.match(line)
        if m is None:
            raise ValueError(f"line {lineno} is not a chapter line: {line!r}")
        if m.group(1) is not None:
            hours, minutes = int(m.group(1)), int(m.group(2))
        else:
            hours, minutes = 0, int(m.group(3))
        seconds = int(m.group(4))
        if minutes >= 60 or seconds >= 60:
            raise ValueError(f"line {lineno} has an out-of-range timestamp: {line!r}")
        offset_ms = ((hours * 60 + minutes) * 60 + seconds) * 1000
        marks.append(ChapterMark(offset_ms=offset_ms, label=m.group(5)))
    return ChapterList(marks=tuple(marks))


# --- markdown ---


def _needs_escape(line: str) -> bool:
    stripped = line.strip()
    return stripped.startswith(_ESCAPE_LEADING) or stripped == FAILED_PLACEHOLDER


def _escape_line(line: str) -> str:
    return "\\" + line if _needs_escape(line) else line


def _unescape_line(line: str) -> str:
    if line.startswith("\\") and _needs_escape(line[1:]):
        return line[1:]
    return line


def _segment_block(seg: TranscriptSegment) -> str:
    parts = [f"## {seg.export_index}. {seg.heading_title}\n"]
    if seg.source is SegmentSource.FAILED:
        parts.append(f"{FAILED_PLACEHOLDER}\n")
    elif seg.text:
        parts.append("\n".join(_escape_line(line) for line in seg.text.splitlines()) + "\n")
    if seg.duration_ms is not None:
        parts.append(f"*{seg.duration_ms // 1000} seconds*\n")
    return "\n".join(parts)


def render_markdown(doc: TranscriptDoc) -> str:
    header = [f"# {' '.join(doc.lecture_title.split())}\n"]
    if doc.preamble.strip():
        header.append(f"*{' '.join(doc.preamble.split())}*\n")
    blocks = ["\n".join(header)] + [_segment_block(seg) for seg in doc.segments]
    return "\n".join(blocks)


def markdown_to_caption_text(markdown: str) -> str:
    """
    Recover plain narration text from a (possibly corrected) transcript.

    Drops the H1, the preamble, every `## N. Title` heading, duration lines and the
    failed-transcription placeholder; returns the remaining paragraphs joined by a
    blank line, each paragraph's lines passed through verbatim.

    Raises:
        NotTranscriptLayout: the input does not follow the transcript layout; the
            error names the first offending line.
    """
    lines = markdown.splitlines()
    start = next((i for i, line in enumerate(lines) if line.strip()), None)
    if start is None:
        raise NotTranscriptLayout(1, "", "empty document")
    if not lines[start].startswith("# "):
        raise NotTranscriptLayout(start + 1, lines[start], "expected a '# ' lecture heading")

    paragraphs: List[str] = []
    current: List[str] = []

    def flush() -> None:
        if current:
            paragraphs.append("\n".join(current))
            current.clear()

    expected = 1
    in_body = False
    for lineno, line in enumerate(lines[start + 1:], start=start + 2):
        stripped = line.strip()
        if not stripped:
            flush()
            continue
        if line.startswith("#"):
            m = _H2.match(line)
            if m is None:
                raise NotTranscriptLayout(lineno, line, "unexpected heading")
            if int(m.group(1)) != expected:
                raise NotTranscriptLayout(lineno, line, f"expected slide heading {expected}")
            flush()
            expected += 1
            in_body = True
            continue
        if not in_body:
            if not _ITALIC_LINE.match(stripped):
                raise NotTranscriptLayout(lineno, line, "expected an italic preamble line")
            continue
        if _DURATION_LINE.match(stripped) or stripped == FAILED_PLACEHOLDER:
            flush()
            continue
        current.append(_unescape_line(line))
    flush()
    return "\n\n".join(paragraphs)


# --- timed cues ---


def _cue_timestamp(ms: int, separator: str = ".") -> str:
    hours, rest = divmod(ms, 3_600_000)
    minutes, rest = divmod(rest, 60_000)
    seconds, millis = divmod(rest, 1000)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d}{separator}{millis:03d}"


def _cue_text(text: str) -> str:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    return "\n".join(lines).replace("-->", "->")


def _timed_cues(doc: TranscriptDoc, gap_fallback_ms: Optional[int]) -> List[Tuple[int, int, str]]:
    cues = []
    offset = 0
    for seg, duration in _durations(doc.segments, gap_fallback_ms, []):
        start, offset = offset, offset + duration
        text = _cue_text(seg.text)
        if duration > 0 and text:
            cues.append((start, offset, text))
    return cues


def render_cues(doc: TranscriptDoc, gap_fallback_ms: Optional[int] = None) -> str:
    """
    WebVTT with one cue per slide spanning [offset, offset + duration). Slides with
    no text produce no cue.

    Raises:
        MissingDuration: a segment has no duration and no fallback was given.
    """
    out = ["WEBVTT\n"]
    for start, end, text in _timed_cues(doc, gap_fallback_ms):
        out.append(f"\n{_cue_timestamp(start)} --> {_cue_timestamp(end)}\n{text}\n")
    return "".join(out)


def render_srt(doc: TranscriptDoc, gap_fallback_ms: Optional[int] = None) -> str:
    out = []
    for number, (start, end, text) in enumerate(_timed_cues(doc, gap_fallback_ms), start=1):
        out.append(f"{number}\n{_cue_timestamp(start, ',')} --> {_cue_timestamp(end, ',')}\n{text}\n")
    return "\n".join(out)
