"""
Transcript correction analysis with wdiff semantics.

Words are maximal runs of non-whitespace; two words are equal only when their text
is identical, so case and punctuation fixes count as changes. Unchanged words are an
exact longest common subsequence, computed with Myers' O((N+M)D) algorithm in its
linear-space, meet-in-the-middle form.
"""
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Literal, NamedTuple, Optional, Sequence, Tuple

from pydantic import BaseModel

from .emit import markdown_to_caption_text
from .models import DiffReport

logger = logging.getLogger(__name__)

_NON_ALNUM = re.compile(r"[\W_]+")

AVG_LABEL = "Avg."


@dataclass(frozen=True)
class WordToken:
    text: str
    normalized: str


Hunk = Tuple[Tuple[WordToken, ...], Tuple[WordToken, ...]]


class WordDiff(NamedTuple):
    unchanged: int
    hunks: List[Hunk]
    punctuation_only_changes: int


def tokenize(text: str) -> List[WordToken]:
    return [WordToken(t, _NON_ALNUM.sub("", t)) for t in text.split()]


def _bisect(a: Sequence[int], a_lo: int, a_hi: int, b: Sequence[int], b_lo: int, b_hi: int) -> Optional[Tuple[int, int]]:
    """
    A point (x, y), relative to the box, on a shortest edit path through
    a[a_lo:a_hi] x b[b_lo:b_hi]. The greedy search runs from both corners until
    the frontiers meet on a diagonal. None when the two ranges share no word.
    """
    n, m = a_hi - a_lo, b_hi - b_lo
    max_d = (n + m + 1) // 2
    offset, size = max_d, 2 * max_d
    forward = [-1] * size
    backward = [-1] * size
    forward[offset + 1] = 0
    backward[offset + 1] = 0
    delta = n - m
    odd = delta % 2 != 0
    # Diagonals that ran off the grid are trimmed from either end of the scan.
    f_start = f_end = b_start = b_end = 0
    for d in range(max_d):
        for k in range(-d + f_start, d + 1 - f_end, 2):
            i = offset + k
            if k == -d or (k != d and forward[i - 1] < forward[i + 1]):
                x = forward[i + 1]
            else:
                x = forward[i - 1] + 1
            y = x - k
            while x < n and y < m and a[a_lo + x] == b[b_lo + y]:
                x += 1
                y += 1
            forward[i] = x
            if x > n:
                f_end += 2
            elif y > m:
                f_start += 2
            elif odd:
                j = offset + delta - k
                if 0 <= j < size and backward[j] != -1 and x >= n - backward[j]:
                    return x, y

        for k in range(-d + b_start, d + 1 - b_end, 2):
            j = offset + k
            if k == -d or (k != d and backward[j - 1] < backward[j + 1]):
                x = backward[j + 1]
            else:
                x = backward[j - 1] + 1
            y = x - k
            while x < n and y < m and a[a_hi - 1 - x] == b[b_hi - 1 - y]:
                x += 1
                y += 1
            backward[j] = x
            if x > n:
                b_end += 2
            elif y > m:
                b_start += 2
            elif not odd:
                i = offset + delta - k
                if 0 <= i < size and forward[i] != -1:
                    fx = forward[i]
                    if fx >= n - x:
                        return fx, fx - (i - offset)
    return None


def _shortest_edit_matches(a: Sequence[int], b: Sequence[int]) -> List[Tuple[int, int]]:
    """
    Index pairs (i, j) with a[i] == b[j] along one shortest edit script.

    Each box is trimmed of its common prefix and suffix, then split at a point of
    an optimal path and both halves are queued. Memory stays linear in len(a) + len(b).
    """
    matches: List[Tuple[int, int]] = []
    boxes = [(0, len(a), 0, len(b))]
    while boxes:
        a_lo, a_hi, b_lo, b_hi = boxes.pop()
        while a_lo < a_hi and b_lo < b_hi and a[a_lo] == b[b_lo]:
            matches.append((a_lo, b_lo))
            a_lo += 1
            b_lo += 1
        while a_lo < a_hi and b_lo < b_hi and a[a_hi - 1] == b[b_hi - 1]:
            a_hi -= 1
            b_hi -= 1
            matches.append((a_hi, b_hi))
        if a_lo == a_hi or b_lo == b_hi:
            continue
        split = _bisect(a, a_lo, a_hi, b, b_lo, b_hi)
        if split is None:
            continue
        x, y = split
        boxes.append((a_lo, a_lo + x, b_lo, b_lo + y))
        boxes.append((a_lo + x, a_hi, b_lo + y, b_hi))
    matches.sort()
    return matches


def lcs_matches(a: Sequence[str], b: Sequence[str]) -> List[Tuple[int, int]]:
    """Matched index pairs of an exact longest common subsequence of `a` and `b`."""
    n, m = len(a), len(b)
    prefix = 0
    while prefix < n and prefix < m and a[prefix] == b[prefix]:
        prefix += 1
    suffix = 0
    while suffix < n - prefix and suffix < m - prefix and a[n - 1 - suffix] == b[m - 1 - suffix]:
        suffix += 1

    head = [(i, i) for i in range(prefix)]
    tail = [(n - suffix + i, m - suffix + i) for i in range(suffix)]
    mid_a = a[prefix:n - suffix]
    mid_b = b[prefix:m - suffix]
    if not set(mid_a).intersection(mid_b):
        return head + tail

    ids: Dict[str, int] = {}
    ia = [ids.setdefault(t, len(ids)) for t in mid_a]
    ib = [ids.setdefault(t, len(ids)) for t in mid_b]
    middle = [(i + prefix, j + prefix) for i, j in _shortest_edit_matches(ia, ib)]
    return head + middle + tail


def word_diff(auto: Sequence[WordToken], corrected: Sequence[WordToken]) -> WordDiff:
    """
    Exact word diff. Unchanged = LCS length under text equality; hunks are the maximal
    non-matching runs between matches. A hunk whose deleted and inserted words have the
    same multiset of normalized forms (ignoring pure punctuation) is a punctuation-only change.
    """
    matches = lcs_matches([t.text for t in auto], [t.text for t in corrected])
    hunks: List[Hunk] = []
    i = j = 0
    for mi, mj in matches + [(len(auto), len(corrected))]:
        if mi > i or mj > j:
            hunks.append((tuple(auto[i:mi]), tuple(corrected[j:mj])))
        i, j = mi + 1, mj + 1
    punctuation_only = sum(1 for deleted, inserted in hunks if _is_punctuation_only(deleted, inserted))
    return WordDiff(len(matches), hunks, punctuation_only)


def _is_punctuation_only(deleted: Sequence[WordToken], inserted: Sequence[WordToken]) -> bool:
    before = Counter(t.normalized for t in deleted if t.normalized)
    after = Counter(t.normalized for t in inserted if t.normalized)
    return before == after


def top_changes(hunks: Iterable[Hunk], k: int) -> List[Tuple[str, int]]:
    """The k most frequent corrected-side (inserted) words, ties broken lexicographically."""
    counts = Counter(t.text for _, inserted in hunks for t in inserted)
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))[:k]


def diff_report(lecture_id: str, auto_text: str, corrected_text: str, k: int = 3) -> DiffReport:
    auto = tokenize(auto_text)
    diff = word_diff(auto, tokenize(corrected_text))
    return DiffReport(
        lecture_id=lecture_id,
        total_words=len(auto),
        unchanged_words=diff.unchanged,
        changes=tuple(
            (tuple(t.text for t in deleted), tuple(t.text for t in inserted)) for deleted, inserted in diff.hunks
        ),
        top_changes=tuple(top_changes(diff.hunks, k)),
        punctuation_only_changes=diff.punctuation_only_changes,
    )


def render_wdiff(auto: Sequence[WordToken], corrected: Sequence[WordToken]) -> str:
    """Inline diff in wdiff notation: `[-deleted-] {+inserted+}`."""
    out: List[str] = []
    i = j = 0
    matches = lcs_matches([t.text for t in auto], [t.text for t in corrected])
    for mi, mj in matches + [(len(auto), len(corrected))]:
        if mi > i:
            out.append("[-" + " ".join(t.text for t in auto[i:mi]) + "-]")
        if mj > j:
            out.append("{+" + " ".join(t.text for t in corrected[j:mj]) + "+}")
        if mi < len(auto):
            out.append(auto[mi].text)
        i, j = mi + 1, mj + 1
    return " ".join(out)


# --- corpus report ---


def percent_half_up(numerator: int, denominator: int) -> int:
    if denominator == 0:
        return 100
    return (200 * numerator + denominator) // (2 * denominator)


class ReportRow(BaseModel):
    lecture: str
    words: int
    unchanged_words: int
    unchanged_ratio: float
    unchanged_percent: int
    top_changes: List[Tuple[str, int]]
    punctuation_only_changes: int


class ReportAverage(BaseModel):
    lecture: str = AVG_LABEL
    words: int
    unchanged_percent: int


class CorpusReport(BaseModel):
    rows: List[ReportRow]
    avg: ReportAverage


def build_corpus_report(
    pairs: Iterable[Tuple[str, str, str]], include_headings: bool = True, k: int = 3
) -> CorpusReport:
    """
    One row per (lecture_id, auto_markdown, corrected_markdown) pair, in input order.
    With include_headings=False both sides are first reduced to caption text.

    Raises:
        NotTranscriptLayout: body-only mode and a file is not a transcript.
    """
    rows: List[ReportRow] = []
    ratios: List[Fraction] = []
    for lecture_id, auto_md, corrected_md in pairs:
        if not include_headings:
            auto_md = markdown_to_caption_text(auto_md)
            corrected_md = markdown_to_caption_text(corrected_md)
        report = diff_report(lecture_id, auto_md, corrected_md, k)
        logger.info("%s: %d/%d words unchanged", lecture_id, report.unchanged_words, report.total_words)
        ratios.append(Fraction(report.unchanged_words, report.total_words) if report.total_words else Fraction(1))
        rows.append(
            ReportRow(
                lecture=lecture_id,
                words=report.total_words,
                unchanged_words=report.unchanged_words,
                unchanged_ratio=report.unchanged_ratio,
                unchanged_percent=percent_half_up(report.unchanged_words, report.total_words),
                top_changes=list(report.top_changes),
                punctuation_only_changes=report.punctuation_only_changes,
            )
        )

    if rows:
        avg_words = math.floor(Fraction(sum(r.words for r in rows), len(rows)) + Fraction(1, 2))
        avg_percent = math.floor(sum(ratios) / len(ratios) * 100 + Fraction(1, 2))
    else:
        avg_words, avg_percent = 0, 100
    return CorpusReport(rows=rows, avg=ReportAverage(words=avg_words, unchanged_percent=avg_percent))


def _cell(text: str) -> str:
    return text.replace("|", "\\|")


def render_report_markdown(report: CorpusReport) -> str:
    lines = [
        "| Lecture | Words | Unchanged | Most Common Changes |",
        "|:--|--:|--:|:--|",
    ]
    for row in report.rows:
        changes = "; ".join(_cell(token) for token, _ in row.top_changes)
        lines.append(f"| {_cell(row.lecture)} | {row.words:,} | {row.unchanged_percent}% | {changes} |")
    lines.append(f"| {AVG_LABEL} | {report.avg.words:,} | {report.avg.unchanged_percent}% |  |")
    return "\n".join(lines) + "\n"


def render_report_json(report: CorpusReport) -> str:
    data = {
        "rows": [
            {
                **row.model_dump(exclude={"top_changes"}),
                "top_changes": [{"token": t, "count": c} for t, c in row.top_changes],
            }
            for row in report.rows
        ],
        "avg": report.avg.model_dump(),
    }
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def corpus_report(
    pairs: Iterable[Tuple[str, str, str]],
    include_headings: bool = True,
    k: int = 3,
    fmt: Literal["markdown", "json"] = "markdown",
) -> str:
    report = build_corpus_report(pairs, include_headings=include_headings, k=k)
    if fmt == "json":
        return render_report_json(report)
    return render_report_markdown(report)
