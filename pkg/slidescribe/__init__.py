# Public API
from .analyze import corpus_report, diff_report, render_wdiff, tokenize, word_diff
from .audio import ensure_recognizer_format, parse_wav
from .deck import open_deck
from .emit import chapter_marks, markdown_to_caption_text, render_chapters, render_cues, render_markdown, render_srt
from .exceptions import SlidescribeError
from .transcribe import recognize, transcribe_deck

__all__ = [
    "open_deck",
    "parse_wav",
    "ensure_recognizer_format",
    "recognize",
    "transcribe_deck",
    "render_markdown",
    "chapter_marks",
    "render_chapters",
    "render_cues",
    "render_srt",
    "markdown_to_caption_text",
    "tokenize",
    "word_diff",
    "diff_report",
    "render_wdiff",
    "corpus_report",
    "SlidescribeError",
]
