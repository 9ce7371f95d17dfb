"""
Command-line interface.

    slidescribe inspect  lecture.pptx
    slidescribe pipeline lecture.pptx --backend mock --mock-fixtures mock.json
    slidescribe analyze  auto/ corrected/ --format json
    slidescribe captions corrected/lecture.md
    slidescribe diff     auto/lecture.md corrected/lecture.md

Exit codes: 0 success, 1 systemic error, 2 finished with per-item warnings.
"""
import argparse
import contextlib
import functools
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from .analyze import corpus_report, render_wdiff, tokenize, word_diff
from .audio import duration_oracle
from .backends import MockSpeechBackend, RestSpeechBackend, SpeechBackend
from .cache import SegmentCache
from .config import RunConfig, load_config
from .deck import open_deck
from .emit import (
    chapter_marks,
    format_timestamp,
    markdown_to_caption_text,
    render_chapters,
    render_cues,
    render_markdown,
)
from .exceptions import ConfigError, MissingDuration, SlidescribeError
from .models import Deck
from .transcribe import TranscriptionStats, transcribe_deck

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNINGS = 2

TRANSCRIPT_FILE = "transcript.md"
CHAPTERS_FILE = "chapters.txt"
CUES_FILE = "cues.vtt"
CAPTIONS_FILE = "captions.txt"


def _exit_on_error(func: Callable[..., int]) -> Callable[..., int]:
    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            return func(*args, **kwargs)
        except (SlidescribeError, OSError, UnicodeDecodeError) as e:
            print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
            return EXIT_ERROR

    return wrapper


def write_atomic(path: Path, text: str) -> None:
    """Write UTF-8/LF text via a temp file in the same directory and a rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def make_backend(config: RunConfig) -> SpeechBackend:
    if config.backend == "mock":
        if config.mock_fixtures is None:
            raise ConfigError("--backend mock needs --mock-fixtures.")
        return MockSpeechBackend.from_file(config.mock_fixtures)
    settings = config.backend_config()
    if settings.api_key is None:
        raise ConfigError(f"Set the API key in the {config.key_env} environment variable.")
    return RestSpeechBackend(settings.endpoint, settings.api_key.get_secret_value(), timeout_s=settings.timeout_s)


def _require_input(config: RunConfig) -> Path:
    if config.input_path is None:
        raise ConfigError("No input presentation given.")
    return config.input_path


def format_deck_summary(deck: Deck) -> str:
    width = max([len(s.title) for s in deck.slides] + [5])
    width = min(width, 48)
    lines = [f"{deck.title} ({len(deck.slides)} slides)", ""]
    lines.append(f"{'#':>3}  {'Title':<{width}}  {'Narration':<9}  Duration")
    for s in deck.slides:
        title = s.title if len(s.title) <= width else s.title[: width - 1] + "…"
        if s.duration_ms is None:
            duration = "—"
        else:
            duration = f"{s.duration_ms / 1000:.1f} s ({s.duration_source.value})"
        narration = "yes" if s.narration is not None else "no"
        lines.append(f"{s.export_index:>3}  {title:<{width}}  {narration:<9}  {duration}")
    lines.append("")
    lines.append(f"Total duration: {format_timestamp(deck.total_duration_ms)}")
    return "\n".join(lines)


@_exit_on_error
def cmd_inspect(config: RunConfig) -> int:
    """Print the per-slide table; exit 2 when any slide lacks a duration."""
    path = _require_input(config)
    with tempfile.TemporaryDirectory(prefix="slidescribe-") as tmp:
        deck = open_deck(path, audio_decoder=duration_oracle(config.transcoder_spec, Path(tmp)))
    print(format_deck_summary(deck))

    warnings = list(deck.warnings)
    missing = [s.export_index for s in deck.slides if s.duration_ms is None]
    warnings += [f"slide {i} has no duration (no advance time, no decodable narration)" for i in missing]
    if warnings:
        print("\nWarnings:")
        for w in warnings:
            print(f"  - {w}")
    return EXIT_WARNINGS if missing else EXIT_OK


@_exit_on_error
def cmd_pipeline(
    config: RunConfig,
    backend: Optional[SpeechBackend] = None,
    stats: Optional[TranscriptionStats] = None,
) -> int:
    """
    open_deck -> transcribe_deck -> transcript.md, captions.txt, chapters.txt and cues.vtt
    under <output_dir>/<input stem>/. Exit 2 when a segment failed or durations are missing.
    """
    path = _require_input(config)
    stats = stats if stats is not None else TranscriptionStats()
    transcoder = config.transcoder_spec

    with tempfile.TemporaryDirectory(prefix="slidescribe-") as tmp:
        workdir = Path(tmp)
        deck = open_deck(path, audio_decoder=duration_oracle(transcoder, workdir))
        backend = backend or make_backend(config)
        doc = transcribe_deck(
            deck,
            config.backend_config(),
            backend,
            transcoder=transcoder,
            cache=SegmentCache(config.resolved_cache_dir()),
            workdir=workdir,
            preamble=config.preamble,
            stats=stats,
        )

    out_dir = config.deck_output_dir()
    written: List[Path] = []
    exit_code = EXIT_OK

    write_atomic(out_dir / TRANSCRIPT_FILE, render_markdown(doc))
    written.append(out_dir / TRANSCRIPT_FILE)
    captions = markdown_to_caption_text(render_markdown(doc))
    write_atomic(out_dir / CAPTIONS_FILE, captions + "\n" if captions else "")
    written.append(out_dir / CAPTIONS_FILE)

    try:
        chapters = chapter_marks(doc, config.fallback_duration_ms)
        cues = None if config.no_cues else render_cues(doc, config.fallback_duration_ms)
    except MissingDuration as e:
        logger.error("%s Skipping %s and %s.", e, CHAPTERS_FILE, CUES_FILE)
        exit_code = EXIT_WARNINGS
    else:
        write_atomic(out_dir / CHAPTERS_FILE, render_chapters(chapters))
        written.append(out_dir / CHAPTERS_FILE)
        if cues is not None:
            write_atomic(out_dir / CUES_FILE, cues)
            written.append(out_dir / CUES_FILE)

    failed = doc.failed_count
    if failed:
        exit_code = EXIT_WARNINGS
    total_ms = sum(s.duration_ms or 0 for s in doc.segments)
    print(f"{doc.lecture_title}: {len(doc.segments)} slides, total duration {format_timestamp(total_ms)}")
    print(
        f"Segments failed: {failed}; backend calls: {stats.backend_calls}; cache hits: {stats.cache_hits}"
    )
    for p in written:
        print(f"  wrote {p}")
    return exit_code


def _pair_directories(auto_dir: Path, corrected_dir: Path) -> Tuple[List[Tuple[str, Path, Path]], List[Path]]:
    auto = {p.name: p for p in sorted(auto_dir.glob("*.md"))}
    corrected = {p.name: p for p in sorted(corrected_dir.glob("*.md"))}
    orphans = [auto[n] for n in sorted(set(auto) - set(corrected))]
    orphans += [corrected[n] for n in sorted(set(corrected) - set(auto))]
    pairs = [(Path(n).stem, auto[n], corrected[n]) for n in sorted(set(auto) & set(corrected))]
    return pairs, orphans


@_exit_on_error
def cmd_analyze(
    config: RunConfig,
    auto: Optional[Path] = None,
    corrected: Optional[Path] = None,
    pairs: Sequence[Tuple[Path, Path]] = (),
    out: Optional[Path] = None,
) -> int:
    """Word-diff report over paired automatic/corrected transcripts."""
    jobs: List[Tuple[str, Path, Path]] = []
    if (auto is None) != (corrected is None):
        raise ConfigError("Give both an automatic and a corrected path.")
    if auto is not None and corrected is not None:
        if auto.is_dir() and corrected.is_dir():
            matched, orphans = _pair_directories(auto, corrected)
            if orphans:
                print("error: unmatched transcript files:", file=sys.stderr)
                for p in orphans:
                    print(f"  {p}", file=sys.stderr)
                return EXIT_ERROR
            jobs.extend(matched)
        elif auto.is_file() and corrected.is_file():
            jobs.append((auto.stem, auto, corrected))
        else:
            raise ConfigError(f"{auto} and {corrected} must both be files or both be directories.")
    for a, c in pairs:
        jobs.append((Path(a).stem, Path(a), Path(c)))
    if not jobs:
        raise ConfigError("Nothing to analyze.")

    missing = [p for _, a, c in jobs for p in (a, c) if not p.is_file()]
    if missing:
        raise ConfigError("Missing transcript file(s): " + ", ".join(str(p) for p in missing))

    texts = [(lid, a.read_text(encoding="utf-8"), c.read_text(encoding="utf-8")) for lid, a, c in jobs]
    report = corpus_report(texts, include_headings=not config.body_only, k=config.top_k, fmt=config.format)
    if out is not None:
        write_atomic(out, report)
    else:
        sys.stdout.write(report)
    return EXIT_OK


@_exit_on_error
def cmd_captions(config: RunConfig, transcript: Path, out: Optional[Path] = None) -> int:
    """Plain caption text from a (corrected) Markdown transcript."""
    text = markdown_to_caption_text(Path(transcript).read_text(encoding="utf-8"))
    if out is None:
        directory = config.output_dir if "output_dir" in config.model_fields_set else Path(transcript).parent
        out = directory / CAPTIONS_FILE
    write_atomic(out, text + "\n" if text else "")
    print(f"wrote {out}")
    return EXIT_OK


@_exit_on_error
def cmd_diff(config: RunConfig, auto: Path, corrected: Path, out: Optional[Path] = None) -> int:
    auto_text = Path(auto).read_text(encoding="utf-8")
    corrected_text = Path(corrected).read_text(encoding="utf-8")
    if config.body_only:
        auto_text = markdown_to_caption_text(auto_text)
        corrected_text = markdown_to_caption_text(corrected_text)
    a, c = tokenize(auto_text), tokenize(corrected_text)
    diff = word_diff(a, c)
    total = len(a)
    pct = 100.0 if total == 0 else 100.0 * diff.unchanged / total
    text = f"{render_wdiff(a, c)}\n\nunchanged {diff.unchanged}/{total} ({pct:.1f}%)\n"
    if out is not None:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Key-value config file (key=value per line)")
    common.add_argument("--output-dir", type=Path, default=None, help="Where outputs are written")
    common.add_argument("--language", default=None, help="BCP-47 recognition language (default en-US)")
    common.add_argument("--backend", choices=["rest", "mock"], default=None, help="Speech backend (default rest)")
    common.add_argument("--endpoint", default=None, help="REST recognition endpoint URL")
    common.add_argument("--mock-fixtures", type=Path, default=None, help="Mock backend fixture table (.json/.jsonl)")
    common.add_argument("--transcoder", default=None, help="Command template with {input} and {output}")
    common.add_argument("--transcoder-timeout", type=float, default=None, help="Transcoder timeout in seconds")
    common.add_argument("--jobs", type=int, default=None, help="Concurrent recognition calls (default 2)")
    common.add_argument("--rate-limit", type=int, default=None, help="Backend requests per minute (default 20)")
    common.add_argument("--max-retries", type=int, default=None, help="Retries for transient failures (default 3)")
    common.add_argument("--hint-cap", type=int, default=None, help="Maximum phrase hints (default 500)")
    common.add_argument("--fallback-duration", type=float, default=None, help="Seconds for slides without a duration")
    common.add_argument("--cache-dir", type=Path, default=None, help="Segment cache directory")
    common.add_argument("--no-cues", action="store_true", default=None, help="Do not write cues.vtt")
    common.add_argument("--key-env", default=None, help="Environment variable holding the API key")
    common.add_argument("--request-timeout", type=float, default=None, help="Seconds per recognition request (default 60)")
    common.add_argument("--preamble", default=None, help="Italic line under the transcript title")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="Only log errors")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="slidescribe", description="Transcripts, chapters and captions from narrated slide decks")
    sub = parser.add_subparsers(dest="command", required=True)

    inspect = sub.add_parser("inspect", parents=[common], help="List slides, narration and durations")
    inspect.add_argument("input", type=Path)

    pipeline = sub.add_parser("pipeline", parents=[common], help="Transcribe a deck and write all outputs")
    pipeline.add_argument("input", type=Path)

    analyze = sub.add_parser("analyze", parents=[common], help="Word-diff report for corrected transcripts")
    analyze.add_argument("auto", type=Path, nargs="?", help="Automatic transcript file or directory")
    analyze.add_argument("corrected", type=Path, nargs="?", help="Corrected transcript file or directory")
    analyze.add_argument("--pair", nargs=2, action="append", type=Path, default=[], metavar=("AUTO", "CORRECTED"))
    analyze.add_argument("--top-k", type=int, default=None, help="Changed words per lecture (default 3)")
    analyze.add_argument("--body-only", action="store_true", default=None, help="Diff narration text only")
    analyze.add_argument("--format", choices=["markdown", "json"], default=None)
    analyze.add_argument("--out", type=Path, default=None)

    captions = sub.add_parser("captions", parents=[common], help="Caption text from a transcript")
    captions.add_argument("transcript", type=Path)
    captions.add_argument("--out", type=Path, default=None)

    diff = sub.add_parser("diff", parents=[common], help="Inline word diff of two transcripts")
    diff.add_argument("auto", type=Path)
    diff.add_argument("corrected", type=Path)
    diff.add_argument("--body-only", action="store_true", default=None)
    diff.add_argument("--out", type=Path, default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name, None) for name in RunConfig.model_fields}
    overrides["input_path"] = getattr(args, "input", None)
    return load_config(args.config, **overrides)


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)

    try:
        config = config_from_args(args)
    except SlidescribeError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR

    if args.command == "inspect":
        return cmd_inspect(config)
    if args.command == "pipeline":
        return cmd_pipeline(config)
    if args.command == "analyze":
        return cmd_analyze(config, args.auto, args.corrected, pairs=args.pair, out=args.out)
    if args.command == "captions":
        return cmd_captions(config, args.transcript, out=args.out)
    if args.command == "diff":
        return cmd_diff(config, args.auto, args.corrected, out=args.out)
    raise SystemExit(f"Unknown command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
