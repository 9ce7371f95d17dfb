import logging
import re
import tempfile
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Deque, Dict, Iterable, List, Optional

from .audio import ensure_recognizer_format
from .backends import SpeechBackend
from .cache import SegmentCache
from .config import DEFAULT_PREAMBLE, BackendConfig
from .exceptions import AudioError, AuthFailed, RecognitionFailed, TransientBackendError
from .models import (
    Deck,
    PcmClip,
    PhraseHints,
    SegmentSource,
    Slide,
    TranscoderSpec,
    TranscriptDoc,
    TranscriptSegment,
)

logger = logging.getLogger(__name__)

# Leading/trailing characters that are not letters or digits.
_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")
MIN_HINT_LENGTH = 2


def hints_from_texts(texts: Iterable[str], cap: int = 500) -> PhraseHints:
    """
    Tokenize on whitespace, trim punctuation at both ends (interior hyphens and periods
    stay, so "re-ranking," -> "re-ranking"), drop tokens shorter than two characters,
    keep the first occurrence of each token, stop at `cap`.
    """
    words: List[str] = []
    seen = set()
    for text in texts:
        for raw in text.split():
            if len(words) >= cap:
                return PhraseHints(words=tuple(words), cap=cap)
            token = _EDGE_PUNCT.sub("", raw)
            if len(token) < MIN_HINT_LENGTH or token in seen:
                continue
            seen.add(token)
            words.append(token)
    return PhraseHints(words=tuple(words), cap=cap)


def mine_hints(slides: Iterable[Slide], cap: int = 500) -> PhraseHints:
    """Deck-wide phrase hints from every slide's title and body text."""
    return hints_from_texts((f"{s.title} {s.body_text}" for s in slides), cap=cap)


class RateLimiter:
    """
    Rolling-window request cap: at most `limit` acquisitions in any `window` seconds.
    Thread-safe; `clock` and `sleep` are injectable for tests.
    """

    _shared: Dict[int, "RateLimiter"] = {}
    _shared_lock = threading.Lock()

    def __init__(
        self,
        limit: int,
        window: float = 60.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if limit < 1:
            raise ValueError("rate limit must be at least 1")
        self.limit = limit
        self.window = window
        self._clock = clock
        self._sleep = sleep
        self._stamps: Deque[float] = deque()
        self._lock = threading.Lock()

    @classmethod
    def shared(cls, limit: int) -> "RateLimiter":
        with cls._shared_lock:
            if limit not in cls._shared:
                cls._shared[limit] = cls(limit)
            return cls._shared[limit]

    def acquire(self) -> float:
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= self.window:
                    self._stamps.popleft()
                if len(self._stamps) < self.limit:
                    self._stamps.append(now)
                    return now
                wait = self._stamps[0] + self.window - now
            self._sleep(max(wait, 0.001))


@dataclass
class TranscriptionStats:
    backend_calls: int = 0
    cache_hits: int = 0
    failures: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, backend_calls: int = 0, cache_hits: int = 0, failures: int = 0) -> None:
        with self._lock:
            self.backend_calls += backend_calls
            self.cache_hits += cache_hits
            self.failures += failures


def recognize(
    clip: PcmClip,
    hints: PhraseHints,
    config: BackendConfig,
    backend: SpeechBackend,
    limiter: Optional[RateLimiter] = None,
    sleep: Callable[[float], None] = time.sleep,
    attempts: Optional[List[int]] = None,
) -> str:
    """
    Recognize one clip, retrying transient failures with exponential backoff.

    Args:
        clip: Audio in the recognizer profile. A zero-length clip returns "" without a request.
        hints: Phrase hints sent with the request.
        config: Language, retry and rate settings.
        backend: The speech backend.
        limiter: Shared rate limiter; defaults to a process-wide one for the configured rate.
        sleep: Used for backoff waits.
        attempts: If given, each attempt number is appended to it.

    Raises:
        AuthFailed: The credential was rejected. Never retried.
        RecognitionFailed: Permanent failure, or 1 + max_retries attempts all failed.
    """
    if clip.duration_ms == 0:
        return ""
    limiter = limiter or RateLimiter.shared(config.requests_per_minute)

    last_error: Optional[Exception] = None
    total = config.max_retries + 1
    for attempt in range(1, total + 1):
        limiter.acquire()
        if attempts is not None:
            attempts.append(attempt)
        try:
            return backend.recognize(clip, hints, config.language)
        except AuthFailed:
            raise
        except RecognitionFailed as e:
            raise RecognitionFailed(e.diagnostics, attempts=attempt) from e
        except TransientBackendError as e:
            last_error = e
            if attempt == total:
                break
            delay = min(config.backoff_max, config.backoff_base * 2 ** (attempt - 1))
            logger.warning("Attempt %d failed (%s). Retrying in %.1f s...", attempt, e, delay)
            sleep(delay)

    raise RecognitionFailed(str(last_error), attempts=total)


def transcribe_deck(
    deck: Deck,
    config: BackendConfig,
    backend: SpeechBackend,
    transcoder: Optional[TranscoderSpec] = None,
    cache: Optional[SegmentCache] = None,
    workdir: Optional[Path] = None,
    preamble: str = DEFAULT_PREAMBLE,
    stats: Optional[TranscriptionStats] = None,
    limiter: Optional[RateLimiter] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> TranscriptDoc:
    """
    Transcribe every slide's narration into a TranscriptDoc in export order.

    Slides without narration become Empty segments. Per-slide failures (transcoding,
    recognition) become Failed segments and the run continues; only AuthFailed aborts.
    Cache hits, keyed by narration hash + language + hint-set hash, skip recognition.
    """
    hints = mine_hints(deck.slides, cap=config.hint_cap)
    hints_hash = hints.digest()
    limiter = limiter or RateLimiter(config.requests_per_minute)
    stats = stats if stats is not None else TranscriptionStats()
    logger.info("Transcribing %d slide(s) of %r with %d hint(s)", len(deck.slides), deck.title, len(hints.words))

    tmp = tempfile.TemporaryDirectory(prefix="slidescribe-") if workdir is None else nullcontext(str(workdir))
    with tmp as tmpdir:
        work_root = Path(tmpdir)

        def one(slide: Slide) -> TranscriptSegment:
            return _transcribe_slide(
                slide, hints, hints_hash, config, backend, transcoder, cache, work_root, stats, limiter, sleep
            )

        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = [pool.submit(one, slide) for slide in deck.slides]
            try:
                segments = [f.result() for f in futures]
            except AuthFailed:
                for f in futures:
                    f.cancel()
                raise

    return TranscriptDoc(lecture_title=deck.title, preamble=preamble, segments=tuple(segments))


def _transcribe_slide(
    slide: Slide,
    hints: PhraseHints,
    hints_hash: str,
    config: BackendConfig,
    backend: SpeechBackend,
    transcoder: Optional[TranscoderSpec],
    cache: Optional[SegmentCache],
    workdir: Path,
    stats: TranscriptionStats,
    limiter: RateLimiter,
    sleep: Callable[[float], None],
) -> TranscriptSegment:
    def segment(text: str = "", failure: Optional[str] = None) -> TranscriptSegment:
        if failure is not None:
            source = SegmentSource.FAILED
        elif text:
            source = SegmentSource.RECOGNIZED
        else:
            source = SegmentSource.EMPTY
        return TranscriptSegment(
            export_index=slide.export_index,
            title=slide.title,
            text=text if failure is None else "",
            duration_ms=slide.duration_ms,
            source=source,
            failure_reason=failure,
        )

    if slide.narration is None:
        return segment()

    key = SegmentCache.key(slide.narration.digest(), config.language, hints_hash)
    if cache is not None:
        cached = cache.get(key)
        if cached is not None:
            stats.add(cache_hits=1)
            logger.debug("Slide %d: cache hit", slide.export_index)
            return segment(cached)

    try:
        clip = ensure_recognizer_format(slide.narration, transcoder, workdir, tag=f"slide-{slide.export_index:03d}")
    except AudioError as e:
        logger.error("Slide %d: %s", slide.export_index, e)
        stats.add(failures=1)
        return segment(failure=f"{type(e).__name__}: {e}")

    if clip.duration_ms == 0:
        return segment()

    attempts: List[int] = []
    try:
        text = recognize(clip, hints, config, backend, limiter=limiter, sleep=sleep, attempts=attempts)
    except RecognitionFailed as e:
        logger.error("Slide %d: %s", slide.export_index, e)
        stats.add(backend_calls=len(attempts), failures=1)
        return segment(failure=e.diagnostics)
    stats.add(backend_calls=len(attempts))

    if cache is not None:
        cache.put(key, text)
    return segment(text)
