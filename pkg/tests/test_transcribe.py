import random
import threading
import time

import pytest

from slidescribe.audio import parse_wav
from slidescribe.backends import MockSpeechBackend
from slidescribe.cache import SegmentCache
from slidescribe.config import BackendConfig
from slidescribe.deck import open_deck
from slidescribe.exceptions import AuthFailed, RecognitionFailed, TransientBackendError
from slidescribe.models import PcmClip, PhraseHints, SegmentSource, Slide
from slidescribe.transcribe import RateLimiter, hints_from_texts, mine_hints, recognize, transcribe_deck

FAST = BackendConfig(requests_per_minute=10_000, backoff_base=0.0)


class VirtualClock:
    def __init__(self):
        self.now = 0.0
        self._lock = threading.Lock()

    def time(self) -> float:
        with self._lock:
            return self.now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.now += seconds


class FlakyBackend:
    """Fails with a transient error `failures` times, then answers."""

    def __init__(self, failures: int, text: str = "recovered"):
        self.failures = failures
        self.text = text
        self.calls = 0

    def recognize(self, clip, hints, language):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransientBackendError(f"HTTP 503 on call {self.calls}")
        return self.text


class RejectingBackend:
    def __init__(self):
        self.calls = 0

    def recognize(self, clip, hints, language):
        self.calls += 1
        raise AuthFailed()


def clip_of(make_wav, ms: int = 200, seed: int = 0) -> PcmClip:
    return parse_wav(make_wav(ms, seed=seed))


def mock_for(slides, texts) -> MockSpeechBackend:
    return MockSpeechBackend({parse_wav(s["narration"]).digest(): t for s, t in zip(slides, texts)})


def test_hint_dedup():
    assert hints_from_texts(["BM25 ranking BM25"]).words == ("BM25", "ranking")


def test_hint_punctuation_trim():
    assert hints_from_texts(["re-ranking, nDCG."]).words == ("re-ranking", "nDCG")


def test_hints_from_empty_text():
    assert hints_from_texts([""]).words == ()


def test_hints_drop_short_tokens_and_cap():
    hints = hints_from_texts(["a I of Word2Vec (BERT) x1 y2 z3"], cap=3)
    assert hints.words == ("of", "Word2Vec", "BERT")
    assert hints.cap == 3


def test_hint_mining_is_idempotent():
    slides = [
        Slide(export_index=1, source_number=1, title="Dense Retrieval", body_text="BERT, re-ranking; (nDCG@10)."),
        Slide(export_index=2, source_number=2, title="BM25", body_text="BM25 - term-frequency x"),
    ]
    once = mine_hints(slides)
    assert mine_hints([Slide(export_index=1, source_number=1, body_text=" ".join(once.words))]) == once


def test_hints_digest_depends_on_order():
    assert PhraseHints(words=("a1", "b2")).digest() != PhraseHints(words=("b2", "a1")).digest()


def test_recognize_uses_mock_table(make_wav):
    clip = clip_of(make_wav)
    backend = MockSpeechBackend({clip.digest(): "Hello and welcome to this course."})
    assert recognize(clip, PhraseHints(), FAST, backend) == "Hello and welcome to this course."


def test_zero_length_clip_skips_backend(make_wav):
    backend = MockSpeechBackend()
    assert recognize(parse_wav(make_wav(data_bytes=0)), PhraseHints(), FAST, backend) == ""
    assert backend.calls == 0


def test_retries_with_exponential_backoff(make_wav):
    backend = FlakyBackend(failures=2)
    attempts, sleeps = [], []
    config = BackendConfig(max_retries=3, backoff_base=1.0, requests_per_minute=10_000)

    text = recognize(clip_of(make_wav), PhraseHints(), config, backend, sleep=sleeps.append, attempts=attempts)

    assert text == "recovered"
    assert attempts == [1, 2, 3]
    assert sleeps == [1.0, 2.0]


def test_backoff_is_capped(make_wav):
    sleeps = []
    config = BackendConfig(max_retries=5, backoff_base=4.0, backoff_max=10.0, requests_per_minute=10_000)
    recognize(clip_of(make_wav), PhraseHints(), config, FlakyBackend(failures=5), sleep=sleeps.append)
    assert sleeps == [4.0, 8.0, 10.0, 10.0, 10.0]


def test_retries_exhausted(make_wav):
    backend = FlakyBackend(failures=10)
    config = BackendConfig(max_retries=2, backoff_base=0.0, requests_per_minute=10_000)

    with pytest.raises(RecognitionFailed) as excinfo:
        recognize(clip_of(make_wav), PhraseHints(), config, backend, sleep=lambda s: None)

    assert excinfo.value.attempts == 3
    assert "HTTP 503 on call 3" in excinfo.value.diagnostics
    assert backend.calls == 3


def test_auth_failure_is_not_retried(make_wav):
    backend = RejectingBackend()
    with pytest.raises(AuthFailed):
        recognize(clip_of(make_wav), PhraseHints(), FAST, backend, sleep=lambda s: None)
    assert backend.calls == 1


def test_rate_limiter_rolling_window():
    clock = VirtualClock()
    limiter = RateLimiter(5, clock=clock.time, sleep=clock.sleep)
    stamps = [limiter.acquire() for _ in range(12)]

    assert stamps[:5] == [0.0] * 5
    assert stamps[5] == pytest.approx(60.0)
    for t in stamps:
        assert sum(1 for u in stamps if t <= u < t + 60) <= 5


def test_deck_rate_cap_with_virtual_clock(make_deck, make_wav):
    slides = [{"title": f"S{i}", "narration": make_wav(100, seed=100 + i), "advance_ms": 1000} for i in range(12)]
    deck = open_deck(make_deck(slides))
    clock = VirtualClock()
    calls = []

    class ClockedBackend:
        def recognize(self, clip, hints, language):
            calls.append(clock.time())
            return "text"

    config = BackendConfig(requests_per_minute=5, concurrency=1)
    limiter = RateLimiter(5, clock=clock.time, sleep=clock.sleep)
    doc = transcribe_deck(deck, config, ClockedBackend(), limiter=limiter)

    assert len(calls) == 12
    assert all(s.source is SegmentSource.RECOGNIZED for s in doc.segments)
    for t in calls:
        assert sum(1 for u in calls if t <= u < t + 60) <= 5


def test_transcribe_deck_with_mock(make_deck, lecture_slides):
    deck = open_deck(make_deck(lecture_slides, title="Lecture 4"))
    backend = mock_for(lecture_slides, ["Hello and welcome.", "BM25 scores terms.", "nDCG discounts gains."])

    doc = transcribe_deck(deck, FAST, backend, preamble="Automatic captions")

    assert doc.lecture_title == "Lecture 4"
    assert doc.preamble == "Automatic captions"
    assert [s.text for s in doc.segments] == ["Hello and welcome.", "BM25 scores terms.", "nDCG discounts gains."]
    assert [s.duration_ms for s in doc.segments] == [30_000, 95_000, 61_000]
    assert all(s.source is SegmentSource.RECOGNIZED for s in doc.segments)
    assert backend.calls == 3


def test_hint_cap_zero_disables_hints(make_deck, lecture_slides):
    assert hints_from_texts(["BM25 ranking"], cap=0) == PhraseHints(words=(), cap=0)

    deck = open_deck(make_deck(lecture_slides))
    backend = mock_for(lecture_slides, ["one", "two", "three"])
    config = BackendConfig(requests_per_minute=10_000, backoff_base=0.0, hint_cap=0)

    doc = transcribe_deck(deck, config, backend)

    assert [s.text for s in doc.segments] == ["one", "two", "three"]


def test_slide_without_narration_is_empty(make_deck, lecture_slides):
    slides = [dict(s) for s in lecture_slides]
    del slides[1]["narration"]
    deck = open_deck(make_deck(slides))

    doc = transcribe_deck(deck, FAST, mock_for([slides[0], slides[2]], ["one", "three"]))

    assert [s.source for s in doc.segments] == [SegmentSource.RECOGNIZED, SegmentSource.EMPTY, SegmentSource.RECOGNIZED]
    assert doc.segments[1].text == ""


def test_silence_is_empty(make_deck, lecture_slides):
    deck = open_deck(make_deck(lecture_slides))
    doc = transcribe_deck(deck, FAST, MockSpeechBackend(default_text=""))
    assert all(s.source is SegmentSource.EMPTY for s in doc.segments)


@pytest.mark.parametrize("failing", [0, 1, 2])
def test_failure_is_isolated(make_deck, lecture_slides, failing):
    deck = open_deck(make_deck(lecture_slides))
    table = {parse_wav(s["narration"]).digest(): f"text {i}" for i, s in enumerate(lecture_slides)}
    table[parse_wav(lecture_slides[failing]["narration"]).digest()] = {"error": "RecognitionStatus 'Error'"}

    doc = transcribe_deck(deck, FAST, MockSpeechBackend(table))

    for i, seg in enumerate(doc.segments):
        if i == failing:
            assert seg.source is SegmentSource.FAILED
            assert "RecognitionStatus" in seg.failure_reason
            assert seg.text == ""
        else:
            assert seg.source is SegmentSource.RECOGNIZED
            assert seg.text == f"text {i}"
    assert doc.failed_count == 1


def test_untranscodable_narration_fails_only_that_slide(make_deck, lecture_slides):
    slides = [dict(s) for s in lecture_slides]
    slides[2] = {"title": "nDCG", "narration": b"aac bytes", "narration_ext": "m4a", "advance_ms": 61_000}
    deck = open_deck(make_deck(slides))

    doc = transcribe_deck(deck, FAST, MockSpeechBackend(default_text="ok"))

    assert [s.source for s in doc.segments[:2]] == [SegmentSource.RECOGNIZED] * 2
    assert doc.segments[2].source is SegmentSource.FAILED
    assert doc.segments[2].failure_reason.startswith("TranscoderRequired")


def test_auth_failure_aborts_the_deck(make_deck, lecture_slides):
    deck = open_deck(make_deck(lecture_slides))
    with pytest.raises(AuthFailed):
        transcribe_deck(deck, FAST, RejectingBackend())


def test_warm_cache_skips_backend(make_deck, lecture_slides, tmp_path):
    deck = open_deck(make_deck(lecture_slides))
    texts = ["one", "two", "three"]

    first_backend = mock_for(lecture_slides, texts)
    first = transcribe_deck(deck, FAST, first_backend, cache=SegmentCache(tmp_path / "cache"))
    second_backend = mock_for(lecture_slides, texts)
    second = transcribe_deck(deck, FAST, second_backend, cache=SegmentCache(tmp_path / "cache"))

    assert first == second
    assert first_backend.calls == 3
    assert second_backend.calls == 0


def test_cache_key_includes_language(make_deck, lecture_slides, tmp_path):
    deck = open_deck(make_deck(lecture_slides))
    cache = SegmentCache(tmp_path / "cache")
    transcribe_deck(deck, FAST, MockSpeechBackend(default_text="hallo"), cache=cache)

    backend = MockSpeechBackend(default_text="hello")
    doc = transcribe_deck(deck, FAST.model_copy(update={"language": "de-DE"}), backend, cache=cache)

    assert backend.calls == 3
    assert {s.text for s in doc.segments} == {"hello"}


def test_segment_order_survives_concurrency(make_deck, make_wav):
    slides = [{"title": f"S{i}", "narration": make_wav(50, seed=200 + i)} for i in range(16)]
    deck = open_deck(make_deck(slides))
    rng = random.Random(3)
    delays = {parse_wav(s["narration"]).digest(): rng.random() / 100 for s in slides}
    texts = {parse_wav(s["narration"]).digest(): f"slide {i + 1}" for i, s in enumerate(slides)}

    class SlowBackend:
        def recognize(self, clip, hints, language):
            time.sleep(delays[clip.digest()])
            return texts[clip.digest()]

    doc = transcribe_deck(deck, FAST.model_copy(update={"concurrency": 6}), SlowBackend())

    assert [s.text for s in doc.segments] == [f"slide {i}" for i in range(1, 17)]


def test_mock_is_deterministic(make_deck, lecture_slides):
    deck = open_deck(make_deck(lecture_slides))
    texts = ["a b", "c d", "e f"]
    first = transcribe_deck(deck, FAST, mock_for(lecture_slides, texts))
    second = transcribe_deck(deck, FAST, mock_for(lecture_slides, texts))
    assert first == second


def test_cache_file_survives_reload(tmp_path):
    cache = SegmentCache(tmp_path)
    key = SegmentCache.key("abc", "en-US", "hints")
    cache.put(key, "text")
    with open(tmp_path / "segments.jsonl", "a", encoding="utf-8") as f:
        f.write("not json\n")

    reloaded = SegmentCache(tmp_path)

    assert reloaded.get(key) == "text"
    assert len(reloaded) == 1
