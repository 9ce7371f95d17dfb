import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Recognizer input profile: mono, 16 kHz, 16-bit PCM WAV.
TARGET_SAMPLE_RATE = 16000
TARGET_CHANNELS = 1
TARGET_BITS_PER_SAMPLE = 16

FAILED_PLACEHOLDER = "[transcription failed]"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


# --- deck ---


class DurationSource(str, Enum):
    ADVANCE_TIME = "AdvanceTime"
    AUDIO_LENGTH = "AudioLength"
    NONE = "None"


class AudioRef(_Frozen):
    media_path: str
    content_type: str
    raw_bytes: bytes = Field(repr=False)

    @field_validator("raw_bytes")
    @classmethod
    def _nonempty(cls, v: bytes) -> bytes:
        if not v:
            raise ValueError("narration media is empty")
        return v

    def digest(self) -> str:
        return hashlib.sha256(self.raw_bytes).hexdigest()


class Slide(_Frozen):
    export_index: int = Field(ge=1)
    source_number: int = Field(ge=1)
    title: str = ""
    body_text: str = ""
    narration: Optional[AudioRef] = None
    duration_ms: Optional[int] = Field(default=None, ge=0)
    duration_source: DurationSource = DurationSource.NONE

    @field_validator("title")
    @classmethod
    def _single_line(cls, v: str) -> str:
        return " ".join(v.split())

    @model_validator(mode="after")
    def _duration_matches_source(self) -> "Slide":
        if (self.duration_ms is None) != (self.duration_source is DurationSource.NONE):
            raise ValueError("duration_ms must be present exactly when duration_source is not None")
        return self


class Deck(_Frozen):
    title: str
    slides: Tuple[Slide, ...] = ()
    source_path: Path
    warnings: Tuple[str, ...] = ()

    @model_validator(mode="after")
    def _consecutive(self) -> "Deck":
        for expected, slide in enumerate(self.slides, start=1):
            if slide.export_index != expected:
                raise ValueError(f"slide export_index {slide.export_index} out of sequence, expected {expected}")
        return self

    @property
    def total_duration_ms(self) -> int:
        return sum(s.duration_ms or 0 for s in self.slides)


# --- audio ---


class PcmClip(_Frozen):
    sample_rate: int = Field(gt=0)
    channels: int
    bits_per_sample: int
    samples: bytes = Field(repr=False)
    duration_ms: int = Field(ge=0)

    @field_validator("channels")
    @classmethod
    def _channels(cls, v: int) -> int:
        if v not in (1, 2):
            raise ValueError("channels must be 1 or 2")
        return v

    @field_validator("bits_per_sample")
    @classmethod
    def _bits(cls, v: int) -> int:
        if v not in (8, 16):
            raise ValueError("bits_per_sample must be 8 or 16")
        return v

    @property
    def is_recognizer_profile(self) -> bool:
        return (
            self.sample_rate == TARGET_SAMPLE_RATE
            and self.channels == TARGET_CHANNELS
            and self.bits_per_sample == TARGET_BITS_PER_SAMPLE
        )

    def digest(self) -> str:
        """Content hash over the PCM profile and samples."""
        h = hashlib.sha256(f"{self.sample_rate}/{self.channels}/{self.bits_per_sample}:".encode("ascii"))
        h.update(self.samples)
        return h.hexdigest()


class TranscoderSpec(_Frozen):
    """
    External command that converts narration into the recognizer profile.
    `command_template` must contain `{input}` and `{output}` exactly once each;
    both are shell-quoted on expansion.
    """

    command_template: str
    timeout_s: float = Field(default=300.0, gt=0)

    @field_validator("command_template")
    @classmethod
    def _placeholders(cls, v: str) -> str:
        for name in ("{input}", "{output}"):
            if v.count(name) != 1:
                raise ValueError(f"command template must contain {name} exactly once")
        return v


# --- transcribe ---


class PhraseHints(_Frozen):
    words: Tuple[str, ...] = ()
    cap: int = Field(default=500, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "PhraseHints":
        if len(set(self.words)) != len(self.words):
            raise ValueError("phrase hints must not repeat")
        if any(not w or any(c.isspace() for c in w) for w in self.words):
            raise ValueError("phrase hints must be nonempty and contain no whitespace")
        if len(self.words) > self.cap:
            raise ValueError(f"{len(self.words)} phrase hints exceed the cap of {self.cap}")
        return self

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(list(self.words)).encode("utf-8")).hexdigest()


class SegmentSource(str, Enum):
    RECOGNIZED = "Recognized"
    EMPTY = "Empty"
    FAILED = "Failed"


class TranscriptSegment(_Frozen):
    export_index: int = Field(ge=1)
    title: str = ""
    text: str = ""
    duration_ms: Optional[int] = Field(default=None, ge=0)
    source: SegmentSource = SegmentSource.RECOGNIZED
    failure_reason: Optional[str] = None

    @model_validator(mode="after")
    def _source_rules(self) -> "TranscriptSegment":
        if self.source is SegmentSource.EMPTY and self.text:
            raise ValueError("an Empty segment carries no text")
        if self.source is SegmentSource.FAILED and not self.failure_reason:
            raise ValueError("a Failed segment needs a reason")
        return self

    @property
    def heading_title(self) -> str:
        return self.title or f"Slide {self.export_index}"


class TranscriptDoc(_Frozen):
    lecture_title: str
    preamble: str = ""
    segments: Tuple[TranscriptSegment, ...] = ()

    @model_validator(mode="after")
    def _consecutive(self) -> "TranscriptDoc":
        for expected, seg in enumerate(self.segments, start=1):
            if seg.export_index != expected:
                raise ValueError(f"segment {seg.export_index} out of sequence, expected {expected}")
        return self

    @property
    def failed_count(self) -> int:
        return sum(1 for s in self.segments if s.source is SegmentSource.FAILED)


# --- emit ---


class ChapterMark(_Frozen):
    offset_ms: int = Field(ge=0)
    label: str

    @field_validator("label")
    @classmethod
    def _label(cls, v: str) -> str:
        if not v.strip() or "\n" in v or "\r" in v:
            raise ValueError("chapter label must be a nonempty single line")
        return v


class ChapterList(_Frozen):
    marks: Tuple[ChapterMark, ...] = ()
    warnings: Tuple[str, ...] = ()

    @model_validator(mode="after")
    def _ordered(self) -> "ChapterList":
        if self.marks and self.marks[0].offset_ms != 0:
            raise ValueError("the first chapter must start at 0")
        for prev, cur in zip(self.marks, self.marks[1:]):
            if cur.offset_ms <= prev.offset_ms:
                raise ValueError("chapter offsets must be strictly increasing")
        return self


# --- analyze ---


class DiffReport(_Frozen):
    lecture_id: str
    total_words: int = Field(ge=0)
    unchanged_words: int = Field(ge=0)
    changes: Tuple[Tuple[Tuple[str, ...], Tuple[str, ...]], ...] = ()
    top_changes: Tuple[Tuple[str, int], ...] = ()
    punctuation_only_changes: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _accounting(self) -> "DiffReport":
        if self.unchanged_words > self.total_words:
            raise ValueError("unchanged words exceed total words")
        deleted = sum(len(d) for d, _ in self.changes)
        if deleted != self.total_words - self.unchanged_words:
            raise ValueError("hunk deletions do not account for the changed words")
        return self

    @property
    def unchanged_ratio(self) -> float:
        if self.total_words == 0:
            return 1.0
        return self.unchanged_words / self.total_words
