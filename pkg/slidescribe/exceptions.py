from typing import Optional


class SlidescribeError(Exception):
    """Base class for every error raised by slidescribe."""

    def __init__(self, message: str = "slidescribe failed."):
        self.message = message
        super().__init__(self.message)


class ConfigError(SlidescribeError):
    """Raised when the run configuration is invalid or incomplete."""


# --- deck ---


class DeckError(SlidescribeError):
    pass


class NotAnArchive(DeckError):
    """Raised when the input file is not a ZIP container."""

    def __init__(self, message: str = "Input is not a ZIP container."):
        super().__init__(message)


class NotAPresentation(DeckError):
    """
    Raised when the archive lacks the content-types manifest or the presentation part.
    """

    def __init__(self, message: str = "Archive does not contain a presentation."):
        super().__init__(message)


class MalformedPart(DeckError):
    """Raised when a required part of the container cannot be parsed or resolved."""

    def __init__(self, part: str, detail: str = "could not be parsed"):
        self.part = part
        self.detail = detail
        super().__init__(f"{part}: {detail}")


# --- audio ---


class AudioError(SlidescribeError):
    pass


class WavError(AudioError):
    pass


class NotRiff(WavError):
    def __init__(self, message: str = "Missing RIFF/WAVE magic."):
        super().__init__(message)


class UnsupportedEncoding(WavError):
    def __init__(self, message: str = "Only 8/16-bit mono or stereo integer PCM is supported."):
        super().__init__(message)


class TruncatedChunk(WavError):
    def __init__(self, message: str = "Declared chunk length exceeds remaining bytes."):
        super().__init__(message)


class TranscoderRequired(AudioError):
    """Raised when narration needs transcoding but no transcoder command is configured."""

    def __init__(self, content_type: str = "unknown"):
        self.content_type = content_type
        super().__init__(f"Narration of type {content_type!r} needs a transcoder; configure --transcoder.")


class TranscoderFailed(AudioError):
    """Raised when the transcoder exits nonzero or writes unusable output."""

    def __init__(self, command: str, returncode: Optional[int] = None, stderr: str = "", detail: str = ""):
        self.command = command
        self.returncode = returncode
        self.stderr = stderr
        reason = detail or f"exit code {returncode}"
        tail = stderr.strip().splitlines()[-1] if stderr.strip() else ""
        message = f"Transcoder failed ({reason}): {command}"
        if tail:
            message += f"\n{tail}"
        super().__init__(message)


# --- transcribe ---


class RecognitionError(SlidescribeError):
    pass


class AuthFailed(RecognitionError):
    """Raised when the speech service rejects the credential. Never retried."""

    def __init__(self, message: str = "Speech service rejected the API key."):
        super().__init__(message)


class TransientBackendError(RecognitionError):
    """Raised by a backend for failures worth retrying (throttling, 5xx, network)."""


class RecognitionFailed(RecognitionError):
    """
    Raised when recognition fails permanently or retries are exhausted.
    Carries the diagnostics of the last response.
    """

    def __init__(self, diagnostics: str = "recognition failed", attempts: int = 1):
        self.diagnostics = diagnostics
        self.attempts = attempts
        super().__init__(f"Recognition failed after {attempts} attempt(s): {diagnostics}")


# --- emit ---


class EmitError(SlidescribeError):
    pass


class MissingDuration(EmitError):
    def __init__(self, export_index: int):
        self.export_index = export_index
        super().__init__(
            f"Slide {export_index} has no duration; pass a fallback duration to emit timed output."
        )


class NotTranscriptLayout(EmitError):
    """Raised when Markdown input does not follow the transcript layout."""

    def __init__(self, line_number: int, line: str, reason: str = "unexpected line"):
        self.line_number = line_number
        self.line = line
        super().__init__(f"line {line_number}: {reason}: {line!r}")
