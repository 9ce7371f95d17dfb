import io
import json
import logging
import threading
import wave
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Union

import requests

from .exceptions import AuthFailed, ConfigError, RecognitionFailed, TransientBackendError
from .models import PcmClip, PhraseHints

logger = logging.getLogger(__name__)

# Recognition statuses that mean "no speech" rather than an error.
SILENT_STATUSES = {"NoMatch", "InitialSilenceTimeout", "BabbleTimeout"}
RETRYABLE_HTTP = {408, 429, 500, 502, 503, 504}


class SpeechBackend(Protocol):
    """
    One short-audio recognition request per call.

    Implementations raise AuthFailed for rejected credentials,
    TransientBackendError for failures worth retrying, and RecognitionFailed for
    anything permanent.
    """

    def recognize(self, clip: PcmClip, hints: PhraseHints, language: str) -> str:
        ...


def wav_body(clip: PcmClip) -> bytes:
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(clip.channels)
        w.setsampwidth(clip.bits_per_sample // 8)
        w.setframerate(clip.sample_rate)
        w.writeframes(clip.samples)
    return buf.getvalue()


class RestSpeechBackend:
    """
    Generic REST short-audio client.

    POST <endpoint>?language=<tag>&format=simple with the WAV file as body, the key
    in `Ocp-Apim-Subscription-Key` and the phrase hints as a JSON array in
    `X-Phrase-Hints`. The response is `{"RecognitionStatus": ..., "DisplayText": ...}`.
    """

    def __init__(self, endpoint: str, api_key: str, timeout_s: float = 60.0, session: Optional[requests.Session] = None):
        if not endpoint:
            raise ConfigError("The REST backend needs an endpoint URL.")
        if not api_key:
            raise ConfigError("The REST backend needs an API key in the environment.")
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self.session = session or requests.Session()
        self._api_key = api_key

    def recognize(self, clip: PcmClip, hints: PhraseHints, language: str) -> str:
        headers = {
            "Ocp-Apim-Subscription-Key": self._api_key,
            "Content-Type": f"audio/wav; codecs=audio/pcm; samplerate={clip.sample_rate}",
            "Accept": "application/json",
        }
        if hints.words:
            headers["X-Phrase-Hints"] = json.dumps(list(hints.words), ensure_ascii=True)
        logger.debug("POST %s (%d ms of audio, %d hints)", self.endpoint, clip.duration_ms, len(hints.words))
        try:
            response = self.session.post(
                self.endpoint,
                params={"language": language, "format": "simple"},
                headers=headers,
                data=wav_body(clip),
                timeout=self.timeout_s,
            )
        except (requests.ConnectionError, requests.Timeout) as e:
            raise TransientBackendError(f"{type(e).__name__}: {e}") from e
        except requests.RequestException as e:
            raise RecognitionFailed(f"{type(e).__name__}: {e}") from e

        status = response.status_code
        if status in (401, 403):
            raise AuthFailed(f"Speech service answered HTTP {status}.")
        if status in RETRYABLE_HTTP:
            raise TransientBackendError(f"HTTP {status}: {response.text[:200]}")
        if status >= 400:
            raise RecognitionFailed(f"HTTP {status}: {response.text[:200]}")

        try:
            payload = response.json()
        except ValueError as e:
            raise RecognitionFailed(f"Response is not JSON: {response.text[:200]}") from e
        result = payload.get("RecognitionStatus")
        if result == "Success":
            return str(payload.get("DisplayText", ""))
        if result in SILENT_STATUSES:
            return ""
        raise RecognitionFailed(f"RecognitionStatus {result!r}")


FixtureValue = Union[str, Dict[str, str]]


def load_fixture_table(path: Union[str, Path]) -> Dict[str, FixtureValue]:
    """
    Load a mock transcript table from .json (object of hash -> text, or a list of
    {hash, text} records) or .jsonl (one {hash, text} record per line). A value of
    {"error": "..."} scripts a permanent failure for that clip.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Mock fixture file not found: {path}")
    records: List[dict] = []
    with open(path, "r", encoding="utf-8") as f:
        if path.suffix.lower() == ".jsonl":
            for line in f:
                line = line.strip()
                if not line:
                    continue
                records.append(json.loads(line))
        else:
            data = json.load(f)
            if isinstance(data, dict):
                return {str(k): v for k, v in data.items()}
            if not isinstance(data, list):
                raise ConfigError("Unsupported mock fixture format; expected object, list, or JSONL")
            records = data
    table: Dict[str, FixtureValue] = {}
    for rec in records:
        if "error" in rec:
            table[str(rec["hash"])] = {"error": str(rec["error"])}
        else:
            table[str(rec["hash"])] = str(rec.get("text", ""))
    return table


class MockSpeechBackend:
    """
    Deterministic backend: looks the clip's content hash up in a fixture table.
    Safe for concurrent calls; `calls` counts every request it served.
    """

    def __init__(self, table: Optional[Dict[str, FixtureValue]] = None, default_text: Optional[str] = None):
        self.table = dict(table or {})
        self.default_text = default_text
        self.calls = 0
        self.requests: List[str] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Union[str, Path], default_text: Optional[str] = None) -> "MockSpeechBackend":
        return cls(load_fixture_table(path), default_text=default_text)

    def recognize(self, clip: PcmClip, hints: PhraseHints, language: str) -> str:
        key = clip.digest()
        with self._lock:
            self.calls += 1
            self.requests.append(key)
        value = self.table.get(key)
        if value is None:
            if self.default_text is not None:
                return self.default_text
            raise RecognitionFailed(f"no mock transcript for clip {key[:12]}")
        if isinstance(value, dict):
            raise RecognitionFailed(value.get("error", "scripted failure"))
        return value
