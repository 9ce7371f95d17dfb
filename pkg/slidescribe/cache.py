import json
import logging
import threading
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

logger = logging.getLogger(__name__)

CACHE_FILE = "segments.jsonl"

CacheKey = Tuple[str, str, str]


class SegmentCache:
    """
    Recognized text per narration, stored as JSON lines
    `{"hash", "language", "hints_hash", "text"}` in `<directory>/segments.jsonl`.

    Reads are lock-free lookups in memory; writes are serialized and appended to the
    file, the last record for a key wins on reload.
    """

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.path = self.directory / CACHE_FILE
        self._entries: Dict[CacheKey, str] = {}
        self._lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        if not self.path.is_file():
            return
        with open(self.path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    key = (rec["hash"], rec["language"], rec["hints_hash"])
                    self._entries[key] = rec["text"]
                except (ValueError, KeyError, TypeError):
                    logger.warning("Ignoring unreadable cache record %s:%d", self.path, lineno)

    @staticmethod
    def key(narration_hash: str, language: str, hints_hash: str) -> CacheKey:
        return (narration_hash, language, hints_hash)

    def get(self, key: CacheKey) -> Optional[str]:
        return self._entries.get(key)

    def put(self, key: CacheKey, text: str) -> None:
        record = {"hash": key[0], "language": key[1], "hints_hash": key[2], "text": text}
        with self._lock:
            if self._entries.get(key) == text:
                return
            self.directory.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8", newline="\n") as f:
                f.write(json.dumps(record, ensure_ascii=False) + "\n")
            self._entries[key] = text

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: object) -> bool:
        return key in self._entries
