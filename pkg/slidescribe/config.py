import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, Field, SecretStr, ValidationError, model_validator

from .exceptions import ConfigError
from .models import TranscoderSpec

DEFAULT_KEY_ENV = "SPEECH_API_KEY"
DEFAULT_PREAMBLE = "Automatic closed captions generated with a speech recognition service"


class BackendConfig(BaseModel):
    """Settings for talking to a speech recognition backend."""

    endpoint: str = ""
    api_key: Optional[SecretStr] = None
    language: str = "en-US"
    max_retries: int = Field(default=3, ge=0)
    requests_per_minute: int = Field(default=20, ge=1)
    concurrency: int = Field(default=2, ge=1)
    hint_cap: int = Field(default=500, ge=0)
    backoff_base: float = Field(default=1.0, ge=0)
    backoff_max: float = Field(default=30.0, ge=0)
    timeout_s: float = Field(default=60.0, gt=0)


class RunConfig(BaseModel):
    """
    Everything one CLI invocation needs. Built from defaults, then an optional
    key-value config file, then command-line flags (flags win).
    """

    input_path: Optional[Path] = None
    output_dir: Path = Path(".")
    language: str = "en-US"
    backend: Literal["rest", "mock"] = "rest"
    endpoint: str = ""
    mock_fixtures: Optional[Path] = None
    transcoder: Optional[str] = None
    transcoder_timeout: float = Field(default=300.0, gt=0)
    request_timeout: float = Field(default=60.0, gt=0)
    jobs: int = Field(default=2, ge=1)
    rate_limit: int = Field(default=20, ge=1)
    max_retries: int = Field(default=3, ge=0)
    hint_cap: int = Field(default=500, ge=0)
    fallback_duration: Optional[float] = Field(default=None, ge=0)
    cache_dir: Optional[Path] = None
    no_cues: bool = False
    key_env: str = DEFAULT_KEY_ENV
    preamble: str = DEFAULT_PREAMBLE
    top_k: int = Field(default=3, ge=0)
    body_only: bool = False
    format: Literal["markdown", "json"] = "markdown"

    @model_validator(mode="after")
    def _transcoder_template(self) -> "RunConfig":
        if self.transcoder is not None:
            TranscoderSpec(command_template=self.transcoder, timeout_s=self.transcoder_timeout)
        return self

    @property
    def transcoder_spec(self) -> Optional[TranscoderSpec]:
        if not self.transcoder:
            return None
        return TranscoderSpec(command_template=self.transcoder, timeout_s=self.transcoder_timeout)

    @property
    def fallback_duration_ms(self) -> Optional[int]:
        if self.fallback_duration is None:
            return None
        return int(round(self.fallback_duration * 1000))

    def deck_output_dir(self) -> Path:
        """Per-lecture output directory, named after the input file's stem."""
        if self.input_path is None:
            raise ConfigError("No input file given.")
        return self.output_dir / self.input_path.stem

    def resolved_cache_dir(self) -> Path:
        return self.cache_dir if self.cache_dir is not None else self.output_dir / ".slidescribe-cache"

    def backend_config(self) -> BackendConfig:
        key = os.environ.get(self.key_env)
        return BackendConfig(
            endpoint=self.endpoint,
            api_key=SecretStr(key) if key else None,
            language=self.language,
            max_retries=self.max_retries,
            requests_per_minute=self.rate_limit,
            concurrency=self.jobs,
            hint_cap=self.hint_cap,
            timeout_s=self.request_timeout,
        )


def read_config_file(path: Path) -> Dict[str, Any]:
    """
    Read a key-value config file (dotenv syntax, one `key=value` per line, `#` comments).
    Keys are RunConfig field names; case and `-`/`_` are not significant.
    """
    if not Path(path).is_file():
        raise ConfigError(f"Config file not found: {path}")
    values: Dict[str, Any] = {}
    for raw_key, value in dotenv_values(path).items():
        key = raw_key.strip().lower().replace("-", "_")
        if key not in RunConfig.model_fields:
            raise ConfigError(f"{path}: unknown setting {raw_key!r}")
        if value is None or value == "":
            continue
        values[key] = value
    return values


def load_config(config_file: Optional[Path] = None, **overrides: Any) -> RunConfig:
    """Merge defaults, an optional config file and explicit overrides (None means unset)."""
    values: Dict[str, Any] = {}
    if config_file is not None:
        values.update(read_config_file(config_file))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration:\n{e}") from e
