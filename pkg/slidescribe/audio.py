"""
Narration audio: native RIFF/WAVE parsing and the external transcoder contract.

Only uncompressed integer PCM is decoded in-process. Anything else (AAC in MP4,
MP3, ...) goes through a user-configured command such as

    ffmpeg -y -loglevel error -i {input} -ac 1 -ar 16000 -sample_fmt s16 {output}
"""
import logging
import mimetypes
import shlex
import struct
import subprocess
import tempfile
from pathlib import Path
from typing import Callable, Optional

from .exceptions import (
    NotRiff,
    TranscoderFailed,
    TranscoderRequired,
    TruncatedChunk,
    UnsupportedEncoding,
    WavError,
)
from .models import (
    TARGET_BITS_PER_SAMPLE,
    TARGET_CHANNELS,
    TARGET_SAMPLE_RATE,
    AudioRef,
    PcmClip,
    TranscoderSpec,
)

logger = logging.getLogger(__name__)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

WAV_CONTENT_TYPES = {"audio/wav", "audio/x-wav", "audio/wave", "audio/vnd.wave"}

# Extensions PowerPoint uses for embedded narration, keyed by content type.
_EXTENSIONS = {
    "audio/mp4": ".m4a",
    "audio/x-m4a": ".m4a",
    "audio/mpeg": ".mp3",
    "audio/x-ms-wma": ".wma",
    "audio/wav": ".wav",
    "audio/x-wav": ".wav",
}

DurationOracle = Callable[[AudioRef], int]


def parse_wav(data: bytes) -> PcmClip:
    """
    Parse a RIFF/WAVE byte string into a PcmClip.

    Walks the chunk list (little-endian sizes, odd payloads padded by one byte),
    reads the `fmt ` chunk and takes the `data` chunk payload as the samples.

    Raises:
        NotRiff: the RIFF/WAVE magic is missing.
        UnsupportedEncoding: the format is not 8/16-bit mono/stereo integer PCM.
        TruncatedChunk: a chunk claims more bytes than remain, or a required chunk is absent.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotRiff()

    fmt: Optional[tuple] = None
    pos = 12
    end = len(data)
    while pos + 8 <= end:
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if size > end - body:
            raise TruncatedChunk(
                f"Chunk {chunk_id!r} declares {size} bytes but only {end - body} remain."
            )
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(data[body:body + size])
        elif chunk_id == b"data":
            if fmt is None:
                raise TruncatedChunk("data chunk appears before the fmt chunk.")
            sample_rate, channels, bits = fmt
            samples = data[body:body + size]
            return PcmClip(
                sample_rate=sample_rate,
                channels=channels,
                bits_per_sample=bits,
                samples=samples,
                duration_ms=pcm_duration_ms(len(samples), sample_rate, channels, bits),
            )
        pos = body + size + (size & 1)

    raise TruncatedChunk("No data chunk found.")


def _parse_fmt(body: bytes) -> tuple:
    if len(body) < 16:
        raise TruncatedChunk("fmt chunk shorter than 16 bytes.")
    tag, channels, sample_rate, _byte_rate, _block_align, bits = struct.unpack_from("<HHIIHH", body, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        # cbSize(2) validBits(2) channelMask(4) then the sub-format GUID, whose
        # first two bytes carry the actual format tag.
        if len(body) < 26:
            raise TruncatedChunk("Extensible fmt chunk is missing its sub-format.")
        (tag,) = struct.unpack_from("<H", body, 24)
    if tag != WAVE_FORMAT_PCM:
        raise UnsupportedEncoding(f"Format tag {tag:#06x} is not integer PCM.")
    if sample_rate <= 0 or channels not in (1, 2) or bits not in (8, 16):
        raise UnsupportedEncoding(
            f"Unsupported PCM layout: {sample_rate} Hz, {channels} channel(s), {bits} bit."
        )
    return sample_rate, channels, bits


def pcm_duration_ms(data_bytes: int, sample_rate: int, channels: int, bits_per_sample: int) -> int:
    return (1000 * data_bytes) // (sample_rate * channels * (bits_per_sample // 8))


def sniff_is_wav(audio: AudioRef) -> bool:
    if audio.content_type.lower() in WAV_CONTENT_TYPES:
        return True
    head = audio.raw_bytes[:12]
    return head[0:4] == b"RIFF" and head[8:12] == b"WAVE"


def decode_duration_ms(audio: AudioRef) -> int:
    """Default duration oracle: native WAV only."""
    if not sniff_is_wav(audio):
        raise TranscoderRequired(audio.content_type)
    return parse_wav(audio.raw_bytes).duration_ms


def duration_oracle(transcoder: Optional[TranscoderSpec], workdir: Path) -> DurationOracle:
    """Oracle that falls back to the transcoder for compressed narration."""

    def _oracle(audio: AudioRef) -> int:
        if sniff_is_wav(audio):
            return parse_wav(audio.raw_bytes).duration_ms
        return ensure_recognizer_format(audio, transcoder, workdir, tag=Path(audio.media_path).stem).duration_ms

    return _oracle


def ensure_recognizer_format(
    audio: AudioRef,
    transcoder: Optional[TranscoderSpec],
    workdir: Path,
    tag: str = "narration",
) -> PcmClip:
    """
    Return the narration as a mono/16 kHz/16-bit PcmClip.

    WAV already in that profile passes through untouched. Other WAV layouts and
    compressed formats are converted by the configured transcoder, working in a
    fresh directory under `workdir` so concurrent calls never share files.
    """
    if sniff_is_wav(audio):
        try:
            clip = parse_wav(audio.raw_bytes)
        except UnsupportedEncoding:
            clip = None
        if clip is not None and clip.is_recognizer_profile:
            return clip
    if transcoder is None:
        raise TranscoderRequired(audio.content_type)
    return _transcode(audio, transcoder, Path(workdir), tag)


def _transcode(audio: AudioRef, transcoder: TranscoderSpec, workdir: Path, tag: str) -> PcmClip:
    workdir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(prefix=f"{tag}-", dir=workdir) as tmp:
        src = Path(tmp) / f"input{_extension_for(audio)}"
        dst = Path(tmp) / "output.wav"
        src.write_bytes(audio.raw_bytes)
        command = expand_command(transcoder, src, dst)
        logger.debug("Transcoding %s: %s", audio.media_path, command)
        try:
            proc = subprocess.run(
                command,
                shell=True,
                capture_output=True,
                text=True,
                timeout=transcoder.timeout_s,
            )
        except subprocess.TimeoutExpired as e:
            raise TranscoderFailed(command, None, str(e.stderr or ""), detail=f"timed out after {transcoder.timeout_s:g} s") from e
        if proc.returncode != 0:
            raise TranscoderFailed(command, proc.returncode, proc.stderr)
        if not dst.exists():
            raise TranscoderFailed(command, proc.returncode, proc.stderr, detail="no output file written")
        try:
            clip = parse_wav(dst.read_bytes())
        except WavError as e:
            raise TranscoderFailed(command, proc.returncode, proc.stderr, detail=f"unparsable output: {e}") from e
    if not clip.is_recognizer_profile:
        raise TranscoderFailed(
            command,
            proc.returncode,
            proc.stderr,
            detail=(
                f"output is {clip.sample_rate} Hz/{clip.channels} ch/{clip.bits_per_sample} bit, "
                f"expected {TARGET_SAMPLE_RATE} Hz/{TARGET_CHANNELS} ch/{TARGET_BITS_PER_SAMPLE} bit"
            ),
        )
    return clip


def expand_command(transcoder: TranscoderSpec, src: Path, dst: Path) -> str:
    return transcoder.command_template.replace("{input}", shlex.quote(str(src))).replace(
        "{output}", shlex.quote(str(dst))
    )


def _extension_for(audio: AudioRef) -> str:
    suffix = Path(audio.media_path).suffix
    if suffix:
        return suffix
    return _EXTENSIONS.get(audio.content_type.lower()) or mimetypes.guess_extension(audio.content_type) or ".bin"
