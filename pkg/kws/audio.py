"""Audio ingest: WAV parsing, resampling to the pipeline rate, peak
normalization and fixed-length framing.

Lossy containers (the crowdsourced ogg vorbis utterances) are decoded by an
external program configured as ``audio.decoder_cmd``; this module itself only
reads and writes RIFF/WAVE.
"""

from __future__ import annotations

import shlex
import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
import torchaudio

from kws.config import FRAME_LEN, PIPELINE_RATE
from kws.errors import (
    ArgumentError,
    DecodeError,
    EmptyAudioError,
    StorageError,
    UnsupportedFormatError,
)
from kws.utils import atomic_write, get_logger

logger = get_logger(__name__)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# Kaiser-windowed sinc, 64 zero-crossings per side
KAISER_BETA = 8.6
LOWPASS_FILTER_WIDTH = 64
ROLLOFF = 0.99


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_id: Optional[str] = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ArgumentError(f"AudioClip expects mono samples, got shape {samples.shape}")
        if samples.size < 1:
            raise EmptyAudioError("AudioClip needs at least one sample")
        if self.sample_rate <= 0:
            raise ArgumentError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise DecodeError("non-finite sample values")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class FixedClip:
    samples: np.ndarray
    sample_rate: int = PIPELINE_RATE
    source_id: Optional[str] = None

    def __len__(self) -> int:
        return len(self.samples)


# ---------------------------------------------------------------------------
# WAV codec
# ---------------------------------------------------------------------------


def _parse_fmt(body: bytes, offset: int):
    if len(body) < 16:
        raise DecodeError("fmt chunk shorter than 16 bytes", offset)
    audio_format, channels, rate, _, block_align, bits = struct.unpack_from(
        "<HHIIHH", body
    )
    if audio_format == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 26:
            raise DecodeError("extensible fmt chunk too short", offset)
        # first two bytes of the sub-format GUID carry the real format tag
        (audio_format,) = struct.unpack_from("<H", body, 24)
    if audio_format not in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedFormatError(
            f"unsupported WAV codec 0x{audio_format:04x} (PCM and 32-bit float only)"
        )
    if audio_format == WAVE_FORMAT_PCM and bits not in (8, 16, 24, 32):
        raise UnsupportedFormatError(f"unsupported PCM bit depth {bits}")
    if audio_format == WAVE_FORMAT_IEEE_FLOAT and bits != 32:
        raise UnsupportedFormatError(f"unsupported float bit depth {bits}")
    if channels < 1:
        raise DecodeError("channel count is zero", offset + 2)
    if rate <= 0:
        raise DecodeError("sample rate is zero", offset + 4)
    if block_align != channels * bits // 8:
        raise DecodeError(
            f"block align {block_align} inconsistent with {channels}x{bits} bits",
            offset + 12,
        )
    return audio_format, channels, rate, bits


def _pcm_to_float(data: bytes, audio_format: int, bits: int) -> np.ndarray:
    if audio_format == WAVE_FORMAT_IEEE_FLOAT:
        return np.clip(np.frombuffer(data, dtype="<f4").astype(np.float64), -1.0, 1.0)
    if bits == 8:
        return (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if bits == 16:
        return np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    if bits == 24:
        raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        return ints.astype(np.float64) / 8388608.0
    return np.frombuffer(data, dtype="<i4").astype(np.float64) / 2147483648.0


def decode_wav(data: bytes, source_id: Optional[str] = None) -> AudioClip:
    """Parse a RIFF/WAVE byte string into a mono clip scaled to [-1, 1]."""
    if len(data) < 12:
        raise DecodeError("file shorter than the RIFF header", 0)
    if data[0:4] != b"RIFF":
        raise DecodeError("missing RIFF magic", 0)
    if data[8:12] != b"WAVE":
        raise DecodeError("missing WAVE form type", 8)

    fmt = None
    offset = 12
    while offset < len(data):
        if offset + 8 > len(data):
            raise DecodeError("truncated chunk header", offset)
        chunk_id = data[offset : offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        body_start = offset + 8
        body_end = body_start + size

        if chunk_id == b"fmt ":
            if body_end > len(data):
                raise DecodeError("truncated fmt chunk", offset)
            fmt = _parse_fmt(data[body_start:body_end], body_start)
        elif chunk_id == b"data":
            if fmt is None:
                raise DecodeError("data chunk before fmt chunk", offset)
            if size == 0:
                raise EmptyAudioError("data chunk is empty", offset)
            if body_end > len(data):
                raise DecodeError(
                    f"data chunk declares {size} bytes, only {len(data) - body_start} present",
                    offset,
                )
            audio_format, channels, rate, bits = fmt
            frame_bytes = channels * bits // 8
            if size % frame_bytes:
                raise DecodeError(
                    f"data chunk size {size} is not a multiple of frame size {frame_bytes}",
                    offset,
                )
            samples = _pcm_to_float(data[body_start:body_end], audio_format, bits)
            samples = samples.reshape(-1, channels).mean(axis=1)
            return AudioClip(samples, rate, source_id)

        # chunks are word aligned
        offset = body_end + (size & 1)

    if fmt is None:
        raise DecodeError("no fmt chunk", offset)
    raise DecodeError("no data chunk", offset)


def encode_wav(clip: Union[AudioClip, FixedClip], bits: int = 16) -> bytes:
    """Serialize a mono clip as PCM (8/16/24/32-bit int) or 32-bit float WAV.

    ``bits=32`` writes IEEE float; integer depths round to the nearest step.
    """
    x = np.clip(np.asarray(clip.samples, dtype=np.float64), -1.0, 1.0)
    audio_format = WAVE_FORMAT_PCM
    if bits == 8:
        payload = (np.clip(np.round(x * 128.0), -128, 127) + 128).astype(np.uint8).tobytes()
    elif bits == 16:
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif bits == 24:
        ints = np.clip(np.round(x * 8388608.0), -8388608, 8388607).astype("<i4")
        payload = ints.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
    elif bits == 32:
        audio_format = WAVE_FORMAT_IEEE_FLOAT
        payload = x.astype("<f4").tobytes()
    else:
        raise ArgumentError(f"unsupported bit depth {bits}")

    block_align = bits // 8
    fmt = struct.pack(
        "<HHIIHH",
        audio_format,
        1,
        clip.sample_rate,
        clip.sample_rate * block_align,
        block_align,
        bits,
    )
    pad = b"\x00" if len(payload) & 1 else b""
    body = (
        b"WAVE"
        + b"fmt "
        + struct.pack("<I", len(fmt))
        + fmt
        + b"data"
        + struct.pack("<I", len(payload))
        + payload
        + pad
    )
    return b"RIFF" + struct.pack("<I", len(body)) + body


def read_wav(path: Union[str, Path]) -> AudioClip:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from e
    return decode_wav(data, source_id=str(path))


def write_wav(path: Union[str, Path], clip: Union[AudioClip, FixedClip], bits: int = 16):
    with atomic_write(path, "wb") as f:
        f.write(encode_wav(clip, bits))


def decode_external(path: Union[str, Path], decoder_cmd: str) -> AudioClip:
    """Decode a non-WAV file by running ``<decoder_cmd> <in> <out.wav>``."""
    path = Path(path)
    with tempfile.TemporaryDirectory(prefix="kws-decode-") as tmp:
        out = Path(tmp) / f"{path.stem}.wav"
        cmd = shlex.split(decoder_cmd) + [str(path), str(out)]
        try:
            subprocess.run(cmd, check=True, capture_output=True)
        except FileNotFoundError as e:
            raise StorageError(f"decoder executable not found: {cmd[0]}") from e
        except subprocess.CalledProcessError as e:
            stderr = e.stderr.decode("utf-8", "replace").strip().splitlines()
            reason = stderr[-1] if stderr else f"exit status {e.returncode}"
            raise DecodeError(f"external decoder failed on {path}: {reason}") from e
        clip = read_wav(out)
    return AudioClip(clip.samples, clip.sample_rate, str(path))


def read_clip(path: Union[str, Path], decoder_cmd: Optional[str] = None) -> AudioClip:
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return read_wav(path)
    if decoder_cmd is None:
        raise UnsupportedFormatError(f"{path.suffix} input needs audio.decoder_cmd")
    return decode_external(path, decoder_cmd)


# ---------------------------------------------------------------------------
# Signal conditioning
# ---------------------------------------------------------------------------


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited resampling (Kaiser-windowed sinc, polyphase).

    Output length is ``round(len(clip) * target_rate / clip.sample_rate)``.
    Equal rates return the input clip unchanged.
    """
    if target_rate <= 0:
        raise ArgumentError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip

    n_out = int(np.floor(len(clip) * target_rate / clip.sample_rate + 0.5))
    if n_out < 1:
        raise EmptyAudioError(f"resampling {len(clip)} samples to {target_rate} Hz leaves nothing")
    wav = torch.from_numpy(clip.samples).unsqueeze(0)
    out = torchaudio.functional.resample(
        wav,
        clip.sample_rate,
        target_rate,
        lowpass_filter_width=LOWPASS_FILTER_WIDTH,
        rolloff=ROLLOFF,
        resampling_method="sinc_interp_kaiser",
        beta=KAISER_BETA,
    )
    out = out.squeeze(0).numpy()
    if len(out) >= n_out:
        out = out[:n_out]
    else:
        out = np.pad(out, (0, n_out - len(out)))
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate, clip.source_id)


def normalize_amplitude(clip: AudioClip) -> AudioClip:
    """Scale so the peak magnitude is exactly 1.0; all-zero input passes through."""
    peak = np.max(np.abs(clip.samples))
    if peak == 0.0:
        return clip
    return AudioClip(clip.samples / peak, clip.sample_rate, clip.source_id)


def fix_length(clip: AudioClip, n: int = FRAME_LEN) -> FixedClip:
    """Center-crop or zero-pad (extra zero on the right) to exactly ``n`` samples."""
    if n <= 0:
        raise ArgumentError(f"frame length must be positive, got {n}")
    if clip.sample_rate != PIPELINE_RATE:
        raise ArgumentError(
            f"fix_length expects {PIPELINE_RATE} Hz input, got {clip.sample_rate} Hz"
        )
    x = clip.samples
    if len(x) < n:
        deficit = n - len(x)
        left = deficit // 2
        x = np.pad(x, (left, deficit - left))
    elif len(x) > n:
        start = (len(x) - n) // 2
        x = x[start : start + n]
    return FixedClip(np.array(x, dtype=np.float64), PIPELINE_RATE, clip.source_id)


def condition(clip: AudioClip, frame_len: int = FRAME_LEN) -> FixedClip:
    """Resample to the pipeline rate, peak-normalize and frame one utterance."""
    clip = resample(clip, PIPELINE_RATE)
    return fix_length(normalize_amplitude(clip), frame_len)


def load_clip(
    path: Union[str, Path],
    frame_len: int = FRAME_LEN,
    decoder_cmd: Optional[str] = None,
) -> FixedClip:
    return condition(read_clip(path, decoder_cmd), frame_len)
