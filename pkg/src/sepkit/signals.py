"""Waveform container, 16-bit PCM WAV I/O, segmentation and resampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PCM_SCALE = 32768.0
PCM_MAX = 1.0 - 1.0 / PCM_SCALE


class WavError(ValueError):
    """Base class for WAV decoding problems."""


class NotPCMError(WavError):
    pass


class MultichannelError(WavError):
    pass


class TruncatedWavError(WavError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate


@dataclass
class AudioSegment:
    source_id: str
    offset_samples: int
    waveform: Waveform

    def __post_init__(self):
        if self.offset_samples < 0:
            raise ValueError("offset_samples must be non-negative")


def quantize(samples: np.ndarray) -> np.ndarray:
    """Clamp to the int16 range and round to the nearest code."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, PCM_MAX)
    return np.round(clipped * PCM_SCALE).astype("<i2")


def _wav_bytes(waveform: Waveform) -> bytes:
    pcm = quantize(waveform.samples).tobytes()
    rate = waveform.sample_rate
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
    data = b"data" + struct.pack("<I", len(pcm))
    return header + fmt + data + pcm


def write_wav(path, waveform: Waveform) -> None:
    """Write mono 16-bit PCM; samples outside [-1, 1 - 2**-15] are clamped."""
    Path(path).write_bytes(_wav_bytes(waveform))


def read_wav(path) -> Waveform:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise TruncatedWavError(f"{path}: chunk {chunk_id!r} declares {size} bytes, found {len(body)}")
        if chunk_id == b"fmt ":
            if size < 16:
                raise TruncatedWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            if fmt is None:
                raise WavError(f"{path}: data chunk before fmt chunk")
            audio_format, channels, rate, _, _, bits = fmt
            if audio_format != 1 or bits != 16:
                raise NotPCMError(f"{path}: expected 16-bit PCM, got format={audio_format} bits={bits}")
            if channels != 1:
                raise MultichannelError(f"{path}: expected mono, got {channels} channels")
            if size % 2:
                raise TruncatedWavError(f"{path}: odd data length {size}")
            ints = np.frombuffer(body, dtype="<i2")
            return Waveform(ints.astype(np.float64) / PCM_SCALE, rate)
        pos += 8 + size + (size & 1)
    if pos < len(raw):
        raise TruncatedWavError(f"{path}: truncated chunk header")
    raise TruncatedWavError(f"{path}: no data chunk")


def segment(waveform: Waveform, seconds: float, source_id: str = "") -> list[AudioSegment]:
    """Split into consecutive non-overlapping chunks; the short tail is dropped."""
    if seconds <= 0:
        raise ValueError("segment length must be positive")
    size = int(np.floor(seconds * waveform.sample_rate))
    if size < 1:
        return []
    out = []
    for start in range(0, len(waveform) - size + 1, size):
        chunk = Waveform(waveform.samples[start : start + size].copy(), waveform.sample_rate)
        out.append(AudioSegment(source_id, start, chunk))
    return out


def resample(waveform: Waveform, target_rate: int) -> Waveform:
    """Linear-interpolation resampling (no anti-alias filter)."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == waveform.sample_rate:
        return Waveform(waveform.samples.copy(), target_rate)
    n_out = int(round(len(waveform) * target_rate / waveform.sample_rate))
    t_out = np.arange(n_out) * (waveform.sample_rate / target_rate)
    t_in = np.arange(len(waveform))
    return Waveform(np.interp(t_out, t_in, waveform.samples), target_rate)
