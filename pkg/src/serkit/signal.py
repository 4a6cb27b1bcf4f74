"""Audio ingestion, framing, windowing and power spectra.

Everything here is a pure function of its inputs. No dithering is applied
anywhere, so identical audio always produces bitwise-identical frames.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadFftSize, CorruptHeader, TooShort, UnsupportedFormat

SAMPLE_RATE = 16000
FRAME_LEN = 400   # 25 ms at 16 kHz
HOP = 160         # 10 ms at 16 kHz
PREEMPH = 0.97
FFT_SIZE = 512

WINDOWS = ("hamming", "povey", "none")

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_FLOAT = 3
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("waveform must be mono (1-D)")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class FrameSet:
    frames: np.ndarray          # (num_frames, frame_len)
    frame_len_samples: int
    hop_samples: int
    preemphasis: float
    window: str

    def __len__(self):
        return self.frames.shape[0]


@dataclass(frozen=True)
class PowerSpectrum:
    bins: np.ndarray
    fft_size: int


# ---------------------------------------------------------------------------
# WAV I/O

def _parse_wav(data: bytes):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeader("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise CorruptHeader("fmt chunk too short")
            tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise CorruptHeader("extensible fmt chunk too short")
                (tag,) = struct.unpack("<H", body[24:26])
            fmt = (tag, channels, rate, bits)
        elif cid == b"data":
            if len(body) < size:
                raise CorruptHeader("data chunk truncated")
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise CorruptHeader("missing fmt or data chunk")
    return fmt, payload


def _decode(fmt, payload):
    tag, channels, rate, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels")
    if rate <= 0:
        raise CorruptHeader("sample rate must be positive")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _WAVE_FORMAT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormat(f"format tag {tag} with {bits} bits per sample")
    frame_bytes = dtype.itemsize * channels
    n = len(payload) // frame_bytes
    x = np.frombuffer(payload[:n * frame_bytes], dtype=dtype).astype(np.float64) * scale
    x = x.reshape(n, channels).mean(axis=1)
    if not np.all(np.isfinite(x)):
        raise CorruptHeader("non-finite samples")
    return np.clip(x, -1.0, 1.0), rate


def resample_linear(x: np.ndarray, rate: int, target: int = SAMPLE_RATE) -> np.ndarray:
    if rate == target or len(x) == 0:
        return np.asarray(x, dtype=np.float64)
    n_out = int(round(len(x) * target / rate))
    t_out = np.arange(n_out) / target
    t_in = np.arange(len(x)) / rate
    return np.interp(t_out, t_in, x)


def read_wav(path) -> Waveform:
    """Read a PCM16 or float32 WAV file as a mono 16 kHz waveform.

    Stereo is averaged down to mono and other sample rates are linearly
    resampled.
    """
    data = Path(path).read_bytes()
    fmt, payload = _parse_wav(data)
    x, rate = _decode(fmt, payload)
    return Waveform(resample_linear(x, rate), SAMPLE_RATE)


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE, channels: int = 1):
    """Write int16 PCM. ``samples`` is (n,) or (n, channels) in [-1, 1]."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]
    pcm = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, _WAVE_FORMAT_PCM, channels, sample_rate,
        sample_rate * channels * 2, channels * 2, 16,
        b"data", len(pcm),
    )
    Path(path).write_bytes(header + pcm)


# ---------------------------------------------------------------------------
# framing

def window_function(kind: str, n: int) -> np.ndarray:
    if kind == "hamming":
        return np.hamming(n)
    if kind == "povey":
        return np.power(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / (n - 1)), 0.85)
    if kind == "none":
        return np.ones(n)
    raise ValueError(f"unknown window {kind!r}")


def num_frames(num_samples: int, frame_len: int = FRAME_LEN, hop: int = HOP) -> int:
    if num_samples < frame_len:
        return 0
    return 1 + (num_samples - frame_len) // hop


def frame_signal(w: Waveform, frame_len: int = FRAME_LEN, hop: int = HOP,
                 preemph: float = PREEMPH, window: str = "hamming") -> FrameSet:
    if frame_len <= 0 or not 0 < hop <= frame_len:
        raise ValueError("need frame_len > 0 and 0 < hop <= frame_len")
    if not 0.0 <= preemph < 1.0:
        raise ValueError("pre-emphasis must lie in [0, 1)")
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    n = num_frames(len(x), frame_len, hop)
    if n == 0:
        raise TooShort(f"{len(x)} samples < frame length {frame_len}")
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n)[:, None]
    frames = x[idx]
    if preemph > 0.0:
        out = np.empty_like(frames)
        out[:, 1:] = frames[:, 1:] - preemph * frames[:, :-1]
        out[:, 0] = frames[:, 0] * (1.0 - preemph)
        frames = out
    if window != "none":
        frames = frames * window_function(window, frame_len)
    return FrameSet(frames, frame_len, hop, preemph, window)


# ---------------------------------------------------------------------------
# spectra

def _check_fft_size(fft_size: int, frame_len: int):
    if fft_size < 1 or fft_size & (fft_size - 1) or fft_size < frame_len:
        raise BadFftSize(f"fft size {fft_size} must be a power of two >= {frame_len}")


def power_spectrum(frame, fft_size: int = FFT_SIZE) -> PowerSpectrum:
    frame = np.asarray(frame, dtype=np.float64)
    _check_fft_size(fft_size, frame.shape[-1])
    spec = np.fft.rfft(frame, n=fft_size)
    return PowerSpectrum(spec.real ** 2 + spec.imag ** 2, fft_size)


def power_spectra(frames: np.ndarray, fft_size: int = FFT_SIZE) -> np.ndarray:
    """Row-wise power spectra of a (num_frames, frame_len) matrix."""
    _check_fft_size(fft_size, frames.shape[-1])
    spec = np.fft.rfft(frames, n=fft_size, axis=-1)
    return spec.real ** 2 + spec.imag ** 2
