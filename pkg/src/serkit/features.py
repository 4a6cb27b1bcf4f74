"""MFCC sequences and IS09-style utterance vectors.

Two feature kinds are produced from a 16 kHz :class:`~serkit.signal.Waveform`:

``mfcc_seq``
    a (120, 13) matrix of MFCCs (C0..C12), zero padded or clipped to
    120 frames.
``is09``
    a 384-dim vector: 12 functionals over 16 low-level descriptor
    contours and their 16 delta contours.

The IS09 index order is LLD-major then functional-minor, with the 16 plain
contours first and the 16 delta contours after them; see
:func:`is09_feature_names`.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np
from scipy import fft as sp_fft
from scipy.fft import dct

from .errors import TooShort
from .signal import (FFT_SIZE, FRAME_LEN, HOP, PREEMPH, SAMPLE_RATE, Waveform,
                     frame_signal, power_spectra)

NUM_FRAMES = 120
NUM_CEPS = 13
NUM_MEL = 23
MEL_LOW_HZ = 20.0
MEL_HIGH_HZ = 7600.0
LOG_FLOOR = 1e-10

F0_MIN_HZ = 50.0
F0_MAX_HZ = 500.0
F0_NORM_HZ = 500.0
VOICING_THRESHOLD = 0.3
# among peaks, the shortest lag within this fraction of the best wins (octave guard)
OCTAVE_RATIO = 0.9
HNR_FLOOR_DB = -20.0
HNR_CEIL_DB = 40.0

DELTA_WINDOW = 2

LLD_NAMES = ("zcr", "rms_energy", "f0_norm", "hnr") + tuple(f"mfcc{i}" for i in range(1, 13))
FUNCTIONAL_NAMES = (
    "mean", "stddev", "kurtosis", "skewness", "min", "max",
    "rel_pos_max", "rel_pos_min", "range", "linreg_offset", "linreg_slope", "linreg_mse",
)
NUM_LLD = len(LLD_NAMES)
NUM_FUNCTIONALS = len(FUNCTIONAL_NAMES)
IS09_DIM = NUM_LLD * 2 * NUM_FUNCTIONALS

_MOMENT_EPS = 1e-12


@dataclass(frozen=True)
class MfccSequence:
    matrix: np.ndarray    # (120, 13)
    valid_frames: int


@dataclass(frozen=True)
class LldContours:
    names: tuple
    values: np.ndarray    # (16, num_frames)

    def __getitem__(self, name):
        return self.values[self.names.index(name)]


@dataclass(frozen=True)
class FunctionalSet:
    mean: float
    stddev: float
    kurtosis: float
    skewness: float
    min: float
    max: float
    rel_pos_max: float
    rel_pos_min: float
    range: float
    linreg_offset: float
    linreg_slope: float
    linreg_mse: float

    def as_array(self):
        return np.array(astuple(self), dtype=np.float64)


@dataclass(frozen=True)
class Is09Vector:
    values: np.ndarray    # (384,)


def is09_feature_names():
    """Name of every IS09 dimension, e.g. ``'hnr_de__linreg_slope'``."""
    names = []
    for suffix in ("", "_de"):
        for lld in LLD_NAMES:
            names.extend(f"{lld}{suffix}__{f}" for f in FUNCTIONAL_NAMES)
    return names


# ---------------------------------------------------------------------------
# MFCC

def hz_to_mel(f):
    return 1127.0 * np.log1p(np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * np.expm1(np.asarray(m, dtype=np.float64) / 1127.0)


def mel_filterbank(num_bins=NUM_MEL, fft_size=FFT_SIZE, rate=SAMPLE_RATE,
                   low_hz=MEL_LOW_HZ, high_hz=MEL_HIGH_HZ):
    """Triangular filters on the HTK mel scale, (num_bins, fft_size//2 + 1)."""
    edges = np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), num_bins + 2)
    fft_mel = hz_to_mel(np.arange(fft_size // 2 + 1) * rate / fft_size)
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (fft_mel - left) / (center - left)
    down = (right - fft_mel) / (right - center)
    return np.clip(np.minimum(up, down), 0.0, None)


_FBANK = mel_filterbank()


def log_mel_energies(w: Waveform) -> np.ndarray:
    frames = frame_signal(w, FRAME_LEN, HOP, PREEMPH, "hamming").frames
    energies = power_spectra(frames, FFT_SIZE) @ _FBANK.T
    return np.log(np.maximum(energies, LOG_FLOOR))


def mfcc_frames(w: Waveform) -> np.ndarray:
    """Unpadded MFCC matrix, (num_frames, 13), C0 included."""
    return dct(log_mel_energies(w), type=2, norm="ortho", axis=-1)[:, :NUM_CEPS]


def pad_or_clip(seq, target=NUM_FRAMES):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.shape[0] >= target:
        return seq[:target].copy()
    out = np.zeros((target,) + seq.shape[1:])
    out[:seq.shape[0]] = seq
    return out


def ensure_min_length(w: Waveform, min_samples=FRAME_LEN) -> Waveform:
    """Zero-pad utterances shorter than one analysis frame."""
    if len(w) == 0:
        raise TooShort("empty waveform")
    if len(w) >= min_samples:
        return w
    return Waveform(np.concatenate([w.samples, np.zeros(min_samples - len(w))]), w.sample_rate_hz)


def mfcc_sequence(w: Waveform) -> MfccSequence:
    feats = mfcc_frames(w)
    return MfccSequence(pad_or_clip(feats, NUM_FRAMES), min(feats.shape[0], NUM_FRAMES))


# ---------------------------------------------------------------------------
# frame-level descriptors

def zcr(frame) -> float:
    x = np.asarray(frame, dtype=np.float64)
    if x.shape[-1] < 2:
        raise TooShort("zero-crossing rate needs at least 2 samples")
    return float(zcr_frames(x[None, :])[0])


def zcr_frames(frames):
    pos = frames >= 0.0
    return np.count_nonzero(pos[:, 1:] != pos[:, :-1], axis=1) / (frames.shape[1] - 1)


def rms_energy(frame) -> float:
    x = np.asarray(frame, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x)))


def lag_range(rate=SAMPLE_RATE):
    return int(np.ceil(rate / F0_MAX_HZ)), int(np.floor(rate / F0_MIN_HZ))


def pitch_buffer_len(rate=SAMPLE_RATE):
    """Samples needed for the fixed-window form: one frame plus the longest lag."""
    return FRAME_LEN + lag_range(rate)[1]


def nccf_frames(frames, rate=SAMPLE_RATE):
    """Normalized cross-correlation for lags in the 50-500 Hz range.

    Returns (lags, r) with r of shape (num_frames, len(lags)) where
    ``r[:, j] = sum x[k] x[k+lag] / sqrt(sum x[k]^2 * sum x[k+lag]^2)``.
    Buffers of at least :func:`pitch_buffer_len` samples use a fixed window
    of ``n - max_lag`` terms for every lag; shorter frames sum over the
    overlapping part, which gets noisy at long lags.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = frames.shape[1]
    lo, hi = lag_range(rate)
    if n <= hi:
        raise TooShort(f"pitch frame needs more than {hi} samples, got {n}")
    lags = np.arange(lo, hi + 1)
    sq = frames * frames
    csum = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(sq, axis=1)], axis=1)
    if n >= pitch_buffer_len(rate):
        win = n - hi
        nfft = sp_fft.next_fast_len(n, real=True)
        head_spec = sp_fft.rfft(frames[:, :win], nfft, axis=1)
        num = sp_fft.irfft(np.conj(head_spec) * sp_fft.rfft(frames, nfft, axis=1), nfft, axis=1)
        head = csum[:, win:win + 1]
        tail = csum[:, lags + win] - csum[:, lags]
    else:
        # circular wrap-around stays clear of lags <= hi with this length
        nfft = sp_fft.next_fast_len(n + hi + 1, real=True)
        spec = sp_fft.rfft(frames, nfft, axis=1)
        num = sp_fft.irfft(spec.real ** 2 + spec.imag ** 2, nfft, axis=1)
        head = csum[:, n - lags]                   # sum_{k < n-lag} x^2
        tail = csum[:, -1:] - csum[:, lags]        # sum_{k >= lag} x^2
    denom = np.sqrt(head * tail)
    num = num[:, lags]
    ok = denom > 1e-20 * np.maximum(csum[:, -1:], 1e-300)
    r = np.where(ok, num / np.where(ok, denom, 1.0), 0.0)
    return lags, np.clip(r, -1.0, 1.0)


def _pick_period(lags, r):
    """Return (period in samples, peak value) per row; period 0 when unvoiced."""
    peak = r.max(axis=1)
    periods = np.zeros(r.shape[0])
    interior = np.zeros_like(r, dtype=bool)
    interior[:, 1:-1] = (r[:, 1:-1] >= r[:, :-2]) & (r[:, 1:-1] >= r[:, 2:])
    interior[:, 0] = r[:, 0] >= r[:, 1]
    interior[:, -1] = r[:, -1] >= r[:, -2]
    voiced = np.flatnonzero(peak >= VOICING_THRESHOLD)
    if voiced.size == 0:
        return periods, peak
    rv = r[voiced]
    cand = interior[voiced] & (rv >= OCTAVE_RATIO * peak[voiced, None])
    j = np.where(cand.any(axis=1), np.argmax(cand, axis=1), np.argmax(rv, axis=1))
    tau = lags[j].astype(np.float64)
    inner = (j > 0) & (j < r.shape[1] - 1)
    jj = np.clip(j, 1, r.shape[1] - 2)
    rows = np.arange(voiced.size)
    a, b, c = rv[rows, jj - 1], rv[rows, jj], rv[rows, jj + 1]
    curv = a - 2.0 * b + c
    ok = inner & (curv < 0.0)
    tau += np.where(ok, 0.5 * (a - c) / np.where(ok, curv, -1.0), 0.0)
    periods[voiced] = tau
    return periods, peak


def hnr_from_peak(peak):
    """HNR in dB from a normalized autocorrelation peak, with unvoiced floor."""
    p = np.asarray(peak, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 10.0 * np.log10(p / (1.0 - p))
    db = np.where(p >= 1.0, HNR_CEIL_DB, db)
    db = np.clip(db, HNR_FLOOR_DB, HNR_CEIL_DB)
    db = np.where(p < VOICING_THRESHOLD, HNR_FLOOR_DB, db)
    return db if db.ndim else float(db)


def pitch_hnr_frames(frames, rate=SAMPLE_RATE):
    """(f0_norm, hnr_db) contours for a batch of un-windowed frames."""
    lags, r = nccf_frames(frames, rate)
    periods, peak = _pick_period(lags, r)
    with np.errstate(divide="ignore"):
        f0 = np.where(periods > 0, rate / np.where(periods > 0, periods, 1.0), 0.0)
    return np.clip(f0 / F0_NORM_HZ, 0.0, 1.0), hnr_from_peak(peak)


def pitch_f0(frame, rate=SAMPLE_RATE) -> float:
    """Normalized F0 (Hz / 500, clamped to [0, 1]); 0 for unvoiced frames."""
    return float(pitch_hnr_frames(np.asarray(frame)[None, :], rate)[0][0])


def hnr(frame, rate=SAMPLE_RATE) -> float:
    return float(pitch_hnr_frames(np.asarray(frame)[None, :], rate)[1][0])


# ---------------------------------------------------------------------------
# contours and functionals

def delta_contour(contour, window=DELTA_WINDOW):
    c = np.asarray(contour, dtype=np.float64)
    squeeze = c.ndim == 1
    c = np.atleast_2d(c)
    n = c.shape[1]
    padded = np.concatenate([np.repeat(c[:, :1], window, axis=1), c,
                             np.repeat(c[:, -1:], window, axis=1)], axis=1)
    d = np.zeros_like(c)
    for k in range(1, window + 1):
        d += k * (padded[:, window + k:window + k + n] - padded[:, window - k:window - k + n])
    d /= 2.0 * sum(k * k for k in range(1, window + 1))
    return d[0] if squeeze else d


def functionals_matrix(contours):
    """The 12 functionals of every row of a (num_contours, N) array."""
    c = np.atleast_2d(np.asarray(contours, dtype=np.float64))
    n = c.shape[1]
    if n < 2:
        raise TooShort("functionals need a contour of length >= 2")
    mean = c.mean(axis=1)
    dev = c - mean[:, None]
    m2 = np.mean(dev ** 2, axis=1)
    m3 = np.mean(dev ** 3, axis=1)
    m4 = np.mean(dev ** 4, axis=1)
    flat = m2 < _MOMENT_EPS
    safe = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, m3 / safe ** 1.5)
    kurt = np.where(flat, 0.0, m4 / safe ** 2 - 3.0)
    lo, hi = c.min(axis=1), c.max(axis=1)
    t = np.arange(n, dtype=np.float64)
    tc = t - t.mean()
    slope = (dev @ tc) / (tc @ tc)
    offset = mean - slope * t.mean()
    resid = c - (offset[:, None] + slope[:, None] * t[None, :])
    return np.stack([
        mean, np.sqrt(m2), kurt, skew, lo, hi,
        np.argmax(c, axis=1) / (n - 1), np.argmin(c, axis=1) / (n - 1),
        hi - lo, offset, slope, np.mean(resid ** 2, axis=1),
    ], axis=1)


def functionals(contour) -> FunctionalSet:
    return FunctionalSet(*functionals_matrix(np.asarray(contour)[None, :])[0].tolist())


def lld_contours(w: Waveform) -> LldContours:
    raw = frame_signal(w, FRAME_LEN, HOP, 0.0, "none").frames
    ceps = mfcc_frames(w)[:, 1:NUM_CEPS]
    # pitch buffers start where the frames do and run one max lag further
    extra = pitch_buffer_len(w.sample_rate_hz) - FRAME_LEN
    padded = np.concatenate([w.samples, np.zeros(extra)])
    buffers = frame_signal(padded, FRAME_LEN + extra, HOP, 0.0, "none").frames[:raw.shape[0]]
    f0, h = pitch_hnr_frames(buffers, w.sample_rate_hz)
    values = np.vstack([
        zcr_frames(raw),
        np.sqrt(np.mean(raw * raw, axis=1)),
        f0,
        h,
        ceps.T,
    ])
    return LldContours(LLD_NAMES, values)


def is09_vector(w: Waveform) -> Is09Vector:
    llds = lld_contours(w).values
    if llds.shape[1] < 2:
        raise TooShort("IS09 extraction needs at least 2 frames")
    contours = np.vstack([llds, delta_contour(llds)])
    return Is09Vector(functionals_matrix(contours).reshape(-1))


FEATURE_KINDS = ("mfcc_seq", "is09")


def extract(w: Waveform, kind: str) -> np.ndarray:
    """Feature array of the requested kind as float32, the cached representation."""
    w = ensure_min_length(w, FRAME_LEN if kind == "mfcc_seq" else FRAME_LEN + HOP)
    if kind == "mfcc_seq":
        return mfcc_sequence(w).matrix.astype(np.float32)
    if kind == "is09":
        return is09_vector(w).values.astype(np.float32)
    raise ValueError(f"unknown feature kind {kind!r}")
