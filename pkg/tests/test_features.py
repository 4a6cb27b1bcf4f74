import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from serkit.features import (FUNCTIONAL_NAMES, lld_contours, nccf_frames, pitch_buffer_len, IS09_DIM, LLD_NAMES, NUM_MEL, delta_contour,
                             extract, functionals, functionals_matrix, hnr, hnr_from_peak,
                             is09_feature_names, is09_vector, log_mel_energies, mel_filterbank,
                             mel_to_hz, hz_to_mel, mfcc_sequence, pad_or_clip, pitch_f0,
                             rms_energy, zcr)
from serkit.signal import Waveform

from conftest import naive_dft_power

RATE = 16000


def sine(freq, n=400, amp=0.5, phase=0.3):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / RATE + phase)


def noise(n=400, seed=1234):
    return np.random.default_rng(seed).standard_normal(n) * 0.3


# --- oracles -----------------------------------------------------------------

def brute_functionals(c):
    """Direct evaluation of the 12 functional definitions with Python loops."""
    c = [float(v) for v in c]
    n = len(c)
    mean = sum(c) / n
    m2 = sum((v - mean) ** 2 for v in c) / n
    m3 = sum((v - mean) ** 3 for v in c) / n
    m4 = sum((v - mean) ** 4 for v in c) / n
    sd = math.sqrt(m2)
    skew = m3 / m2 ** 1.5 if m2 > 1e-12 else 0.0
    kurt = m4 / m2 ** 2 - 3.0 if m2 > 1e-12 else 0.0
    lo, hi = min(c), max(c)
    pos_max = c.index(hi) / (n - 1)
    pos_min = c.index(lo) / (n - 1)
    tbar = (n - 1) / 2
    sxy = sum((t - tbar) * (v - mean) for t, v in enumerate(c))
    sxx = sum((t - tbar) ** 2 for t in range(n))
    slope = sxy / sxx
    offset = mean - slope * tbar
    mse = sum((v - offset - slope * t) ** 2 for t, v in enumerate(c)) / n
    return [mean, sd, kurt, skew, lo, hi, pos_max, pos_min, hi - lo, offset, slope, mse]


def oracle_nccf_f0(x, lo=32, hi=320):
    """Exhaustive-lag normalized autocorrelation with the octave guard."""
    n = len(x)
    r = []
    for tau in range(lo, hi + 1):
        a, b = x[:n - tau], x[tau:]
        r.append(float(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b))))
    peak = max(r)
    if peak < 0.3:
        return 0.0, peak
    for j, v in enumerate(r):
        left = r[j - 1] if j > 0 else -np.inf
        right = r[j + 1] if j + 1 < len(r) else -np.inf
        if v >= 0.9 * peak and v >= left and v >= right:
            return RATE / (lo + j) / 500.0, peak
    return RATE / (lo + int(np.argmax(r))) / 500.0, peak


# --- pad_or_clip / zcr / rms ---------------------------------------------------

def test_pad_or_clip_cases():
    a = np.ones((80, 13))
    out = pad_or_clip(a)
    assert out.shape == (120, 13) and np.all(out[80:] == 0) and np.all(out[:80] == 1)
    b = np.arange(150 * 13, dtype=float).reshape(150, 13)
    assert np.array_equal(pad_or_clip(b), b[:120])
    c = np.random.default_rng(0).normal(size=(120, 13))
    assert np.array_equal(pad_or_clip(c), c)


def test_zcr_examples():
    assert zcr(np.full(10, 0.4)) == 0.0
    assert zcr(np.array([1, -1] * 8, dtype=float)) == 1.0
    assert zcr(np.array([1, 1, -1, -1, -1], dtype=float)) == 0.25


def test_rms_examples():
    assert rms_energy(np.full(7, -0.3)) == pytest.approx(0.3)
    assert rms_energy(np.zeros(5)) == 0.0
    assert rms_energy(np.array([3.0, 4.0])) == pytest.approx(3.5355339059327378)


# --- pitch / HNR ---------------------------------------------------------------

@pytest.mark.parametrize("freq", [200.0, 100.0])
def test_pitch_examples_against_oracle(freq):
    x = sine(freq)
    got = pitch_f0(x)
    ref, _ = oracle_nccf_f0(x)
    assert got == pytest.approx(freq / 500, abs=0.02)
    assert ref == pytest.approx(freq / 500, abs=0.02)
    assert got == pytest.approx(ref, abs=0.01)


def test_noise_unvoiced():
    x = noise()
    _, peak = oracle_nccf_f0(x)
    assert peak < 0.3
    assert pitch_f0(x) == 0.0
    assert hnr(x) == -20.0


@pytest.mark.parametrize("freq", [60, 75, 90, 120, 150, 220, 300, 410, 480])
def test_pitch_range(freq):
    assert pitch_f0(sine(freq)) * 500 == pytest.approx(freq, rel=0.04)


def test_hnr_examples():
    assert hnr(sine(200.0)) == pytest.approx(40.0, abs=1e-6)
    assert hnr_from_peak(0.5) == pytest.approx(0.0, abs=1e-12)
    assert hnr_from_peak(0.2) == -20.0
    assert hnr_from_peak(1.0) == 40.0


@pytest.mark.parametrize("n", [400, 720, 800])
def test_nccf_matches_brute_force(n):
    x = np.random.default_rng(n).normal(size=n) + sine(137.0, n, amp=2.0)
    lags, r = nccf_frames(x[None])
    fixed = n >= pitch_buffer_len()
    win = n - 320
    for j in (0, 50, 150, len(lags) - 1):
        tau = lags[j]
        if fixed:
            a, b = x[:win], x[tau:tau + win]
        else:
            a, b = x[:n - tau], x[tau:]
        ref = float(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b)))
        assert r[0, j] == pytest.approx(ref, abs=1e-12)


def test_noise_utterance_unvoiced():
    for seed in range(5):
        x = np.random.default_rng(seed).standard_normal(16000) * 0.3
        llds = lld_contours(Waveform(x))
        assert np.all(llds["f0_norm"] == 0.0) and np.all(llds["hnr"] == -20.0)


# --- deltas and functionals ------------------------------------------------------

def test_delta_examples():
    assert np.all(delta_contour(np.full(9, 2.5)) == 0)
    d = delta_contour(3.0 * np.arange(12))
    assert np.allclose(d[2:-2], 3.0)
    assert np.array_equal(delta_contour(np.array([4.2])), np.array([0.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30),
       st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.floats(-3, 3))
def test_delta_linear(a, b, k):
    n = min(len(a), len(b))
    a, b = np.array(a[:n]), np.array(b[:n])
    lhs = delta_contour(a + k * b)
    rhs = delta_contour(a) + k * delta_contour(b)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(a).max() + abs(k) * np.abs(b).max()))


def test_functionals_constant():
    f = functionals(np.full(6, 1.7))
    assert (f.mean, f.stddev, f.skewness, f.kurtosis) == (pytest.approx(1.7), 0.0, 0.0, 0.0)
    assert f.min == f.max == 1.7 and f.range == 0.0
    assert f.rel_pos_max == 0.0 and f.rel_pos_min == 0.0
    assert f.linreg_offset == pytest.approx(1.7) and f.linreg_slope == pytest.approx(0.0)
    assert f.linreg_mse == pytest.approx(0.0, abs=1e-24)


def test_functionals_ramp():
    f = functionals(2.0 * np.arange(5))
    assert f.linreg_slope == pytest.approx(2.0) and f.linreg_offset == pytest.approx(0.0, abs=1e-12)
    assert f.linreg_mse == pytest.approx(0.0, abs=1e-20)
    assert (f.min, f.max, f.range, f.mean) == (0.0, 8.0, 8.0, 4.0)
    assert (f.rel_pos_max, f.rel_pos_min) == (1.0, 0.0)


def test_functionals_small_contour_brute_force():
    got = functionals(np.array([1.0, 2.0, 4.0, 8.0])).as_array()
    assert np.allclose(got, brute_functionals([1, 2, 4, 8]), rtol=0, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
def test_functionals_property(values):
    c = np.array(values)
    got = functionals_matrix(c[None])[0]
    ref = np.array(brute_functionals(c))
    scale = 1 + np.abs(c).max()
    m2 = np.var(c)
    if 1e-12 <= m2 < 1e-6 * scale ** 2:
        return   # near-degenerate spread; standardized moments ill-conditioned
    tol = np.full(12, 1e-9 * scale)
    tol[[2, 3]] = 1e-6
    tol[11] = 1e-9 * scale ** 2
    assert np.all(np.abs(got - ref) <= tol)


# --- MFCC ------------------------------------------------------------------------

def test_mfcc_shape_various_lengths():
    for n in (1, 399, 400, 5000, 16000 * 3):
        x = np.random.default_rng(n).uniform(-0.5, 0.5, n)
        assert extract(Waveform(x), "mfcc_seq").shape == (120, 13)


def test_mfcc_silence():
    seq = mfcc_sequence(Waveform(np.zeros(16000)))
    assert np.all(seq.matrix[:, 1:] == pytest.approx(0.0, abs=1e-9))
    assert np.all(seq.matrix[:seq.valid_frames, 0] < 0)


def test_mfcc_padding_rows_zero():
    seq = mfcc_sequence(Waveform(np.random.default_rng(0).uniform(-0.5, 0.5, 8000)))
    assert seq.valid_frames == 48
    assert np.all(seq.matrix[48:] == 0)


def test_tone_1khz_mel_band_oracle():
    x = np.sin(2 * np.pi * 1000 * np.arange(4000) / RATE) * 0.5
    logmel = log_mel_energies(Waveform(x))
    band = int(np.argmax(logmel.mean(axis=0)))
    # oracle: band centers from the mel scale, triangle weights applied to a naive DFT
    edges = mel_to_hz(np.linspace(hz_to_mel(20.0), hz_to_mel(7600.0), NUM_MEL + 2))
    containing = [b for b in range(NUM_MEL) if edges[b] < 1000 < edges[b + 2]]
    assert band in containing
    frame = x[:400] * np.hamming(400)
    spec = naive_dft_power(frame, 512)
    freqs = np.arange(257) * RATE / 512
    energies = []
    for b in range(NUM_MEL):
        lo, c, hi = edges[b], edges[b + 1], edges[b + 2]
        w = np.clip(np.minimum((freqs - lo) / (c - lo), (hi - freqs) / (hi - c)), 0, None)
        energies.append(float(w @ spec))
    assert int(np.argmax(energies)) == band
    fb = mel_filterbank()
    assert fb.shape == (NUM_MEL, 257)


# --- IS09 ------------------------------------------------------------------------

def test_is09_names_and_order():
    names = is09_feature_names()
    assert len(names) == IS09_DIM == 384 == len(set(names))
    assert names[0] == f"{LLD_NAMES[0]}__{FUNCTIONAL_NAMES[0]}"
    assert names[12] == f"{LLD_NAMES[1]}__{FUNCTIONAL_NAMES[0]}"
    assert names[192].startswith(LLD_NAMES[0] + "_de__")


def test_is09_silence_zcr_block():
    v = is09_vector(Waveform(np.zeros(8000))).values
    assert v.shape == (384,)
    assert np.all(v[:12] == 0.0)
    assert np.all(np.isfinite(v))


def test_is09_self_concatenation_means():
    t = np.arange(12000) / RATE
    x = 0.4 * np.sin(2 * np.pi * 180 * t) + 0.1 * np.sin(2 * np.pi * 360 * t)
    a = is09_vector(Waveform(x)).values.reshape(32, 12)
    b = is09_vector(Waveform(np.concatenate([x, x]))).values.reshape(32, 12)
    for i, name in enumerate(("zcr", "rms_energy", "f0_norm", "hnr")):
        assert b[i, 0] == pytest.approx(a[i, 0], rel=0.05), name
    # independent per-frame oracle for the doubled signal
    y = np.concatenate([x, x])
    starts = range(0, len(y) - 400 + 1, 160)
    zcr_ref = np.mean([zcr(y[s:s + 400]) for s in starts])
    rms_ref = np.mean([rms_energy(y[s:s + 400]) for s in starts])
    f0_ref = np.mean([oracle_nccf_f0(y[s:s + 400])[0] for s in starts])
    assert b[0, 0] == pytest.approx(zcr_ref, rel=1e-9)
    assert b[1, 0] == pytest.approx(rms_ref, rel=1e-9)
    assert b[2, 0] == pytest.approx(f0_ref, rel=0.01)
    assert b[0, 6] != a[0, 6] or b[1, 10] != a[1, 10]


def test_extract_dtype_and_unknown_kind():
    w = Waveform(np.random.default_rng(1).uniform(-0.3, 0.3, 4000))
    v = extract(w, "is09")
    assert v.dtype == np.float32 and v.shape == (384,)
    with pytest.raises(Exception):
        extract(w, "spectrogram")
