"""Audio DSP tests, anchored by independent brute-force oracles:
a naive O(n^2) DFT, an explicit scalar-sum MFCC pipeline, and hand-evaluated
bilinear interpolation."""

import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motas.audio_dsp import (
    AudioClip,
    FrameConfig,
    MalformedWavError,
    MelFilterbank,
    UnsupportedWavError,
    bilinear_resize,
    compute_mfcc,
    compute_spectrogram,
    hann_window,
    hz_to_mel,
    load_wav,
    mel_filterbank,
    mel_to_hz,
    pad_or_split,
    power_spectrum,
)


# ---------------------------------------------------------------- oracles


def naive_power_spectrum(frame, n_fft):
    """Direct DFT evaluation, one explicit sum per bin."""
    padded = np.zeros(n_fft)
    padded[: len(frame)] = frame
    t = np.arange(n_fft)
    out = np.zeros(n_fft // 2 + 1)
    for k in range(n_fft // 2 + 1):
        angle = 2.0 * np.pi * k * t / n_fft
        re = np.sum(padded * np.cos(angle))
        im = -np.sum(padded * np.sin(angle))
        out[k] = re * re + im * im
    return out


def naive_mfcc_single_frame(samples, sample_rate, cfg):
    """End-to-end scalar-sum MFCC of the first frame: explicit window,
    naive DFT, per-filter triangle sums, explicit DCT-II with orthonormal
    scaling. Shares nothing with the production path beyond the conventions."""
    frame_len = int(round(cfg.frame_len_ms * sample_rate / 1000.0))
    n_fft = cfg.fft_size(sample_rate)
    fmin, fmax = cfg.band_limits(sample_rate)

    window = [0.5 - 0.5 * math.cos(2.0 * math.pi * t / (frame_len - 1)) for t in range(frame_len)]
    frame = [samples[t] * window[t] for t in range(frame_len)]
    power = naive_power_spectrum(np.array(frame), n_fft)

    mel_lo = 2595.0 * math.log10(1.0 + fmin / 700.0)
    mel_hi = 2595.0 * math.log10(1.0 + fmax / 700.0)
    step = (mel_hi - mel_lo) / (cfg.n_mels + 1)
    hz = [700.0 * (10.0 ** ((mel_lo + i * step) / 2595.0) - 1.0) for i in range(cfg.n_mels + 2)]

    log_e = []
    for m in range(cfg.n_mels):
        acc = 0.0
        for k in range(n_fft // 2 + 1):
            f = k * sample_rate / n_fft
            if hz[m] < f < hz[m + 2]:
                if f <= hz[m + 1]:
                    w = (f - hz[m]) / (hz[m + 1] - hz[m])
                else:
                    w = (hz[m + 2] - f) / (hz[m + 2] - hz[m + 1])
                acc += w * power[k]
        log_e.append(math.log(max(acc, cfg.log_floor)))

    n = cfg.n_mels
    coeffs = []
    for k in range(cfg.n_mfcc):
        alpha = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        coeffs.append(alpha * sum(log_e[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n)) for i in range(n)))
    return np.array(coeffs)


# ---------------------------------------------------------------- wav io


def write_int16_wav(path, samples, sample_rate=16000, channels=1):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(np.asarray(samples, dtype="<i2").tobytes())


def write_float32_wav(path, samples, sample_rate=16000):
    data = np.asarray(samples, dtype="<f4").tobytes()
    byte_rate = sample_rate * 4
    header = (
        b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
        + b"fmt " + struct.pack("<IHHIIHH", 16, 3, 1, sample_rate, byte_rate, 4, 32)
        + b"data" + struct.pack("<I", len(data))
    )
    path.write_bytes(header + data)


def test_load_wav_zeros(tmp_path):
    p = tmp_path / "zeros.wav"
    write_int16_wav(p, np.zeros(16000, dtype=np.int16))
    clip = load_wav(p)
    assert len(clip.samples) == 16000
    assert clip.sample_rate == 16000
    assert np.array_equal(clip.samples, np.zeros(16000))


def test_load_wav_int16_scale_boundary(tmp_path):
    p = tmp_path / "min.wav"
    write_int16_wav(p, np.array([-32768, 32767, 0], dtype=np.int16))
    clip = load_wav(p)
    assert clip.samples[0] == -1.0
    assert clip.samples[1] == pytest.approx(32767 / 32768)
    assert clip.samples[2] == 0.0


def test_load_wav_stereo_symmetric_average(tmp_path):
    p = tmp_path / "stereo.wav"
    left = np.full(100, 16384, dtype=np.int16)   # +0.5
    right = np.full(100, -16384, dtype=np.int16)  # -0.5
    interleaved = np.empty(200, dtype=np.int16)
    interleaved[0::2] = left
    interleaved[1::2] = right
    write_int16_wav(p, interleaved, channels=2)
    clip = load_wav(p)
    assert len(clip.samples) == 100
    assert np.array_equal(clip.samples, np.zeros(100))


def test_load_wav_float32_roundtrip(tmp_path):
    p = tmp_path / "f32.wav"
    vals = np.array([0.25, -0.5, 1.0, -1.0], dtype=np.float32)
    write_float32_wav(p, vals)
    clip = load_wav(p)
    assert np.array_equal(clip.samples, vals.astype(np.float64))


def test_load_wav_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_wav(tmp_path / "nope.wav")


def test_load_wav_malformed_header(tmp_path):
    p = tmp_path / "bad.wav"
    p.write_bytes(b"NOT A WAVE FILE AT ALL......")
    with pytest.raises(MalformedWavError):
        load_wav(p)


def test_load_wav_unsupported_codec(tmp_path):
    p = tmp_path / "ulaw.wav"
    data = bytes(100)
    header = (
        b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
        + b"fmt " + struct.pack("<IHHIIHH", 16, 7, 1, 8000, 8000, 1, 8)  # mu-law
        + b"data" + struct.pack("<I", len(data))
    )
    p.write_bytes(header + data)
    with pytest.raises(UnsupportedWavError):
        load_wav(p)


# ---------------------------------------------------------------- pad/split


def test_pad_short_clip():
    clip = AudioClip(np.arange(1, 48001) / 48001.0, 16000)  # 3 s
    out = pad_or_split(clip, 5.0)
    assert len(out) == 1
    assert len(out[0].samples) == 80000
    assert np.array_equal(out[0].samples[:48000], clip.samples)
    assert np.array_equal(out[0].samples[48000:], np.zeros(32000))


def test_exact_length_identity():
    clip = AudioClip(np.random.default_rng(0).uniform(-1, 1, 80000), 16000)
    out = pad_or_split(clip, 5.0)
    assert len(out) == 1
    assert np.array_equal(out[0].samples, clip.samples)


def test_split_12s_clip():
    clip = AudioClip(np.random.default_rng(1).uniform(-1, 1, 192000), 16000)  # 12 s
    out = pad_or_split(clip, 5.0)
    assert [len(c.samples) for c in out] == [80000, 80000, 80000]
    assert np.array_equal(out[2].samples[:32000], clip.samples[160000:])
    assert np.array_equal(out[2].samples[32000:], np.zeros(48000))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(min_value=1, max_value=3000), target_s=st.sampled_from([0.01, 0.05, 0.1]))
def test_pad_or_split_roundtrip(n, target_s):
    rng = np.random.default_rng(n)
    samples = rng.uniform(-1, 1, n)
    clip = AudioClip(samples, 8000)
    out = pad_or_split(clip, target_s)
    target = int(round(target_s * 8000))
    assert all(len(c.samples) == target for c in out)
    merged = np.concatenate([c.samples for c in out])
    assert np.array_equal(merged[:n], samples)
    assert np.array_equal(merged[n:], np.zeros(len(merged) - n))


# ---------------------------------------------------------------- windows & spectra


def test_hann_endpoints_zero():
    for n in (2, 5, 64, 401):
        w = hann_window(n)
        assert w[0] == 0.0 and w[-1] == 0.0


def test_hann_odd_peak():
    for n in (3, 5, 25, 401):
        assert hann_window(n)[(n - 1) // 2] == pytest.approx(1.0, abs=1e-12)


def test_hann_n4_hand_value():
    assert np.allclose(hann_window(4), [0.0, 0.75, 0.75, 0.0], atol=1e-12)


def test_hann_too_short():
    with pytest.raises(ValueError):
        hann_window(1)


def test_power_spectrum_impulse():
    frame = np.zeros(8)
    frame[0] = 1.0
    assert np.allclose(power_spectrum(frame, 8), np.ones(5), atol=1e-12)


def test_power_spectrum_zero_frame():
    assert np.array_equal(power_spectrum(np.zeros(16), 16), np.zeros(9))


def test_power_spectrum_matches_naive_dft():
    rng = np.random.default_rng(42)
    frame = rng.uniform(-1, 1, 1024)
    got = power_spectrum(frame, 1024)
    want = naive_power_spectrum(frame, 1024)
    assert np.max(np.abs(got - want)) < 1e-6


def test_power_spectrum_oracle_sweep():
    rng = np.random.default_rng(7)
    for n in (64, 256, 1024):
        for _ in range(5):
            frame = rng.uniform(-1, 1, n)
            assert np.max(np.abs(power_spectrum(frame, n) - naive_power_spectrum(frame, n))) < 1e-6


def test_power_spectrum_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        power_spectrum(np.zeros(10), 12)


def test_parseval():
    rng = np.random.default_rng(3)
    for n_fft in (64, 256):
        frame = rng.uniform(-1, 1, n_fft)
        p = power_spectrum(frame, n_fft)
        mirrored = p[0] + 2.0 * np.sum(p[1:-1]) + p[-1]
        time_energy = np.sum(frame**2)
        assert abs(time_energy - mirrored / n_fft) / time_energy < 1e-6


# ---------------------------------------------------------------- mel & mfcc


def test_mel_scale_roundtrip():
    freqs = np.array([0.0, 100.0, 1000.0, 8000.0])
    assert np.allclose(mel_to_hz(hz_to_mel(freqs)), freqs, atol=1e-9)


def test_filterbank_invariants():
    fb = mel_filterbank(40, 512, 16000, 0.0, 8000.0)
    assert fb.weights.shape == (40, 257)
    assert np.all(fb.weights >= 0)
    assert np.all(np.any(fb.weights > 0, axis=1))


def test_filterbank_rejects_empty_row():
    # 80 filters over a narrow band cannot all own a bin at n_fft=64.
    with pytest.raises(ValueError):
        mel_filterbank(80, 64, 16000, 0.0, 8000.0)


def test_mfcc_zero_clip_constant_frames():
    clip = AudioClip(np.zeros(16000), 16000)
    seq = compute_mfcc(clip, FrameConfig())
    assert np.all(np.isfinite(seq.frames))
    assert np.all(seq.frames == seq.frames[0])


def test_mfcc_frame_count_5s():
    clip = AudioClip(np.zeros(80000), 16000)
    seq = compute_mfcc(clip, FrameConfig())
    assert seq.n_frames == 498  # 1 + (80000 - 400) // 160


def test_mfcc_single_frame_matches_scalar_oracle():
    rng = np.random.default_rng(2024)
    cfg = FrameConfig()
    samples = rng.uniform(-1, 1, 400)
    clip = AudioClip(samples, 16000)
    got = compute_mfcc(clip, cfg).frames[0]
    want = naive_mfcc_single_frame(samples, 16000, cfg)
    assert np.max(np.abs(got - want)) < 1e-6


def test_mfcc_deterministic():
    rng = np.random.default_rng(5)
    clip = AudioClip(rng.uniform(-1, 1, 16000), 16000)
    a = compute_mfcc(clip, FrameConfig()).frames
    b = compute_mfcc(clip, FrameConfig()).frames
    assert np.array_equal(a, b)


def test_mfcc_time_shift_by_hops():
    # A tiled waveform shifted by whole hops yields frame-shifted coefficients.
    rng = np.random.default_rng(8)
    period = rng.uniform(-1, 1, 160)  # one hop at 16 kHz / 10 ms
    samples = np.tile(period, 100)
    shifted = np.roll(samples, -2 * 160)
    a = compute_mfcc(AudioClip(samples, 16000), FrameConfig()).frames
    b = compute_mfcc(AudioClip(shifted, 16000), FrameConfig()).frames
    assert np.array_equal(a[2:], b[:-2])


def test_mfcc_rejects_short_clip():
    with pytest.raises(ValueError):
        compute_mfcc(AudioClip(np.zeros(399), 16000), FrameConfig())


# ---------------------------------------------------------------- spectrogram image


def test_bilinear_identity():
    rng = np.random.default_rng(12)
    mat = rng.uniform(0, 1, (224, 224))
    assert np.array_equal(bilinear_resize(mat, 224, 224), mat)


def test_bilinear_2x2_to_3x3_center():
    mat = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = bilinear_resize(mat, 3, 3)
    assert out[1, 1] == pytest.approx(0.5, abs=1e-12)
    assert out[0, 0] == 0.0 and out[0, 2] == 1.0 and out[2, 0] == 1.0 and out[2, 2] == 0.0


def test_spectrogram_sine_in_unit_range():
    t = np.arange(16000)
    clip = AudioClip(0.8 * np.sin(2 * np.pi * 440 * t / 16000), 16000)
    img = compute_spectrogram(clip, FrameConfig())
    assert img.pixels.shape == (224, 224)
    assert img.pixels.min() >= 0.0 and img.pixels.max() <= 1.0
    assert img.pixels.max() == 1.0  # non-constant input spans the full range


def test_spectrogram_constant_input_all_zero():
    clip = AudioClip(np.zeros(16000), 16000)
    img = compute_spectrogram(clip, FrameConfig())
    assert np.array_equal(img.pixels, np.zeros((224, 224)))


def test_frame_config_validation():
    with pytest.raises(ValueError):
        FrameConfig(hop_ms=30.0, frame_len_ms=25.0)
    with pytest.raises(ValueError):
        FrameConfig(n_mfcc=50, n_mels=40)
    with pytest.raises(ValueError):
        FrameConfig(log_floor=0.0)


def test_filterbank_type_rejects_negative():
    with pytest.raises(ValueError):
        MelFilterbank(np.array([[0.5, -0.1]]))
