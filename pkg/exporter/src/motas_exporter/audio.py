"""Audio loading and the mel-image preprocessing used by image encoders."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io.wavfile

IMAGE_SIZE = 224


class AudioReadError(ValueError):
    pass


def load_audio(path: str | Path) -> tuple[np.ndarray, int]:
    """Mono float64 samples in [-1, 1] plus the sample rate."""
    try:
        rate, data = scipy.io.wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises assorted ValueErrors
        raise AudioReadError(f"{path}: {exc}") from exc
    samples = np.asarray(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.dtype == np.int16:
        samples = samples.astype(np.float64) / 32768.0
    elif samples.dtype == np.int32:
        samples = samples.astype(np.float64) / 2147483648.0
    else:
        samples = samples.astype(np.float64)
    if samples.size == 0:
        raise AudioReadError(f"{path}: empty audio")
    return samples, int(rate)


def split_windows(samples: np.ndarray, rate: int, seconds: float = 5.0) -> list[np.ndarray]:
    """Consecutive fixed-length windows, the last zero-padded."""
    target = int(round(seconds * rate))
    out = []
    for start in range(0, len(samples), target):
        window = samples[start:start + target]
        if len(window) < target:
            window = np.concatenate([window, np.zeros(target - len(window))])
        out.append(window)
    return out


def mel_image(samples: np.ndarray, rate: int, n_mels: int = 40,
              frame_ms: float = 25.0, hop_ms: float = 10.0) -> np.ndarray:
    """Square log-mel image in [0, 1] for image-style encoders."""
    frame_len = int(round(frame_ms * rate / 1000.0))
    hop = int(round(hop_ms * rate / 1000.0))
    if len(samples) < frame_len:
        samples = np.concatenate([samples, np.zeros(frame_len - len(samples))])
    n_fft = 1
    while n_fft < frame_len:
        n_fft *= 2
    frames = np.lib.stride_tricks.sliding_window_view(samples, frame_len)[::hop]
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(frame_len) / (frame_len - 1))
    spec = np.fft.rfft(frames * window, n=n_fft, axis=1)
    power = spec.real**2 + spec.imag**2

    freqs = np.arange(n_fft // 2 + 1) * (rate / n_fft)
    mel_pts = np.linspace(0.0, 2595.0 * np.log10(1.0 + (rate / 2) / 700.0), n_mels + 2)
    hz = 700.0 * (10.0 ** (mel_pts / 2595.0) - 1.0)
    fb = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        rising = (freqs - hz[m]) / (hz[m + 1] - hz[m])
        falling = (hz[m + 2] - freqs) / (hz[m + 2] - hz[m + 1])
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    log_mel = np.log(np.maximum(power @ fb.T, 1e-10)).T  # (n_mels, T)

    in_h, in_w = log_mel.shape
    rows = np.linspace(0, in_h - 1, IMAGE_SIZE) if in_h > 1 else np.zeros(IMAGE_SIZE)
    cols = np.linspace(0, in_w - 1, IMAGE_SIZE) if in_w > 1 else np.zeros(IMAGE_SIZE)
    r0, c0 = np.floor(rows).astype(int), np.floor(cols).astype(int)
    r1, c1 = np.minimum(r0 + 1, in_h - 1), np.minimum(c0 + 1, in_w - 1)
    fr, fc = (rows - r0)[:, None], (cols - c0)[None, :]
    top = log_mel[np.ix_(r0, c0)] * (1 - fc) + log_mel[np.ix_(r0, c1)] * fc
    bot = log_mel[np.ix_(r1, c0)] * (1 - fc) + log_mel[np.ix_(r1, c1)] * fc
    img = top * (1 - fr) + bot * fr
    lo, hi = img.min(), img.max()
    return np.zeros_like(img) if hi - lo <= 0 else (img - lo) / (hi - lo)
