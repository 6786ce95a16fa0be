"""Audio decoding, segmentation, and spectral features.

WAV decoding, zero-pad/split to fixed-length windows, Hann-windowed power
spectra, mel-filterbank MFCC sequences, and square log-mel spectrogram
images. All operations are pure functions of their inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

Array = np.ndarray

IMAGE_SIZE = 224
DEFAULT_SAMPLE_RATE = 16000


class MalformedWavError(ValueError):
    """The file is not a well-formed RIFF/WAVE container."""


class UnsupportedWavError(ValueError):
    """The WAV codec is not 16-bit integer or 32-bit float PCM."""


@dataclass(frozen=True)
class AudioClip:
    """Mono audio: float64 amplitudes in [-1, 1] at a fixed sample rate."""

    samples: Array
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive: {self.sample_rate}")
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("clip needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("clip contains non-finite samples")
        object.__setattr__(self, "samples", arr)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    """Short-time analysis settings.

    `n_fft=None` picks the smallest power of two that fits a frame. `fmax=None`
    means the Nyquist frequency of the clip being analyzed.
    """

    frame_len_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int | None = None
    n_mels: int = 40
    n_mfcc: int = 13
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-10

    def __post_init__(self):
        if not 0 < self.hop_ms <= self.frame_len_ms:
            raise ValueError(f"need 0 < hop_ms <= frame_len_ms: got {self.hop_ms}, {self.frame_len_ms}")
        if not 0 < self.n_mfcc <= self.n_mels:
            raise ValueError(f"need 0 < n_mfcc <= n_mels: got {self.n_mfcc}, {self.n_mels}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def frame_len(self, sample_rate: int) -> int:
        return int(round(self.frame_len_ms * sample_rate / 1000.0))

    def hop(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))

    def fft_size(self, sample_rate: int) -> int:
        if self.n_fft is not None:
            return self.n_fft
        n = 1
        while n < self.frame_len(sample_rate):
            n *= 2
        return n

    def band_limits(self, sample_rate: int) -> tuple[float, float]:
        fmax = sample_rate / 2.0 if self.fmax is None else self.fmax
        if not self.fmin < fmax <= sample_rate / 2.0:
            raise ValueError(f"need fmin < fmax <= sample_rate/2: got {self.fmin}, {fmax}")
        return self.fmin, fmax

    def frame_count(self, n_samples: int, sample_rate: int) -> int:
        return 1 + (n_samples - self.frame_len(sample_rate)) // self.hop(sample_rate)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filters: (n_mels, n_fft/2 + 1) nonnegative weights."""

    weights: Array

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("filterbank weights must be a matrix")
        if np.any(w < 0):
            raise ValueError("filterbank weights must be nonnegative")
        if np.any(~np.any(w > 0, axis=1)):
            raise ValueError("every mel filter needs at least one positive weight; increase n_fft")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class MfccSequence:
    """(T, n_mfcc) matrix of cepstral coefficients, one row per frame."""

    frames: Array

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError("MfccSequence needs a (T, n_mfcc) matrix with T >= 1")
        if not np.all(np.isfinite(f)):
            raise ValueError("MfccSequence contains non-finite values")
        object.__setattr__(self, "frames", f)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class SpectrogramImage:
    """224x224 log-mel image, min-max normalized into [0, 1]."""

    pixels: Array

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"spectrogram image must be {IMAGE_SIZE}x{IMAGE_SIZE}: got {p.shape}")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("spectrogram image entries must lie in [0, 1]")
        object.__setattr__(self, "pixels", p)


def load_wav(path: str | Path) -> AudioClip:
    """Decode a PCM WAV file (16-bit int or 32-bit float) to a mono clip.

    Multi-channel audio is averaged to mono; 16-bit samples are scaled by
    1/32768 so the most negative code maps to -1.0.
    """
    path = Path(path)
    raw = path.read_bytes()  # missing file raises FileNotFoundError
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise MalformedWavError(f"{path}: truncated '{chunk_id.decode('ascii', 'replace')}' chunk")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise MalformedWavError(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise MalformedWavError(f"{path}: missing fmt or data chunk")

    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if audio_format == 0xFFFE and len(data) >= 0:  # WAVE_FORMAT_EXTENSIBLE: real code sits in the GUID
        raise UnsupportedWavError(f"{path}: extensible WAV format not supported")
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedWavError(
            f"{path}: unsupported codec (format {audio_format}, {bits}-bit); "
            "need 16-bit integer or 32-bit float PCM"
        )
    if n_channels < 1:
        raise MalformedWavError(f"{path}: zero channels")
    if samples.size % n_channels != 0:
        raise MalformedWavError(f"{path}: data size not divisible by channel count")
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return AudioClip(samples, sample_rate)


def pad_or_split(clip: AudioClip, target_s: float = 5.0) -> list[AudioClip]:
    """Cut into consecutive windows of exactly target_s seconds.

    Short clips are right-padded with zeros; the final window of a long clip
    is padded the same way. Every output has target_s * sample_rate samples.
    """
    target = int(round(target_s * clip.sample_rate))
    if target < 1:
        raise ValueError("target window must hold at least one sample")
    out = []
    for start in range(0, len(clip.samples), target):
        window = clip.samples[start:start + target]
        if len(window) < target:
            window = np.concatenate([window, np.zeros(target - len(window))])
        out.append(AudioClip(window, clip.sample_rate))
    return out


def hann_window(n: int) -> Array:
    """Symmetric Hann weights w[t] = 0.5 - 0.5 cos(2πt/(n-1))."""
    if n < 2:
        raise ValueError(f"hann window needs n >= 2: got {n}")
    t = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * t / (n - 1))


def power_spectrum(frame: Array, n_fft: int) -> Array:
    """Squared DFT magnitudes at bins 0..n_fft/2 of a zero-padded frame."""
    if n_fft <= 0 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError(f"n_fft must be a power of two: got {n_fft}")
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1 or len(frame) > n_fft:
        raise ValueError(f"frame of length {frame.shape} does not fit n_fft={n_fft}")
    spec = np.fft.rfft(frame, n=n_fft)
    return (spec.real ** 2 + spec.imag ** 2)


def hz_to_mel(f: Array | float) -> Array | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: Array | float) -> Array | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float, fmax: float) -> MelFilterbank:
    """Triangular filters with peaks equally spaced on the mel scale.

    No area normalization: each triangle peaks at weight 1 at its center
    frequency and falls linearly to 0 at its neighbors' centers.
    """
    fft_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = np.asarray(mel_to_hz(mel_pts))
    weights = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        lower, center, upper = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (fft_freqs - lower) / (center - lower)
        falling = (upper - fft_freqs) / (upper - center)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
    return MelFilterbank(weights)


def _frame_signal(clip: AudioClip, cfg: FrameConfig) -> Array:
    frame_len = cfg.frame_len(clip.sample_rate)
    hop = cfg.hop(clip.sample_rate)
    if len(clip.samples) < frame_len:
        raise ValueError(f"clip of {len(clip.samples)} samples is shorter than one {frame_len}-sample frame")
    return np.lib.stride_tricks.sliding_window_view(clip.samples, frame_len)[::hop]


def _log_mel_matrix(clip: AudioClip, cfg: FrameConfig) -> Array:
    """(T, n_mels) log mel-filterbank energies of Hann-windowed frames."""
    frame_len = cfg.frame_len(clip.sample_rate)
    n_fft = cfg.fft_size(clip.sample_rate)
    if n_fft <= 0 or (n_fft & (n_fft - 1)) != 0 or n_fft < frame_len:
        raise ValueError(f"n_fft must be a power of two >= frame length: got {n_fft} < {frame_len}")
    fmin, fmax = cfg.band_limits(clip.sample_rate)
    frames = _frame_signal(clip, cfg) * hann_window(frame_len)
    spec = np.fft.rfft(frames, n=n_fft, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    fb = mel_filterbank(cfg.n_mels, n_fft, clip.sample_rate, fmin, fmax)
    mel_energy = power @ fb.weights.T
    return np.log(np.maximum(mel_energy, cfg.log_floor))


def compute_mfcc(clip: AudioClip, cfg: FrameConfig) -> MfccSequence:
    """Per frame: Hann window, power spectrum, mel energies, log with floor,
    orthonormal type-II DCT, keep the first n_mfcc coefficients."""
    log_mel = _log_mel_matrix(clip, cfg)
    coeffs = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)[:, :cfg.n_mfcc]
    return MfccSequence(np.ascontiguousarray(coeffs))


def bilinear_resize(mat: Array, out_h: int, out_w: int) -> Array:
    """Bilinear interpolation with corner alignment (equal sizes = identity)."""
    mat = np.asarray(mat, dtype=np.float64)
    in_h, in_w = mat.shape
    rows = np.linspace(0.0, in_h - 1.0, out_h) if in_h > 1 else np.zeros(out_h)
    cols = np.linspace(0.0, in_w - 1.0, out_w) if in_w > 1 else np.zeros(out_w)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = mat[np.ix_(r0, c0)] * (1 - fc) + mat[np.ix_(r0, c1)] * fc
    bottom = mat[np.ix_(r1, c0)] * (1 - fc) + mat[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bottom * fr


def compute_spectrogram(clip: AudioClip, cfg: FrameConfig) -> SpectrogramImage:
    """Log-mel matrix (mel rows x time columns) resized to 224x224, then
    min-max normalized; a constant matrix maps to the all-zeros image."""
    log_mel = _log_mel_matrix(clip, cfg).T  # (n_mels, T)
    if log_mel.max() - log_mel.min() <= 0:
        # Degenerate rule: a constant matrix (e.g. silence) maps to all zeros.
        # Checked on the source, because interpolating an exactly-constant
        # matrix can leave sub-ulp ripples that normalization would amplify.
        return SpectrogramImage(np.zeros((IMAGE_SIZE, IMAGE_SIZE)))
    img = bilinear_resize(log_mel, IMAGE_SIZE, IMAGE_SIZE)
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        return SpectrogramImage(np.zeros((IMAGE_SIZE, IMAGE_SIZE)))
    return SpectrogramImage((img - lo) / (hi - lo))
