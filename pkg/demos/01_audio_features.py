"""Audio front end: decode a WAV, window it to 5-second segments, and turn
each segment into an MFCC sequence and a log-mel spectrogram image.

Writes a throwaway WAV into a temp dir so the demo is self-contained.
"""

import tempfile
import wave
from pathlib import Path

import numpy as np

from motas.audio_dsp import FrameConfig, compute_mfcc, compute_spectrogram, load_wav, pad_or_split

rng = np.random.default_rng(0)
workdir = Path(tempfile.mkdtemp(prefix="motas-demo-"))

# A 7-second clip: a 220 Hz tone that decays, plus noise.
rate = 16000
t = np.arange(7 * rate) / rate
samples = 0.6 * np.sin(2 * np.pi * 220 * t) * np.exp(-t / 4) + 0.05 * rng.normal(size=t.size)
wav_path = workdir / "tone.wav"
with wave.open(str(wav_path), "wb") as w:
    w.setnchannels(1)
    w.setsampwidth(2)
    w.setframerate(rate)
    w.writeframes((np.clip(samples, -1, 1) * 32767).astype("<i2").tobytes())

clip = load_wav(wav_path)
print(f"loaded {clip.duration_s:.1f}s at {clip.sample_rate} Hz "
      f"({len(clip.samples)} samples, peak {np.max(np.abs(clip.samples)):.3f})")

segments = pad_or_split(clip, target_s=5.0)
print(f"split into {len(segments)} five-second windows "
      f"(last one zero-padded: {np.sum(segments[-1].samples == 0.0)} zeros)")

cfg = FrameConfig()  # 25 ms frames, 10 ms hop, 40 mel filters, 13 coefficients
for i, seg in enumerate(segments):
    seq = compute_mfcc(seg, cfg)
    img = compute_spectrogram(seg, cfg)
    print(f"segment {i}: mfcc {seq.frames.shape}, "
          f"c0 range [{seq.frames[:, 0].min():.2f}, {seq.frames[:, 0].max():.2f}], "
          f"image {img.pixels.shape} in [{img.pixels.min():.2f}, {img.pixels.max():.2f}]")

print(f"\nscratch files in {workdir}")
