"""Modality embeddings: a trainable bidirectional-LSTM encoder for MFCC
sequences, a patch-pooling fallback for spectrogram images, loaders for
externally produced embedding vectors, and a synthetic-bundle generator
for self-contained experiments.

The deep speech embedding (x_w) and the text embedding (x_t) have no
built-in encoder: they come from pretrained models outside this package
and are consumed through the feature cache.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .audio_dsp import IMAGE_SIZE, MfccSequence, SpectrogramImage
from .tensor_grad import (
    LstmCellParams,
    Rng,
    Tensor,
    affine,
    concat,
    constant,
    lstm_cell,
    parameter,
)

Array = np.ndarray

LABELS = ("AD", "CN")
MOE_MODALITIES = ("mfcc", "spec", "text")
ALL_MODALITIES = ("w2v", "mfcc", "spec", "text")

PATCH = 16
N_PATCHES = (IMAGE_SIZE // PATCH) ** 2  # 14 x 14 = 196


class EmbeddingLookupError(KeyError):
    """A cache row is missing or has the wrong dimension."""


@dataclass(frozen=True)
class Dims:
    """Embedding widths: the four modality inputs plus the shared
    mixture output width d_e."""

    d_w: int = 768
    d_m: int = 128
    d_s: int = 1000
    d_t: int = 1024
    d_e: int = 128

    def __post_init__(self):
        for name in ("d_w", "d_m", "d_s", "d_t", "d_e"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def of(self, modality: str) -> int:
        return {"w2v": self.d_w, "mfcc": self.d_m, "spec": self.d_s, "text": self.d_t}[modality]

    def to_dict(self) -> dict:
        return {"d_w": self.d_w, "d_m": self.d_m, "d_s": self.d_s, "d_t": self.d_t, "d_e": self.d_e}


@dataclass(frozen=True)
class EmbeddingBundle:
    """One sample's four modality vectors plus label and provenance."""

    sample_id: str
    label: str  # "AD" | "CN"
    x_w: Array
    x_m: Array
    x_s: Array
    x_t: Array
    source: str = "real"  # "real" | "synthetic"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}: got {self.label!r}")
        if self.source not in ("real", "synthetic"):
            raise ValueError(f"source must be real or synthetic: got {self.source!r}")
        for name in ("x_w", "x_m", "x_s", "x_t"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 1-D vector")
            object.__setattr__(self, name, v)

    def check_dims(self, dims: Dims) -> None:
        got = {"x_w": len(self.x_w), "x_m": len(self.x_m), "x_s": len(self.x_s), "x_t": len(self.x_t)}
        want = {"x_w": dims.d_w, "x_m": dims.d_m, "x_s": dims.d_s, "x_t": dims.d_t}
        if got != want:
            raise ValueError(f"bundle {self.sample_id}: dims {got} do not match configured {want}")

    @property
    def y(self) -> int:
        return 1 if self.label == "AD" else 0


@dataclass
class MfccEncoderParams:
    """Two stacked bidirectional LSTM layers plus a final projection.

    Layer 1 reads coefficient frames; layer 2 reads the concatenated
    forward/backward states of layer 1. The projection maps the top layer's
    concatenated final states (2 x hidden) to the output width.
    """

    layers: list[tuple[LstmCellParams, LstmCellParams]]  # (forward, backward) per layer
    proj_w: Tensor  # (out_dim, 2 * hidden)
    proj_b: Tensor  # (out_dim,)

    @property
    def hidden_size(self) -> int:
        return self.layers[0][0].hidden_size

    @property
    def out_dim(self) -> int:
        return self.proj_w.data.shape[0]

    @staticmethod
    def create(input_dim: int = 13, hidden: int = 128, out_dim: int = 128,
               rng: Rng | None = None, num_layers: int = 2) -> "MfccEncoderParams":
        rng = rng or Rng(0)
        layers = []
        d_in = input_dim
        for _ in range(num_layers):
            fwd = LstmCellParams.create(d_in, hidden, rng)
            bwd = LstmCellParams.create(d_in, hidden, rng)
            layers.append((fwd, bwd))
            d_in = 2 * hidden
        bound = 1.0 / np.sqrt(2 * hidden)
        proj_w = parameter(rng.uniform(-bound, bound, (out_dim, 2 * hidden)))
        proj_b = parameter(np.zeros(out_dim))
        return MfccEncoderParams(layers, proj_w, proj_b)

    def parameters(self, prefix: str = "encoder.mfcc") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (fwd, bwd) in enumerate(self.layers):
            out.update(fwd.parameters(f"{prefix}.layer{i}.fwd"))
            out.update(bwd.parameters(f"{prefix}.layer{i}.bwd"))
        out[f"{prefix}.proj.w"] = self.proj_w
        out[f"{prefix}.proj.b"] = self.proj_b
        return out


def _run_direction(inputs: list[Tensor], cell: LstmCellParams, reverse: bool) -> list[Tensor]:
    """Hidden states in original time order; the final state of a reversed
    run is the one aligned with t=0."""
    h = constant(np.zeros(cell.hidden_size))
    c = constant(np.zeros(cell.hidden_size))
    states: list[Tensor] = []
    order = reversed(inputs) if reverse else inputs
    for x in order:
        h, c = lstm_cell(x, h, c, cell)
        states.append(h)
    return states[::-1] if reverse else states


def encode_mfcc(seq: MfccSequence | Array, params: MfccEncoderParams) -> Tensor:
    """Fixed-length embedding of a coefficient sequence.

    The top layer's forward final state (t = T-1) and backward final state
    (t = 0) are concatenated and linearly projected. Differentiable
    end-to-end through both layers.
    """
    frames = seq.frames if isinstance(seq, MfccSequence) else np.asarray(seq, dtype=np.float64)
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ValueError("encode_mfcc needs a nonempty (T, n_mfcc) sequence")
    xs: list[Tensor] = [constant(frames[t]) for t in range(frames.shape[0])]
    final_fwd = final_bwd = None
    for li, (fwd, bwd) in enumerate(params.layers):
        states_f = _run_direction(xs, fwd, reverse=False)
        states_b = _run_direction(xs, bwd, reverse=True)
        final_fwd, final_bwd = states_f[-1], states_b[0]
        if li + 1 < len(params.layers):
            xs = [concat([f, b]) for f, b in zip(states_f, states_b)]
    return affine(params.proj_w, concat([final_fwd, final_bwd]), params.proj_b)


@dataclass
class SpectrogramEncoderParams:
    """Patch-pooling fallback image encoder: 16x16 mean pools -> linear map."""

    w: Tensor  # (out_dim, N_PATCHES)
    b: Tensor  # (out_dim,)

    @property
    def out_dim(self) -> int:
        return self.w.data.shape[0]

    @staticmethod
    def create(out_dim: int = 1000, rng: Rng | None = None) -> "SpectrogramEncoderParams":
        rng = rng or Rng(0)
        bound = 1.0 / np.sqrt(N_PATCHES)
        return SpectrogramEncoderParams(
            parameter(rng.uniform(-bound, bound, (out_dim, N_PATCHES))),
            parameter(np.zeros(out_dim)),
        )

    def parameters(self, prefix: str = "encoder.spec") -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def patch_pool(pixels: Array) -> Array:
    """Mean over each 16x16 patch, flattened row-major to N_PATCHES values."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image: got {pixels.shape}")
    side = IMAGE_SIZE // PATCH
    return pixels.reshape(side, PATCH, side, PATCH).mean(axis=(1, 3)).reshape(-1)


def encode_spectrogram_fallback(img: SpectrogramImage | Array, params: SpectrogramEncoderParams) -> Tensor:
    pixels = img.pixels if isinstance(img, SpectrogramImage) else np.asarray(img, dtype=np.float64)
    pooled = constant(patch_pool(pixels))
    return affine(params.w, pooled, params.b)


def load_external_embedding(cache: Mapping[str, Array], sample_id: str, expected_dim: int) -> Array:
    """Fetch one stored vector, verifying its dimension.

    Both failure modes are fatal and name the offending id.
    """
    if sample_id not in cache:
        raise EmbeddingLookupError(f"missing embedding for id '{sample_id}'")
    vec = np.asarray(cache[sample_id])
    if vec.shape != (expected_dim,):
        raise EmbeddingLookupError(
            f"dimension mismatch for id '{sample_id}': cache has {vec.shape[0]}, expected {expected_dim}"
        )
    return vec


DIRECTION_SEED = 1813


def _class_direction(modality: str, dim: int, direction_seed: int) -> Array:
    """Fixed unit vector per modality along which the two classes separate."""
    rng = Rng([direction_seed, zlib.crc32(modality.encode())])
    u = rng.normal(dim)
    return u / np.linalg.norm(u)


def synth_embeddings(seed: int | Sequence[int], label: str, separation: float | Mapping[str, float],
                     dims: Dims, direction_seed: int = DIRECTION_SEED,
                     source: str = "synthetic", sample_id: str | None = None) -> EmbeddingBundle:
    """Draw one bundle from per-modality spherical Gaussians.

    Class means sit at +/- separation/2 along a fixed seeded direction, so
    separation 0 makes the classes indistinguishable. `separation` may be a
    single value or a per-modality mapping (missing modalities get 0).
    """
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}")
    seed_key = (int(seed),) if isinstance(seed, (int, np.integer)) else tuple(int(s) for s in seed)

    def sep_of(modality: str) -> float:
        if isinstance(separation, Mapping):
            return float(separation.get(modality, 0.0))
        return float(separation)

    sign = 1.0 if label == "AD" else -1.0
    vecs = {}
    for modality in ALL_MODALITIES:
        dim = dims.of(modality)
        sep = sep_of(modality)
        if sep < 0:
            raise ValueError("separation must be nonnegative")
        u = _class_direction(modality, dim, direction_seed)
        noise = Rng(seed_key + (zlib.crc32(modality.encode()),)).normal(dim)
        vecs[modality] = sign * (sep / 2.0) * u + noise
    return EmbeddingBundle(
        sample_id=sample_id or "synth-" + "-".join(str(s) for s in seed_key),
        label=label,
        x_w=vecs["w2v"], x_m=vecs["mfcc"], x_s=vecs["spec"], x_t=vecs["text"],
        source=source,
    )
