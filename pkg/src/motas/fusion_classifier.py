"""Late fusion and binary classification.

Concatenates the three mixture outputs with the untouched deep speech
embedding in a fixed layout, classifies with a three-layer MLP (single
sigmoid logit), and sums per-sample binary cross-entropy over a batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .audio_dsp import MfccSequence, SpectrogramImage
from .encoders import (
    Dims,
    EmbeddingBundle,
    MfccEncoderParams,
    SpectrogramEncoderParams,
    encode_mfcc,
    encode_spectrogram_fallback,
)
from .moe_selector import LinearProjection, MoEModalityLayer
from .tensor_grad import (
    Rng,
    Tensor,
    affine,
    bce_loss,
    concat,
    constant,
    dropout,
    parameter,
    relu,
    sigmoid,
)

Array = np.ndarray

# Fusion layout is fixed: [mfcc | spec | text | w].
FUSION_ORDER = ("mfcc", "spec", "text", "w2v")


def fusion_slices(d_e: int, d_w: int) -> dict[str, slice]:
    """Offsets of each block inside a fused vector."""
    return {
        "mfcc": slice(0, d_e),
        "spec": slice(d_e, 2 * d_e),
        "text": slice(2 * d_e, 3 * d_e),
        "w2v": slice(3 * d_e, 3 * d_e + d_w),
    }


def fuse(m: Tensor, s: Tensor, t: Tensor, w: Tensor) -> Tensor:
    """Concatenate [mfcc | spec | text | w]; w passes through untransformed."""
    d_e = m.data.shape[0]
    if s.data.shape != (d_e,) or t.data.shape != (d_e,):
        raise ValueError(
            f"mixture outputs must share one width: got {m.shape}, {s.shape}, {t.shape}"
        )
    if w.data.ndim != 1:
        raise ValueError("deep speech embedding must be a vector")
    return concat([m, s, t, w])


@dataclass
class MlpParams:
    """Three fully connected layers with ReLU; dropout sits between the
    second ReLU and the output layer; sigmoid on the final logit."""

    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor
    fc3_w: Tensor  # (1, h2)
    fc3_b: Tensor  # (1,)
    dropout_p: float = 0.3

    @property
    def in_dim(self) -> int:
        return self.fc1_w.data.shape[1]

    @staticmethod
    def create(in_dim: int, h1: int = 256, h2: int = 64, dropout_p: float = 0.3,
               rng: Rng | None = None) -> "MlpParams":
        if not 0.0 <= dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1): got {dropout_p}")
        rng = rng or Rng(0)

        def lin(fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
            bound = 1.0 / np.sqrt(fan_in)
            return (parameter(rng.uniform(-bound, bound, (fan_out, fan_in))),
                    parameter(np.zeros(fan_out)))

        fc1_w, fc1_b = lin(in_dim, h1)
        fc2_w, fc2_b = lin(h1, h2)
        fc3_w, fc3_b = lin(h2, 1)
        return MlpParams(fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b, dropout_p)

    def parameters(self, prefix: str = "mlp") -> dict[str, Tensor]:
        return {
            f"{prefix}.fc1.w": self.fc1_w, f"{prefix}.fc1.b": self.fc1_b,
            f"{prefix}.fc2.w": self.fc2_w, f"{prefix}.fc2.b": self.fc2_b,
            f"{prefix}.fc3.w": self.fc3_w, f"{prefix}.fc3.b": self.fc3_b,
        }


def mlp_forward(x: Tensor, params: MlpParams, training: bool = False,
                rng: Rng | None = None) -> Tensor:
    """Probability of the positive class as a (1,)-shaped tensor.

    sigmoid(FC3(Dropout(ReLU(FC2(ReLU(FC1(x))))))); dropout is active only
    in training mode. With inverted dropout, scaling before or after the
    ReLU is the same operation, since ReLU commutes with nonnegative masks.
    """
    if x.data.shape != (params.in_dim,):
        raise ValueError(f"classifier expects input of dim {params.in_dim}: got {x.shape}")
    h = relu(affine(params.fc1_w, x, params.fc1_b))
    h = relu(affine(params.fc2_w, h, params.fc2_b))
    h = dropout(h, params.dropout_p, training, rng)
    return sigmoid(affine(params.fc3_w, h, params.fc3_b))


def predict(prob: float, threshold: float = 0.5) -> int:
    """1 (AD) iff prob >= threshold; the boundary goes to the positive class."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"probability out of range: {prob}")
    return 1 if prob >= threshold else 0


@dataclass(frozen=True)
class SampleFeatures:
    """Model input for one sample: per modality either a ready embedding
    vector or the raw feature an in-graph encoder consumes."""

    sample_id: str
    label: str
    x_w: Array
    mfcc: Union[Array, MfccSequence]
    spec: Union[Array, SpectrogramImage]
    text: Array
    subject: str | None = None

    @staticmethod
    def from_bundle(b: EmbeddingBundle, subject: str | None = None) -> "SampleFeatures":
        return SampleFeatures(b.sample_id, b.label, b.x_w, b.x_m, b.x_s, b.x_t,
                              subject=subject or b.sample_id)

    @property
    def y(self) -> int:
        return 1 if self.label == "AD" else 0


Compressor = Union[MoEModalityLayer, LinearProjection]


@dataclass
class ClassifierModel:
    """Full model: per-modality compressors, optional in-graph feature
    encoders, and the fusion MLP."""

    dims: Dims
    compressors: dict[str, Compressor]
    mlp: MlpParams
    mfcc_encoder: MfccEncoderParams | None = None
    spec_encoder: SpectrogramEncoderParams | None = None
    threshold: float = 0.5

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for m in ("mfcc", "spec", "text"):
            out.update(self.compressors[m].parameters())
        out.update(self.mlp.parameters())
        if self.mfcc_encoder is not None:
            out.update(self.mfcc_encoder.parameters())
        if self.spec_encoder is not None:
            out.update(self.spec_encoder.parameters())
        return out

    def _modality_tensor(self, sample: SampleFeatures, modality: str) -> Tensor:
        raw = getattr(sample, "mfcc" if modality == "mfcc" else "spec") \
            if modality in ("mfcc", "spec") else sample.text
        if modality == "mfcc" and isinstance(raw, MfccSequence):
            if self.mfcc_encoder is None:
                raise ValueError("sample carries an MFCC sequence but the model has no encoder")
            return encode_mfcc(raw, self.mfcc_encoder)
        if modality == "spec" and isinstance(raw, SpectrogramImage):
            if self.spec_encoder is None:
                raise ValueError("sample carries a spectrogram image but the model has no encoder")
            return encode_spectrogram_fallback(raw, self.spec_encoder)
        return constant(np.asarray(raw, dtype=np.float64))

    def forward(self, sample: SampleFeatures | EmbeddingBundle, training: bool = False,
                rng: Rng | None = None) -> Tensor:
        """Positive-class probability for one sample, as a (1,) tensor."""
        if isinstance(sample, EmbeddingBundle):
            sample = SampleFeatures.from_bundle(sample)
        parts = []
        for modality in ("mfcc", "spec", "text"):
            x = self._modality_tensor(sample, modality)
            parts.append(self.compressors[modality].forward(x))
        fused = fuse(parts[0], parts[1], parts[2], constant(sample.x_w))
        return mlp_forward(fused, self.mlp, training=training, rng=rng)

    def predict_proba(self, sample: SampleFeatures | EmbeddingBundle) -> float:
        return float(self.forward(sample, training=False).data[0])


def loss_batch(bundles: Sequence[SampleFeatures | EmbeddingBundle], model: ClassifierModel,
               training: bool = True, rng: Rng | None = None) -> Tensor:
    """Summed (not averaged) binary cross-entropy over a batch.

    The sum form makes the loss additive over a batch partition; gradients
    reach every trainable parameter, including in-graph encoders.
    """
    if len(bundles) == 0:
        raise ValueError("loss over an empty batch")
    probs = concat([model.forward(b, training=training, rng=rng) for b in bundles])
    labels = np.array([b.y for b in bundles], dtype=np.float64)
    return bce_loss(probs, labels)
