"""Per-modality mixture-of-experts feature selection.

Each of the three mixture modalities (mfcc, spec, text) gets its own k
expert networks and its own softmax gating network; the layer output is the
gate-weighted sum of expert outputs. Gating is dense: every expert is
evaluated and mixed, with no top-k sparsification and no auxiliary
load-balancing loss. The deep speech embedding bypasses selection entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import EmbeddingBundle, MOE_MODALITIES
from .tensor_grad import Rng, Tensor, affine, constant, parameter, relu, smul, softmax, tslice

Array = np.ndarray

DEFAULT_K = 3
DEFAULT_EXPERT_HIDDEN = 64


@dataclass
class ExpertParams:
    """One-hidden-layer expert: d_x -> hidden (ReLU) -> d_e."""

    w1: Tensor  # (hidden, d_x)
    b1: Tensor  # (hidden,)
    w2: Tensor  # (d_e, hidden)
    b2: Tensor  # (d_e,)

    @property
    def in_dim(self) -> int:
        return self.w1.data.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.data.shape[0]

    @staticmethod
    def create(d_x: int, hidden: int, d_e: int, rng: Rng) -> "ExpertParams":
        b_in = 1.0 / np.sqrt(d_x)
        b_hid = 1.0 / np.sqrt(hidden)
        return ExpertParams(
            parameter(rng.uniform(-b_in, b_in, (hidden, d_x))),
            parameter(np.zeros(hidden)),
            parameter(rng.uniform(-b_hid, b_hid, (d_e, hidden))),
            parameter(np.zeros(d_e)),
        )

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
                f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}


@dataclass
class GatingParams:
    """Linear gate logits over k experts for one modality."""

    w_g: Tensor  # (k, d_x)
    b_g: Tensor  # (k,)

    @property
    def k(self) -> int:
        return self.w_g.data.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w_g.data.shape[1]

    @staticmethod
    def create(d_x: int, k: int, rng: Rng) -> "GatingParams":
        if k < 1:
            raise ValueError(f"need at least one expert: got k={k}")
        bound = 1.0 / np.sqrt(d_x)
        return GatingParams(parameter(rng.uniform(-bound, bound, (k, d_x))), parameter(np.zeros(k)))

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w_g, f"{prefix}.b": self.b_g}


def expert_forward(x: Tensor, e: ExpertParams) -> Tensor:
    if x.data.shape != (e.in_dim,):
        raise ValueError(f"expert expects input of dim {e.in_dim}: got {x.shape}")
    return affine(e.w2, relu(affine(e.w1, x, e.b1)), e.b2)


def gate(x: Tensor, g: GatingParams) -> Tensor:
    """Softmax weights over experts; strictly positive, summing to one."""
    if x.data.shape != (g.in_dim,):
        raise ValueError(f"gate expects input of dim {g.in_dim}: got {x.shape}")
    return softmax(affine(g.w_g, x, g.b_g))


@dataclass
class MoEModalityLayer:
    """k experts plus one gate for a single modality."""

    modality: str  # "mfcc" | "spec" | "text"
    experts: list[ExpertParams]
    gating: GatingParams

    def __post_init__(self):
        if self.modality not in MOE_MODALITIES:
            raise ValueError(f"modality must be one of {MOE_MODALITIES}: got {self.modality!r}")
        if len(self.experts) != self.gating.k:
            raise ValueError(f"{len(self.experts)} experts but gate has {self.gating.k} rows")
        dims = {(e.in_dim, e.out_dim) for e in self.experts}
        if len(dims) != 1:
            raise ValueError("all experts of a modality must share (d_x, d_e)")

    @property
    def k(self) -> int:
        return len(self.experts)

    @property
    def in_dim(self) -> int:
        return self.experts[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.experts[0].out_dim

    @staticmethod
    def create(modality: str, d_x: int, d_e: int, k: int = DEFAULT_K,
               hidden: int = DEFAULT_EXPERT_HIDDEN, rng: Rng | None = None) -> "MoEModalityLayer":
        rng = rng or Rng(0)
        experts = [ExpertParams.create(d_x, hidden, d_e, rng) for _ in range(k)]
        return MoEModalityLayer(modality, experts, GatingParams.create(d_x, k, rng))

    def parameters(self, prefix: str = "moe") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, e in enumerate(self.experts):
            out.update(e.parameters(f"{prefix}.{self.modality}.expert{i}"))
        out.update(self.gating.parameters(f"{prefix}.{self.modality}.gate"))
        return out

    def forward(self, x: Tensor) -> Tensor:
        return moe_forward(x, self)


@dataclass
class LinearProjection:
    """Selection-off baseline: one seeded linear map d_x -> d_e per modality."""

    modality: str
    w: Tensor
    b: Tensor

    @property
    def in_dim(self) -> int:
        return self.w.data.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.data.shape[0]

    @staticmethod
    def create(modality: str, d_x: int, d_e: int, rng: Rng | None = None) -> "LinearProjection":
        rng = rng or Rng(0)
        bound = 1.0 / np.sqrt(d_x)
        return LinearProjection(modality, parameter(rng.uniform(-bound, bound, (d_e, d_x))),
                                parameter(np.zeros(d_e)))

    def parameters(self, prefix: str = "moe") -> dict[str, Tensor]:
        return {f"{prefix}.{self.modality}.proj.w": self.w, f"{prefix}.{self.modality}.proj.b": self.b}

    def forward(self, x: Tensor) -> Tensor:
        if x.data.shape != (self.in_dim,):
            raise ValueError(f"projection expects input of dim {self.in_dim}: got {x.shape}")
        return affine(self.w, x, self.b)


def moe_forward(x: Tensor, layer: MoEModalityLayer) -> Tensor:
    """Gate-weighted sum of expert outputs; gradients flow through both."""
    if x.data.shape != (layer.in_dim,):
        raise ValueError(
            f"{layer.modality} layer expects input of dim {layer.in_dim}: got {x.shape}"
        )
    w = gate(x, layer.gating)
    out: Tensor | None = None
    for i, e in enumerate(layer.experts):
        term = smul(tslice(w, i, i + 1), expert_forward(x, e))
        out = term if out is None else out + term
    return out


def moe_apply_all(bundle: EmbeddingBundle,
                  layers: dict[str, MoEModalityLayer]) -> tuple[Tensor, Tensor, Tensor]:
    """Run the three modality mixtures independently on one bundle.

    Returns (mfcc, spec, text) outputs; the deep speech embedding is not
    touched here. Any single modality mismatch aborts the whole call.
    """
    missing = [m for m in MOE_MODALITIES if m not in layers]
    if missing:
        raise ValueError(f"missing mixture layers for: {missing}")
    inputs = {"mfcc": bundle.x_m, "spec": bundle.x_s, "text": bundle.x_t}
    for m in MOE_MODALITIES:
        if layers[m].modality != m:
            raise ValueError(f"layer registered under '{m}' is tagged '{layers[m].modality}'")
        if inputs[m].shape != (layers[m].in_dim,):
            raise ValueError(
                f"bundle {bundle.sample_id}: {m} vector has dim {inputs[m].shape[0]}, "
                f"layer expects {layers[m].in_dim}"
            )
    return tuple(moe_forward(constant(inputs[m]), layers[m]) for m in MOE_MODALITIES)
