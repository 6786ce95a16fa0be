"""Mixture-of-experts feature selection: gate weights respond to the input,
every expert contributes (dense mixing), and the three modality mixtures
are fully independent of each other.
"""

import numpy as np

from motas.encoders import Dims, synth_embeddings
from motas.moe_selector import MoEModalityLayer, gate, moe_apply_all, moe_forward
from motas.tensor_grad import Rng, constant

dims = Dims(d_w=16, d_m=12, d_s=14, d_t=10, d_e=8)
rng = Rng(21)
layers = {
    m: MoEModalityLayer.create(m, dims.of(m), dims.d_e, k=3, hidden=16, rng=rng)
    for m in ("mfcc", "spec", "text")
}

bundle = synth_embeddings(3, "AD", separation=4.0, dims=dims)
print("gate weights per modality (sum to 1, all positive):")
for name, vec in (("mfcc", bundle.x_m), ("spec", bundle.x_s), ("text", bundle.x_t)):
    w = gate(constant(vec), layers[name].gating).data
    print(f"  {name:5s}: {np.array2string(w, precision=3)}  sum={w.sum():.12f}")

m_out, s_out, t_out = moe_apply_all(bundle, layers)
print(f"\nmixture outputs: mfcc {m_out.data.shape}, spec {s_out.data.shape}, text {t_out.data.shape}")

# Independence: perturbing the spectrogram embedding cannot move the others.
shifted = type(bundle)(bundle.sample_id, bundle.label, bundle.x_w,
                       bundle.x_m, bundle.x_s + 5.0, bundle.x_t, bundle.source)
m2, s2, t2 = moe_apply_all(shifted, layers)
print("perturbed spec input ->",
      f"mfcc unchanged: {np.array_equal(m_out.data, m2.data)},",
      f"text unchanged: {np.array_equal(t_out.data, t2.data)},",
      f"spec changed: {not np.array_equal(s_out.data, s2.data)}")

# Different inputs route differently.
other = synth_embeddings(99, "CN", separation=4.0, dims=dims)
w_a = gate(constant(bundle.x_t), layers["text"].gating).data
w_b = gate(constant(other.x_t), layers["text"].gating).data
print(f"\ntext gate for one AD sample: {np.array2string(w_a, precision=3)}")
print(f"text gate for one CN sample: {np.array2string(w_b, precision=3)}")

# A single-expert mixture is exactly that expert.
from motas.moe_selector import GatingParams, expert_forward
from motas.tensor_grad import parameter

single = MoEModalityLayer("text", layers["text"].experts[:1],
                          GatingParams(parameter(np.zeros((1, dims.d_t))),
                                       parameter(np.zeros(1))))
lhs = moe_forward(constant(bundle.x_t), single).data
rhs = expert_forward(constant(bundle.x_t), layers["text"].experts[0]).data
print("k=1 mixture equals its single expert:", np.allclose(lhs, rhs, atol=1e-12))
