"""Encoder tests: degenerate parameter cases, pooling arithmetic,
finite-difference oracles, and the synthetic-bundle generator's geometry."""

import numpy as np
import pytest

from motas.audio_dsp import MfccSequence
from motas.encoders import (
    Dims,
    EmbeddingLookupError,
    MfccEncoderParams,
    SpectrogramEncoderParams,
    _class_direction,
    encode_mfcc,
    encode_spectrogram_fallback,
    load_external_embedding,
    patch_pool,
    synth_embeddings,
)
from motas.tensor_grad import LstmCellParams, Rng, grad_check, mul, parameter, tsum


def zero_encoder(input_dim, hidden, out_dim, num_layers=2):
    layers = []
    d = input_dim
    for _ in range(num_layers):
        fwd = LstmCellParams(parameter(np.zeros((4 * hidden, d))),
                             parameter(np.zeros((4 * hidden, hidden))),
                             parameter(np.zeros(4 * hidden)))
        bwd = LstmCellParams(parameter(np.zeros((4 * hidden, d))),
                             parameter(np.zeros((4 * hidden, hidden))),
                             parameter(np.zeros(4 * hidden)))
        layers.append((fwd, bwd))
        d = 2 * hidden
    return MfccEncoderParams(layers, parameter(np.zeros((out_dim, 2 * hidden))),
                             parameter(np.zeros(out_dim)))


def test_encode_mfcc_zero_params_zero_output():
    params = zero_encoder(3, 4, 5)
    seq = MfccSequence(np.random.default_rng(0).normal(size=(6, 3)))
    out = encode_mfcc(seq, params)
    assert np.array_equal(out.data, np.zeros(5))


def test_encode_mfcc_single_frame():
    params = MfccEncoderParams.create(3, 4, 5, Rng(1))
    out = encode_mfcc(MfccSequence(np.array([[0.1, -0.2, 0.3]])), params)
    assert out.data.shape == (5,)
    assert np.all(np.isfinite(out.data))


def test_encode_mfcc_grad_check():
    rng = Rng(3)
    params = MfccEncoderParams.create(3, 3, 4, rng)
    frames = rng.normal((3, 3))

    def f():
        out = encode_mfcc(MfccSequence(frames), params)
        return tsum(mul(out, out))

    tensors = list(params.parameters().values())
    assert grad_check(f, tensors) < 1e-4


def test_encode_mfcc_storage_layout_invariance():
    params = MfccEncoderParams.create(4, 3, 4, Rng(5))
    frames = np.random.default_rng(2).normal(size=(5, 4))
    c_order = encode_mfcc(MfccSequence(np.ascontiguousarray(frames)), params)
    f_order = encode_mfcc(MfccSequence(np.asfortranarray(frames)), params)
    assert np.array_equal(c_order.data, f_order.data)


def test_encode_mfcc_sensitive_to_frame_order():
    params = MfccEncoderParams.create(4, 3, 4, Rng(5))
    frames = np.random.default_rng(3).normal(size=(5, 4))
    fwd = encode_mfcc(MfccSequence(frames), params)
    rev = encode_mfcc(MfccSequence(frames[::-1]), params)
    assert not np.array_equal(fwd.data, rev.data)


def test_encoder_outputs_finite_for_large_inputs():
    params = MfccEncoderParams.create(3, 4, 5, Rng(7))
    frames = np.random.default_rng(4).uniform(-100, 100, (6, 3))
    out = encode_mfcc(MfccSequence(frames), params)
    assert np.all(np.isfinite(out.data))


def test_encode_mfcc_rejects_empty():
    params = MfccEncoderParams.create(3, 4, 5, Rng(1))
    with pytest.raises(ValueError):
        encode_mfcc(np.zeros((0, 3)), params)


def test_spectrogram_fallback_zero_image_bias_only():
    params = SpectrogramEncoderParams.create(out_dim=7, rng=Rng(11))
    params.b.data[:] = np.arange(7.0)
    out = encode_spectrogram_fallback(np.zeros((224, 224)), params)
    assert np.array_equal(out.data, np.arange(7.0))


def test_patch_pool_constant_image():
    pooled = patch_pool(np.full((224, 224), 0.37))
    assert pooled.shape == (196,)
    assert np.allclose(pooled, 0.37, atol=1e-15)


def test_patch_pool_checkerboard():
    img = np.zeros((224, 224))
    for i in range(14):
        for j in range(14):
            if (i + j) % 2 == 0:
                img[i * 16:(i + 1) * 16, j * 16:(j + 1) * 16] = 1.0
    pooled = patch_pool(img)
    expected = np.array([1.0 if (i + j) % 2 == 0 else 0.0 for i in range(14) for j in range(14)])
    assert np.array_equal(pooled, expected)


def test_patch_pool_rejects_wrong_shape():
    with pytest.raises(ValueError):
        patch_pool(np.zeros((100, 224)))


def test_load_external_roundtrip_bitwise():
    vec = np.random.default_rng(6).normal(size=768).astype(np.float32)
    cache = {"sample-1": vec}
    got = load_external_embedding(cache, "sample-1", 768)
    assert np.array_equal(got, vec)


def test_load_external_missing_id():
    with pytest.raises(EmbeddingLookupError, match="sample-x"):
        load_external_embedding({}, "sample-x", 10)


def test_load_external_dim_mismatch():
    cache = {"s": np.zeros(767, dtype=np.float32)}
    with pytest.raises(EmbeddingLookupError, match="767"):
        load_external_embedding(cache, "s", 768)


SMALL = Dims(d_w=16, d_m=8, d_s=12, d_t=10, d_e=4)


def test_synth_zero_separation_classes_identical():
    a = synth_embeddings(42, "AD", 0.0, SMALL)
    b = synth_embeddings(42, "CN", 0.0, SMALL)
    assert np.array_equal(a.x_w, b.x_w)
    assert np.array_equal(a.x_m, b.x_m)
    assert np.array_equal(a.x_s, b.x_s)
    assert np.array_equal(a.x_t, b.x_t)


def test_synth_high_separation_projection_classifies():
    u = _class_direction("w2v", SMALL.d_w, 1813)
    correct = 0
    for i in range(100):
        ad = synth_embeddings(1000 + i, "AD", 10.0, SMALL)
        cn = synth_embeddings(2000 + i, "CN", 10.0, SMALL)
        correct += int(np.dot(ad.x_w, u) > 0)
        correct += int(np.dot(cn.x_w, u) < 0)
    assert correct >= 198  # >= 99% of 200 draws


def test_synth_deterministic():
    a = synth_embeddings(5, "AD", 3.0, SMALL)
    b = synth_embeddings(5, "AD", 3.0, SMALL)
    assert np.array_equal(a.x_m, b.x_m) and np.array_equal(a.x_t, b.x_t)


def test_synth_per_modality_separation():
    # Only the mfcc modality is informative; the others match across classes.
    sep = {"mfcc": 8.0}
    ad = synth_embeddings(9, "AD", sep, SMALL)
    cn = synth_embeddings(9, "CN", sep, SMALL)
    assert not np.array_equal(ad.x_m, cn.x_m)
    assert np.array_equal(ad.x_w, cn.x_w)
    assert np.array_equal(ad.x_s, cn.x_s)
    assert np.array_equal(ad.x_t, cn.x_t)


def test_synth_dims_respected():
    b = synth_embeddings(1, "CN", 1.0, SMALL)
    assert (len(b.x_w), len(b.x_m), len(b.x_s), len(b.x_t)) == (16, 8, 12, 10)
    b.check_dims(SMALL)
    with pytest.raises(ValueError):
        b.check_dims(Dims())
