"""Gradient-engine tests: hand-computed values, finite-difference oracles,
and the determinism/simplex properties the rest of the stack relies on."""

import math

import numpy as np
import pytest

from motas import tensor_grad as tg
from motas.tensor_grad import (
    AdamState,
    LstmCellParams,
    Rng,
    Tensor,
    adam_step,
    affine,
    bce_loss,
    concat,
    constant,
    dropout,
    grad_check,
    lstm_cell,
    matmul,
    mul,
    parameter,
    relu,
    sigmoid,
    smul,
    softmax,
    tanh,
    tslice,
    tsum,
)


def test_matmul_identity():
    a = constant([[1.0, 2.0], [3.0, 4.0]])
    eye = constant(np.eye(2))
    assert np.array_equal(matmul(a, eye).data, a.data)


def test_matmul_hand_value():
    a = constant([[1.0, 2.0], [3.0, 4.0]])
    b = constant([[1.0], [1.0]])
    assert np.array_equal(matmul(a, b).data, [[3.0], [7.0]])


def test_matmul_zero():
    z = constant(np.zeros((2, 3)))
    b = constant(np.arange(12.0).reshape(3, 4))
    assert np.array_equal(matmul(z, b).data, np.zeros((2, 4)))


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        matmul(constant(np.zeros((2, 3))), constant(np.zeros((2, 3))))


def test_softmax_uniform():
    out = softmax(constant([0.0, 0.0, 0.0])).data
    assert np.allclose(out, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_softmax_reference_value():
    # Independent scalar evaluation of exp(i)/sum(exp([1,2,3])).
    out = softmax(constant([1.0, 2.0, 3.0])).data
    expected = [0.09003057, 0.24472847, 0.66524096]
    assert np.allclose(out, expected, atol=1e-7)


def test_softmax_shift_invariance_bitwise():
    # Inputs on a dyadic grid so x + c carries no rounding: any bit difference
    # would then have to come from the max-subtraction path itself.
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        x = np.round(rng.uniform(-1e4, 1e4, n) * 65536.0) / 65536.0
        c = float(np.round(rng.uniform(-1e4, 1e4) * 65536.0) / 65536.0)
        a = softmax(constant(x)).data
        b = softmax(constant(x + c)).data
        assert np.array_equal(a, b)


def test_softmax_simplex_property():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        x = rng.uniform(-1e4, 1e4, n)
        y = softmax(constant(x)).data
        assert np.all(y > 0)
        assert abs(y.sum() - 1.0) < 1e-12
        assert int(np.argmax(y)) == int(np.argmax(x))


def test_bce_half_probabilities():
    n = 8
    yhat = constant(np.full(n, 0.5))
    y = np.array([1, 0, 1, 0, 1, 1, 0, 0], dtype=float)
    assert math.isclose(float(bce_loss(yhat, y).data), n * math.log(2), rel_tol=1e-12)


def test_bce_perfect_prediction():
    y = np.array([1.0, 0.0, 1.0])
    loss = float(bce_loss(constant(y), y).data)
    assert loss <= 3 * -math.log(1 - 1e-7) + 1e-12


def test_bce_scalar_value():
    loss = float(bce_loss(constant([0.8]), [1.0]).data)
    assert math.isclose(loss, -math.log(0.8), rel_tol=1e-12)


def test_bce_length_mismatch():
    with pytest.raises(ValueError):
        bce_loss(constant([0.5, 0.5]), [1.0])


def test_dropout_p_zero_identity():
    x = constant([1.0, -2.0, 3.0])
    out = dropout(x, 0.0, training=True, rng=Rng(0))
    assert out is x


def test_dropout_inference_identity():
    x = constant([1.0, -2.0, 3.0])
    assert dropout(x, 0.9, training=False) is x


def test_dropout_sample_mean():
    x = constant(np.ones(100_000))
    out = dropout(x, 0.5, training=True, rng=Rng(123))
    assert 0.98 <= out.data.mean() <= 1.02


def test_dropout_invalid_p():
    with pytest.raises(ValueError):
        dropout(constant([1.0]), 1.0, training=True, rng=Rng(0))


def test_lstm_all_zero():
    p = LstmCellParams(parameter(np.zeros((8, 3))), parameter(np.zeros((8, 2))), parameter(np.zeros(8)))
    h, c = lstm_cell(constant(np.zeros(3)), constant(np.zeros(2)), constant(np.zeros(2)), p)
    assert np.array_equal(h.data, np.zeros(2))
    assert np.array_equal(c.data, np.zeros(2))


def test_lstm_saturated_gates_keep_cell():
    h = 3
    b = np.zeros(4 * h)
    b[0:h] = -10.0   # input gate shut
    b[h:2 * h] = 10.0  # forget gate open
    p = LstmCellParams(parameter(np.zeros((4 * h, 2))), parameter(np.zeros((4 * h, h))), parameter(b))
    c_prev = constant([0.5, -0.25, 0.125])
    _, c_t = lstm_cell(constant(np.zeros(2)), constant(np.zeros(h)), c_prev, p)
    assert np.max(np.abs(c_t.data - c_prev.data)) < 1e-4


def test_lstm_grad_check():
    rng = Rng(7)
    p = LstmCellParams.create(3, 4, rng)
    xs = [constant(rng.normal(3)) for _ in range(3)]
    h0 = constant(rng.normal(4, scale=0.1))
    c0 = constant(rng.normal(4, scale=0.1))

    def f():
        h, c = h0, c0
        for x in xs:
            h, c = lstm_cell(x, h, c, p)
        return tsum(mul(h, h))

    params = list(p.parameters("cell").values())
    assert grad_check(f, params) < 1e-4


def test_adam_zero_gradient_noop():
    p = parameter([1.0, -2.0])
    state = AdamState.for_params([p], lr=0.1)
    before = p.data.copy()
    adam_step([p], [np.zeros(2)], state)
    assert np.array_equal(p.data, before)
    assert state.t == 1


def test_adam_first_step_is_signed_lr():
    p = parameter([1.0, -1.0, 2.5])
    g = np.array([0.3, -4.0, 1e-3])
    state = AdamState.for_params([p], lr=0.05)
    before = p.data.copy()
    adam_step([p], [g], state)
    delta = p.data - before
    # First bias-corrected step is -lr * g / (|g| + eps) ≈ -lr * sign(g).
    assert np.allclose(delta, -0.05 * np.sign(g), atol=1e-5)


def test_adam_constant_gradient_monotone():
    p = parameter([0.0])
    g = np.array([1.0])
    state = AdamState.for_params([p], lr=0.01)
    history = [float(p.data[0])]
    for _ in range(50):
        adam_step([p], [g], state)
        history.append(float(p.data[0]))
    diffs = np.diff(history)
    assert np.all(diffs < 0)


def test_grad_check_quadratic():
    theta = parameter([1.5, -2.0, 0.5])

    def f():
        return tsum(mul(theta, theta))

    assert grad_check(f, [theta]) < 1e-7


def test_grad_check_linear_exact():
    theta = parameter([0.3, 0.7])
    w = np.array([2.0, -3.0])

    def f():
        return tsum(mul(theta, constant(w)))

    assert grad_check(f, [theta]) < 1e-8


def test_relu_zero_gradient_on_negative_side():
    x = parameter([-1.0, -0.5, 0.0, 0.5, 2.0])
    out = tsum(relu(x))
    out.backward()
    assert np.array_equal(x.grad, [0.0, 0.0, 0.0, 1.0, 1.0])


@pytest.mark.parametrize("case", ["add", "mul", "matmul", "affine", "relu", "sigmoid",
                                  "tanh", "softmax", "concat_slice", "smul", "dropout_fixed"])
def test_layer_gradients_match_finite_differences(case):
    rng = Rng([42, hash(case) % 2**31])
    if case == "add":
        a, b = parameter(rng.normal(5)), parameter(rng.normal(5))
        f = lambda: tsum(mul(a + b, a + b))
        params = [a, b]
    elif case == "mul":
        a, b = parameter(rng.normal(6)), parameter(rng.normal(6))
        f = lambda: tsum(mul(a, b))
        params = [a, b]
    elif case == "matmul":
        a, b = parameter(rng.normal((3, 4))), parameter(rng.normal((4, 2)))
        f = lambda: tsum(mul(matmul(a, b), matmul(a, b)))
        params = [a, b]
    elif case == "affine":
        w, b = parameter(rng.normal((4, 3))), parameter(rng.normal(4))
        x = constant(rng.normal(3))
        f = lambda: tsum(mul(affine(w, x, b), affine(w, x, b)))
        params = [w, b]
    elif case == "relu":
        # Keep values away from the kink so finite differences are clean.
        a = parameter(rng.normal(8) + np.where(rng.normal(8) > 0, 1.0, -1.0))
        f = lambda: tsum(mul(relu(a), relu(a)))
        params = [a]
    elif case == "sigmoid":
        a = parameter(rng.normal(7))
        f = lambda: tsum(mul(sigmoid(a), sigmoid(a)))
        params = [a]
    elif case == "tanh":
        a = parameter(rng.normal(7))
        f = lambda: tsum(mul(tanh(a), tanh(a)))
        params = [a]
    elif case == "softmax":
        a = parameter(rng.normal(6))
        w = constant(rng.normal(6))
        f = lambda: tsum(mul(softmax(a), w))
        params = [a]
    elif case == "concat_slice":
        a, b = parameter(rng.normal(3)), parameter(rng.normal(4))
        f = lambda: tsum(mul(tslice(concat([a, b]), 1, 6), tslice(concat([a, b]), 1, 6)))
        params = [a, b]
    elif case == "smul":
        s, v = parameter([0.7]), parameter(rng.normal(5))
        f = lambda: tsum(mul(smul(s, v), smul(s, v)))
        params = [s, v]
    else:  # dropout with a fixed mask is differentiable
        a = parameter(rng.normal(10))
        f = lambda: tsum(mul(dropout(a, 0.3, training=True, rng=Rng(99)), constant(np.ones(10))))
        params = [a]
    assert grad_check(f, params) < 1e-4


def test_rng_identical_seed_identical_stream():
    r1, r2 = Rng(2024), Rng(2024)
    assert np.array_equal(r1.normal(100), r2.normal(100))
    assert np.array_equal(r1.permutation(50), r2.permutation(50))


def test_rng_child_streams_differ():
    r = Rng(3)
    assert not np.array_equal(r.child("a").normal(20), r.child("b").normal(20))


def test_training_trajectory_bitwise_deterministic():
    def run():
        rng = Rng(31)
        w = parameter(rng.normal((4, 4), scale=0.2))
        b = parameter(np.zeros(4))
        data = [constant(rng.normal(4)) for _ in range(8)]
        state = AdamState.for_params([w, b], lr=0.01)
        for _ in range(25):
            tg.zero_grads([w, b])
            loss = None
            for x in data:
                out = tanh(affine(w, x, b))
                term = tsum(mul(out, out))
                loss = term if loss is None else loss + term
            loss.backward()
            adam_step([w, b], [w.grad, b.grad], state)
        return w.data.copy(), b.data.copy()

    w1, b1 = run()
    w2, b2 = run()
    assert np.array_equal(w1, w2)
    assert np.array_equal(b1, b2)


def test_tensor_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        Tensor(np.array([1.0, np.inf]))


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        constant([1.0, 2.0]).backward()
