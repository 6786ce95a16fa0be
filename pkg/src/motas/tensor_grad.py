"""Dense float64 tensors with reverse-mode gradients.

Provides the small layer set needed by the classifier stack (affine maps,
ReLU, softmax, sigmoid/tanh, dropout, an LSTM cell), binary cross-entropy,
the Adam optimizer, and a central-finite-difference gradient checker.
Everything is double precision and deterministic given an `Rng` seed.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Array = np.ndarray


class Rng:
    """Seeded deterministic pseudo-random stream (PCG64).

    Identical seed material yields an identical stream. `child(tag)` derives
    an independent stream from (seed, tag), so consumers can draw from named
    substreams without coupling their consumption order.
    """

    def __init__(self, seed: int | Sequence[int]):
        if isinstance(seed, (int, np.integer)):
            key: tuple[int, ...] = (int(seed),)
        else:
            key = tuple(int(s) for s in seed)
        self._key = key
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))

    @property
    def key(self) -> tuple[int, ...]:
        return self._key

    def child(self, tag: str) -> "Rng":
        return Rng(self._key + (zlib.crc32(tag.encode("utf-8")),))

    def normal(self, shape: int | tuple[int, ...] | None = None, scale: float = 1.0) -> Array:
        out = self._gen.standard_normal(shape)
        return out * scale if scale != 1.0 else out

    def uniform(self, low: float, high: float, shape: int | tuple[int, ...] | None = None) -> Array:
        return self._gen.uniform(low, high, shape)

    def random(self, shape: int | tuple[int, ...] | None = None) -> Array:
        return self._gen.random(shape)

    def integers(self, low: int, high: int) -> int:
        """One integer drawn uniformly from [low, high)."""
        return int(self._gen.integers(low, high))

    def permutation(self, n: int) -> Array:
        return self._gen.permutation(n)

    def shuffle(self, items: list) -> None:
        self._gen.shuffle(items)


class Tensor:
    """Shape-checked float64 array node in a reverse-mode graph.

    `data` is the value, `grad` the accumulated gradient (same shape, filled
    by `backward()`). Non-leaf tensors keep `(parent, pull)` pairs where
    `pull(out_grad)` maps the output gradient to that parent's gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(
        self,
        data: Array | float | Sequence[float],
        requires_grad: bool = False,
        parents: tuple[tuple["Tensor", Callable[[Array], Array]], ...] = (),
    ):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite tensor values")
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)
        # Only parents that can receive gradient are kept on the tape.
        self._parents = tuple((p, fn) for p, fn in parents if p.requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable parent."""
        if self.data.size != 1:
            raise ValueError("backward() is defined for scalar outputs only")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        # Iterative DFS: recursion would overflow on long LSTM chains.
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            g = node.grad
            if g is None:
                continue
            for parent, pull in node._parents:
                pg = pull(g)
                parent.grad = pg if parent.grad is None else parent.grad + pg

    # Convenience operators; the module-level functions are the primary API.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data: Array | Sequence[float]) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def constant(data: Array | float | Sequence[float]) -> Tensor:
    return Tensor(data)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return Tensor(a.data + b.data, parents=((a, lambda g: g), (b, lambda g: g)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return Tensor(a.data - b.data, parents=((a, lambda g: g), (b, lambda g: -g)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return Tensor(ad * bd, parents=((a, lambda g: g * bd), (b, lambda g: g * ad)))


def scale(a: Tensor, s: float) -> Tensor:
    """Product with a non-differentiable python scalar."""
    s = float(s)
    return Tensor(a.data * s, parents=((a, lambda g: g * s),))


def smul(s: Tensor, v: Tensor) -> Tensor:
    """Scalar tensor (shape () or (1,)) times vector tensor."""
    if s.data.size != 1:
        raise ValueError(f"smul scalar operand has shape {s.shape}")
    sd = float(s.data.reshape(-1)[0])
    vd = v.data

    def pull_s(g: Array) -> Array:
        return np.full_like(s.data, np.sum(g * vd))

    return Tensor(sd * vd, parents=((s, pull_s), (v, lambda g: g * sd)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix-matrix or matrix-vector product; dA = dC Bᵀ, dB = Aᵀ dC."""
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        return Tensor(
            ad @ bd,
            parents=((a, lambda g: g @ bd.T), (b, lambda g: ad.T @ g)),
        )
    if ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        return Tensor(
            ad @ bd,
            parents=((a, lambda g: np.outer(g, bd)), (b, lambda g: ad.T @ g)),
        )
    raise ValueError(f"matmul supports (m,k)@(k,n) and (m,k)@(k,): got {a.shape} @ {b.shape}")


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """Fused w @ x + b for a vector x; the workhorse of every layer here."""
    wd, xd, bd = w.data, x.data, b.data
    if wd.ndim != 2 or xd.ndim != 1 or bd.shape != (wd.shape[0],) or wd.shape[1] != xd.shape[0]:
        raise ValueError(f"affine shape mismatch: {w.shape} @ {x.shape} + {b.shape}")
    return Tensor(
        wd @ xd + bd,
        parents=(
            (w, lambda g: np.outer(g, xd)),
            (x, lambda g: wd.T @ g),
            (b, lambda g: g),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, parents=((a, lambda g: -g),))


def tsum(a: Tensor) -> Tensor:
    return Tensor(np.asarray(np.sum(a.data)), parents=((a, lambda g: np.full_like(a.data, float(g))),))


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors; gradient slices back to each part."""
    if not parts:
        raise ValueError("concat of zero tensors")
    for p in parts:
        if p.data.ndim != 1:
            raise ValueError("concat expects 1-D tensors")
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])
    out = np.concatenate([p.data for p in parts])

    def make_pull(lo: int, hi: int) -> Callable[[Array], Array]:
        return lambda g: g[lo:hi]

    parents = tuple(
        (p, make_pull(int(offsets[i]), int(offsets[i + 1]))) for i, p in enumerate(parts)
    )
    return Tensor(out, parents=parents)


def tslice(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-D tensor."""
    if a.data.ndim != 1:
        raise ValueError("tslice expects a 1-D tensor")
    n = a.data.shape[0]
    if not (0 <= start <= stop <= n):
        raise ValueError(f"slice [{start}:{stop}] out of range for length {n}")

    def pull(g: Array) -> Array:
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return full

    return Tensor(a.data[start:stop].copy(), parents=((a, pull),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient at the kink is 0
    return Tensor(np.where(mask, a.data, 0.0), parents=((a, lambda g: g * mask),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return Tensor(s, parents=((a, lambda g: g * s * (1.0 - s)),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return Tensor(t, parents=((a, lambda g: g * (1.0 - t * t)),))


def tlog(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0):
        raise FloatingPointError("log of non-positive value")
    return Tensor(np.log(x), parents=((a, lambda g: g / x),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values into [lo, hi]; gradient passes only where unclamped."""
    mask = (a.data > lo) & (a.data < hi)
    return Tensor(np.clip(a.data, lo, hi), parents=((a, lambda g: g * mask),))


SOFTMAX_LOG_FLOOR = -700.0  # exp(-700) ~ 1e-304: keeps every weight strictly positive


def softmax(x: Tensor) -> Tensor:
    """Map a 1-D tensor onto the probability simplex.

    Subtracts the max before exponentiation, so the output is invariant to
    adding a constant to every logit and never overflows. Shifted logits are
    floored at SOFTMAX_LOG_FLOOR so exp never underflows to an exact zero.
    """
    if x.data.ndim != 1 or x.data.size == 0:
        raise ValueError("softmax expects a nonempty 1-D tensor")
    shifted = np.maximum(x.data - np.max(x.data), SOFTMAX_LOG_FLOOR)
    e = np.exp(shifted)
    y = e / np.sum(e)

    def pull(g: Array) -> Array:
        return y * (g - float(np.dot(g, y)))

    return Tensor(y, parents=((x, pull),))


def dropout(x: Tensor, p: float, training: bool, rng: Rng | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p) so inference is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1): got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an Rng")
    keep = rng.random(x.data.shape) >= p
    factor = keep / (1.0 - p)
    return Tensor(x.data * factor, parents=((x, lambda g: g * factor),))


BCE_EPS = 1e-7


def bce_loss(yhat: Tensor, y: Array | Sequence[float]) -> Tensor:
    """Summed binary cross-entropy of predicted probabilities against {0,1} labels.

    Probabilities are clamped into [eps, 1-eps] first; the gradient w.r.t.
    the clamped probability is (p - y) / (p (1 - p)).
    """
    target = np.asarray(y, dtype=np.float64)
    if yhat.data.shape != target.shape:
        raise ValueError(f"bce length mismatch: {yhat.shape} vs {target.shape}")
    p = clip(yhat, BCE_EPS, 1.0 - BCE_EPS)
    pd = p.data

    def pull(g: Array) -> Array:
        return float(g) * (pd - target) / (pd * (1.0 - pd))

    value = -np.sum(target * np.log(pd) + (1.0 - target) * np.log(1.0 - pd))
    return Tensor(np.asarray(value), parents=((p, pull),))


@dataclass
class LstmCellParams:
    """Gate parameters of one LSTM direction; gate order is i, f, g, o."""

    w_x: Tensor  # (4h, d_in)
    w_h: Tensor  # (4h, h)
    b: Tensor    # (4h,)

    @property
    def hidden_size(self) -> int:
        return self.w_h.data.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_x.data.shape[1]

    @staticmethod
    def create(input_size: int, hidden_size: int, rng: Rng) -> "LstmCellParams":
        """Uniform ±1/sqrt(fan_in) weights; forget-gate bias starts at 1.0."""
        h = hidden_size
        bx = 1.0 / math.sqrt(input_size)
        bh = 1.0 / math.sqrt(h)
        w_x = rng.uniform(-bx, bx, (4 * h, input_size))
        w_h = rng.uniform(-bh, bh, (4 * h, h))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        return LstmCellParams(parameter(w_x), parameter(w_h), parameter(b))

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w_x": self.w_x, f"{prefix}.w_h": self.w_h, f"{prefix}.b": self.b}


def lstm_cell(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """One LSTM step: c_t = f⊙c_prev + i⊙g, h_t = o⊙tanh(c_t).

    Built from primitive ops, so unrolling over time gives full
    backpropagation through time for free.
    """
    h = params.hidden_size
    if x_t.data.shape != (params.input_size,) or h_prev.data.shape != (h,) or c_prev.data.shape != (h,):
        raise ValueError(
            f"lstm_cell shape mismatch: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for params ({params.input_size} -> {h})"
        )
    z = add(affine(params.w_x, x_t, params.b), matmul(params.w_h, h_prev))
    i = sigmoid(tslice(z, 0, h))
    f = sigmoid(tslice(z, h, 2 * h))
    g = tanh(tslice(z, 2 * h, 3 * h))
    o = sigmoid(tslice(z, 3 * h, 4 * h))
    c_t = add(mul(f, c_prev), mul(i, g))
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


@dataclass
class AdamState:
    """Adam moments for a fixed parameter list, plus hyperparameters."""

    lr: float = 0.0067
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[Array] = field(default_factory=list)
    v: list[Array] = field(default_factory=list)

    @staticmethod
    def for_params(params: Sequence[Tensor], lr: float = 0.0067, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return AdamState(
            lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0,
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params: Sequence[Tensor], grads: Sequence[Array], state: AdamState) -> tuple[Sequence[Tensor], AdamState]:
    """Bias-corrected Adam update, in place on the parameter tensors."""
    if len(params) != len(state.m):
        raise ValueError("AdamState was built for a different parameter list")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for idx, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p.data) if g is None else np.asarray(g)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
        state.m[idx] = b1 * state.m[idx] + (1.0 - b1) * g
        state.v[idx] = b2 * state.v[idx] + (1.0 - b2) * g * g
        m_hat = state.m[idx] / c1
        v_hat = state.v[idx] / c2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    `f` must rebuild its graph on every call, reading the live parameter
    values. Relative error per coordinate is |a-b| / max(1e-8, |a|+|b|).
    """
    zero_grads(params)
    out = f()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError("non-finite loss at finite-difference probe point")
            numeric = (fp - fm) / (2.0 * h)
            a = float(gflat[i])
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst


def collect_parameters(named: Mapping[str, Tensor]) -> tuple[list[str], list[Tensor]]:
    """Stable (names, tensors) pair in insertion order, for optimizers and checkpoints."""
    names = list(named.keys())
    return names, [named[n] for n in names]
