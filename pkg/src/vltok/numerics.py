"""Dense float64 tensors with reverse-mode differentiation and AdamW.

Every forward op checks that its output is finite and raises
``FloatingPointError`` otherwise, so a NaN never travels silently through
the graph.  Ops that combine tensors broadcast like numpy; gradients are
summed back onto the original operand shape.
"""

from __future__ import annotations

import contextlib
import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass

import numpy as np

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _finite(out: np.ndarray, op: str) -> np.ndarray:
    # a sum is non-finite iff some element is (or the total overflows, also an error)
    if not math.isfinite(out.sum()):
        raise FloatingPointError(f"non-finite value produced by {op}")
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """An ndarray plus the closure that pushes gradients to its inputs."""

    __slots__ = ("_backward", "_prev", "data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, _prev: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._prev = _prev
        self._backward = _backward

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    # -- graph plumbing -------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: tuple, backward: Callable, op: str) -> Tensor:
        _finite(data, op)
        if _grad_enabled and any(p.requires_grad for p in parents):
            return Tensor(data, True, parents, backward)
        return Tensor(data)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar tensor")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._prev, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- elementwise arithmetic -----------------------------------------

    def __add__(self, other) -> Tensor:
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
            "add",
        )

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other) -> Tensor:
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> Tensor:
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            return (
                _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
            )

        return Tensor._make(a.data * b.data, (a, b), back, "mul")

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> Tensor:
        if isinstance(scalar, Tensor):
            raise TypeError("division is only defined by a python scalar")
        return self * (1.0 / scalar)

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return Tensor._make(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),), "reshape")

    def transpose(self, *axes) -> Tensor:
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        return Tensor._make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),), "transpose")

    def swapaxes(self, a: int, b: int) -> Tensor:
        return Tensor._make(self.data.swapaxes(a, b), (self,), lambda g: (g.swapaxes(a, b),), "swapaxes")

    def __getitem__(self, idx) -> Tensor:
        src_shape = self.shape

        def back(g):
            out = np.zeros(src_shape, dtype=DTYPE)
            np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(self.data[idx], (self,), back, "getitem")

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        src_shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src_shape).copy(),)

        return Tensor._make(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), back, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True)


# ---------------------------------------------------------------------------
# differentiable functions
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need at least 2 dimensions")

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return Tensor._make(a.data @ b.data, (a, b), back, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else y + b


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back, "concat")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.data > 0
    return Tensor._make(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,), "relu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x) -> Tensor:
    """tanh-approximated GELU."""
    x = as_tensor(x)
    u = x.data
    u2 = u * u
    t = np.tanh(_GELU_C * u * (1.0 + 0.044715 * u2))
    out = 0.5 * u * (1.0 + t)

    def back(g):
        d = 1.0 - t * t
        d *= u
        d *= (_GELU_C * 0.5) * (1.0 + 3 * 0.044715 * u2)
        d += 0.5 * (1.0 + t)
        d *= g
        return (d,)

    return Tensor._make(out, (x,), back, "gelu")


def softmax(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Max-stabilised softmax; ``mask`` marks the positions that may receive mass."""
    x = as_tensor(x)
    if x.data.size == 0:
        raise ValueError("softmax of an empty array")
    _finite(x.data, "softmax input")
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("attention mask leaves a row with no unmasked position")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Tensor._make(p, (x,), back, "softmax")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = x.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ValueError(f"layer_norm: gamma/beta must have shape ({n},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data

    def back(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * xhat).reshape(-1, n).sum(axis=0)
        if beta.requires_grad:
            gbeta = g.reshape(-1, n).sum(axis=0)
        if x.requires_grad:
            gh = g * gamma.data
            gx = rstd * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, ggamma, gbeta

    return Tensor._make(out, (x, gamma, beta), back, "layer_norm")


def cross_entropy(logits, target) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over the leading rows.

    ``logits`` may be a single V-vector with an integer target, or an
    (M, V) matrix with M integer targets.
    """
    logits = as_tensor(logits)
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data.reshape(-1, logits.shape[-1])
    t = np.atleast_1d(np.asarray(target)).reshape(-1)
    if t.dtype.kind not in "iu":
        raise TypeError("targets must be integer class indices")
    V = z.shape[-1]
    if t.shape[0] != z.shape[0]:
        raise ValueError("one target per logit row is required")
    if (t < 0).any() or (t >= V).any():
        raise IndexError(f"target out of range [0, {V})")
    _finite(z, "cross_entropy input")
    zs = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=-1, keepdims=True))
    logp = zs - lse
    rows = np.arange(z.shape[0])
    loss = -logp[rows, t].mean()
    src_shape = logits.shape

    def back(g):
        d = np.exp(logp)
        d[rows, t] -= 1.0
        return ((d * (g / z.shape[0])).reshape(src_shape),)

    return Tensor._make(np.asarray(loss), (logits,), back, "cross_entropy")


def attention(q, k, v, mask: np.ndarray | None = None) -> Tensor:
    """softmax(q k^T / sqrt(d_k)) v over the last two axes; ``mask[i, j]`` allows key j for query i."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError("attention: dimension mismatch between q, k and v")
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    return matmul(softmax(scores, axis=-1, mask=mask), v)


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


# ---------------------------------------------------------------------------
# parameters and optimisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimHyper:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ValueError("eps must be positive and weight_decay non-negative")


class ParamStore:
    """Named trainable tensors plus per-parameter AdamW moments."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step = 0

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = parameter(value)
        _finite(t.data, f"parameter {name}")
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def num_values(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def set_value(self, name: str, value) -> None:
        value = np.asarray(value, dtype=DTYPE)
        if value.shape != self._params[name].shape:
            raise ValueError(f"shape mismatch for {name}: {value.shape} vs {self._params[name].shape}")
        self._params[name].data = value.copy()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def copy(self) -> ParamStore:
        new = ParamStore()
        for name, t in self._params.items():
            new.add(name, t.data.copy())
        new.moments = {k: (m.copy(), v.copy()) for k, (m, v) in self.moments.items()}
        new.step = self.step
        return new


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) resampled into [-2 std, 2 std]."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def grad(loss: Tensor, params: ParamStore) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter (zeros when off-graph)."""
    if loss.data.size != 1:
        raise ValueError("grad() needs a scalar loss")
    params.zero_grad()
    loss.backward()
    out = {}
    for name, t in params.items():
        out[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
    params.zero_grad()
    return out


def adamw_step(params: ParamStore, grads: dict[str, np.ndarray], hyper: OptimHyper) -> ParamStore:
    """One AdamW update in place: decoupled decay, bias-corrected moments."""
    missing = set(params.names()) - set(grads)
    if missing:
        raise KeyError(f"missing gradients for {sorted(missing)}")
    for name, t in params.items():
        if grads[name].shape != t.shape:
            raise ValueError(f"gradient shape {grads[name].shape} != parameter shape {t.shape} for {name}")
    params.step += 1
    step = params.step
    b1, b2, lr = hyper.beta1, hyper.beta2, hyper.learning_rate
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    for name, t in params.items():
        g = grads[name]
        m, v = params.moments.get(name, (np.zeros_like(t.data), np.zeros_like(t.data)))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        params.moments[name] = (m, v)
        p = t.data * (1.0 - lr * hyper.weight_decay)
        t.data = p - lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return params


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    params: ParamStore,
    names: Iterable[str] | None = None,
    samples_per_param: int = 4,
    rel_step: float = 1e-5,
    seed: int = 0,
) -> dict[str, float]:
    """Compare analytic gradients to central differences on sampled entries.

    The step for entry theta is ``rel_step * max(1, |theta|)``.  Returns the
    relative error ``||analytic - numeric|| / max(||analytic||, ||numeric||)``
    over the sampled entries of each parameter.
    """
    rng = np.random.default_rng(seed)
    analytic = grad(loss_fn(), params)
    errors = {}
    for name in names if names is not None else params.names():
        t = params[name]
        flat = t.data.reshape(-1)
        count = min(samples_per_param, flat.size)
        picks = rng.choice(flat.size, size=count, replace=False)
        num = np.empty(count)
        ana = analytic[name].reshape(-1)[picks]
        with no_grad():
            for i, j in enumerate(picks):
                orig = flat[j]
                h = rel_step * max(1.0, abs(orig))
                flat[j] = orig + h
                up = float(loss_fn().data)
                flat[j] = orig - h
                down = float(loss_fn().data)
                flat[j] = orig
                num[i] = (up - down) / (2 * h)
        scale = max(np.linalg.norm(ana), np.linalg.norm(num))
        errors[name] = 0.0 if scale == 0 else float(np.linalg.norm(ana - num) / scale)
    return errors
