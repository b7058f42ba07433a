"""Minimal reverse-mode autodiff over float64 numpy arrays.

A ``Tensor`` wraps an ndarray; every operation records its parents and a
backward closure, so ``backward(loss)`` can walk the implicit graph in
reverse topological order and accumulate gradients into every tracked
tensor.  Only the operations the segmentation models need are provided.
Convolution and pooling forward/backward run on the selected kernel
backend (compiled extension or numpy fallback, see ``ipcnet.backend``).

Conventions: float64 everywhere; convolution is valid (no padding)
cross-correlation; maxpool ties resolve to the first occurrence in
row-major window order.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend


class Tensor:
    """Dense array node in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def _result(data, parents, backward_fn):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn(out)
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# operations


def matmul(a, b):
    """Matrix product of two 2-D tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    data = a.data @ b.data

    def make_backward(out):
        def run():
            _accumulate(a, out.grad @ b.data.T)
            _accumulate(b, a.data.T @ out.grad)
        return run

    return _result(data, (a, b), make_backward)


def add(a, b):
    """Elementwise sum with numpy broadcasting."""
    try:
        data = a.data + b.data
    except ValueError:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}") from None

    def make_backward(out):
        def run():
            _accumulate(a, _unbroadcast(out.grad, a.data.shape))
            _accumulate(b, _unbroadcast(out.grad, b.data.shape))
        return run

    return _result(data, (a, b), make_backward)


def mul(a, b):
    """Elementwise product with numpy broadcasting."""
    try:
        data = a.data * b.data
    except ValueError:
        raise ValueError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}") from None

    def make_backward(out):
        def run():
            _accumulate(a, _unbroadcast(out.grad * b.data, a.data.shape))
            _accumulate(b, _unbroadcast(out.grad * a.data, b.data.shape))
        return run

    return _result(data, (a, b), make_backward)


def scale(a, c):
    """Multiply by a python scalar."""
    c = float(c)

    def make_backward(out):
        def run():
            _accumulate(a, out.grad * c)
        return run

    return _result(a.data * c, (a,), make_backward)


def relu(a):
    data = np.maximum(a.data, 0.0)

    def make_backward(out):
        def run():
            _accumulate(a, out.grad * (a.data > 0.0))
        return run

    return _result(data, (a,), make_backward)


def reshape(a, shape):
    shape = tuple(int(s) for s in shape)
    data = a.data.reshape(shape)

    def make_backward(out):
        def run():
            _accumulate(a, out.grad.reshape(a.data.shape))
        return run

    return _result(data, (a,), make_backward)


def transpose(a):
    """2-D transpose."""
    if a.data.ndim != 2:
        raise ValueError(f"transpose needs a 2-D tensor, got shape {a.data.shape}")

    def make_backward(out):
        def run():
            _accumulate(a, out.grad.T)
        return run

    return _result(a.data.T.copy(), (a,), make_backward)


def concat(tensors, axis):
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def make_backward(out):
        def run():
            for t, piece in zip(tensors, np.split(out.grad, bounds, axis=axis)):
                _accumulate(t, piece)
        return run

    return _result(data, tensors, make_backward)


def repeat_rows(v, n):
    """Tile a (C,) or (1, C) tensor into n identical rows of an (n, C) tensor."""
    row = v.data.reshape(1, -1)
    data = np.repeat(row, n, axis=0)

    def make_backward(out):
        def run():
            _accumulate(v, out.grad.sum(axis=0).reshape(v.data.shape))
        return run

    return _result(data, (v,), make_backward)


def sum_all(a):
    """Sum of all elements, as a scalar tensor."""
    def make_backward(out):
        def run():
            _accumulate(a, np.broadcast_to(out.grad, a.data.shape).copy())
        return run

    return _result(np.asarray(a.data.sum()), (a,), make_backward)


def softmax_rows(a):
    """Row-wise softmax of a 2-D tensor; each output row sums to 1."""
    if a.data.ndim != 2:
        raise ValueError(f"softmax_rows needs a 2-D tensor, got shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)

    def make_backward(out):
        def run():
            y = out.data  # == data
            dot = (out.grad * y).sum(axis=1, keepdims=True)
            _accumulate(a, y * (out.grad - dot))
        return run

    return _result(data, (a,), make_backward)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under row softmax."""
    if logits.data.ndim != 2:
        raise ValueError(f"cross_entropy needs 2-D logits, got shape {logits.data.shape}")
    labels = np.asarray(labels)
    n, k = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"cross_entropy label shape {labels.shape} does not match {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k}): {labels[(labels < 0) | (labels >= k)][0]}")
    labels = labels.astype(np.intp)
    m = logits.data.max(axis=1, keepdims=True)
    shifted = logits.data - m
    lse = np.log(np.exp(shifted).sum(axis=1)) + m[:, 0]
    picked = logits.data[np.arange(n), labels]
    data = np.asarray((lse - picked).mean())

    def make_backward(out):
        def run():
            soft = np.exp(shifted)
            soft /= soft.sum(axis=1, keepdims=True)
            soft[np.arange(n), labels] -= 1.0
            _accumulate(logits, (float(out.grad) / n) * soft)
        return run

    return _result(data, (logits,), make_backward)


def _as_hwc(data):
    """View a 2-D (H, W) array as (H, W, 1); pass 3-D through."""
    if data.ndim == 2:
        return data.reshape(data.shape + (1,)), True
    if data.ndim == 3:
        return data, False
    raise ValueError(f"expected a 2-D or 3-D tensor, got shape {data.shape}")


def conv_valid(input, kernel_h, kernel_w, stride_h, stride_w, out_channels, params):
    """Valid (no padding) cross-correlation over an H x W x C tensor.

    ``params`` packs the layer's weights and bias as a single
    ``(kernel_h*kernel_w*Cin + 1, out_channels)`` tensor: the first
    kernel_h*kernel_w*Cin rows are the kernel in (kh, kw, cin) row-major
    order, the last row is the bias.  2-D input is treated as Cin=1.
    Output is (H', W', out_channels) with H' = floor((H-kernel_h)/stride_h)+1.
    """
    x, _ = _as_hwc(input.data)
    h, w, cin = x.shape
    if kernel_h > h or kernel_w > w:
        raise ValueError(
            f"conv kernel ({kernel_h}x{kernel_w}) larger than input ({h}x{w})")
    if stride_h < 1 or stride_w < 1:
        raise ValueError(f"conv strides must be >= 1, got ({stride_h}, {stride_w})")
    expected = (kernel_h * kernel_w * cin + 1, out_channels)
    if params.data.shape != expected:
        raise ValueError(
            f"conv params shape {params.data.shape} does not match expected {expected}")
    weights = np.ascontiguousarray(
        params.data[:-1].reshape(kernel_h, kernel_w, cin, out_channels))
    bias = np.ascontiguousarray(params.data[-1])
    data = backend.conv2d_forward(np.ascontiguousarray(x), weights, bias, stride_h, stride_w)

    def make_backward(out):
        def run():
            gx, gw, gb = backend.conv2d_backward(
                np.ascontiguousarray(x), weights, np.ascontiguousarray(out.grad),
                stride_h, stride_w)
            _accumulate(input, gx.reshape(input.data.shape))
            _accumulate(params, np.vstack([gw.reshape(-1, out_channels), gb[None, :]]))
        return run

    return _result(data, (input, params), make_backward)


def conv_output_extent(size, kernel, stride):
    """Valid-convolution output extent: floor((size - kernel) / stride) + 1."""
    return (size - kernel) // stride + 1


def maxpool(input, pool_h, pool_w, stride_h, stride_w):
    """Per-window, per-channel maximum over an H x W (x C) tensor.

    The gradient routes to the argmax element of each window, first
    occurrence in row-major order on ties.  Output rank matches input rank.
    """
    x, squeezed = _as_hwc(input.data)
    h, w, _ = x.shape
    if pool_h > h or pool_w > w:
        raise ValueError(f"pool window ({pool_h}x{pool_w}) larger than input ({h}x{w})")
    if stride_h < 1 or stride_w < 1:
        raise ValueError(f"pool strides must be >= 1, got ({stride_h}, {stride_w})")
    out3, arg = backend.maxpool_forward(
        np.ascontiguousarray(x), pool_h, pool_w, stride_h, stride_w)
    data = out3[:, :, 0] if squeezed else out3

    def make_backward(out):
        def run():
            g = out.grad.reshape(out3.shape)
            gx = backend.maxpool_backward(np.ascontiguousarray(g), arg, h, w)
            _accumulate(input, gx.reshape(input.data.shape))
        return run

    return _result(data, (input,), make_backward)


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root):
    order = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        for p in parents:
            if id(p) not in visited:
                visited.add(id(p))
                stack.append((p, iter(p._parents)))
                break
        else:
            order.append(node)
            stack.pop()
    return order


def backward(loss):
    """Populate ``grad`` on every tracked tensor reachable from ``loss``."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tracked tensor")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()


def zero_grads(params):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """Adam accumulators plus hyperparameters for one parameter list."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_adam(params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
    state = AdamState(learning_rate, beta1, beta2, epsilon)
    state.m = [np.zeros_like(p.data) for p in params]
    state.v = [np.zeros_like(p.data) for p in params]
    return state


def adam_step(params, grads, state):
    """One Adam update with bias correction; mutates params and state in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: params, grads, and state lengths differ")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {g.shape} does not match parameter "
                f"{p.name or i} shape {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {p.name or i}")
        m, v = state.m[i], state.v[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state
