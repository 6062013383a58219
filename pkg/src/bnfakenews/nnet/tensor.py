"""Tensor values and a tape-based reverse-mode differentiation engine.

Operations only record themselves while a :class:`Tape` is active and at least
one input requires a gradient, so inference runs as plain numpy.
"""

from __future__ import annotations

import numpy as np


class NonScalarLoss(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


class Tape:
    """Records differentiable operations in execution order.

    >>> w = Tensor([2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = tensor_sum(w * w)
    >>> tape.gradient(loss, [w])[0]
    array([4.])
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def gradient(self, loss: Tensor, params) -> list[np.ndarray]:
        """Backpropagate from a scalar ``loss``; unreachable params get zeros."""
        if loss.data.size != 1:
            raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
        params = list(params)
        for node in self.nodes:
            node.grad = None
            for p in node._parents:
                p.grad = None
        for p in params:
            p.grad = None
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is not None:
                node._backward(node.grad)
        out = []
        for p in params:
            out.append(np.zeros_like(p.data) if p.grad is None else p.grad)
        return out


def backward(tape: Tape, loss: Tensor, params) -> list[np.ndarray]:
    return tape.gradient(loss, params)


def _recording() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    tape = _recording()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        tape.nodes.append(out)
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _grad_buffer(t: Tensor) -> np.ndarray | None:
    if not t.requires_grad:
        return None
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementwise ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    b = as_tensor(b, like=a)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), bw)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function without overflow; results stay strictly above zero."""
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    # exp(-|x|) underflows below about -745; keep the open interval (0, 1).
    return np.maximum(out, np.finfo(x.dtype).smallest_subnormal)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = stable_sigmoid(x.data)

    def bw(g):
        _accum(x, g * y * (1.0 - y))

    return _node(y, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g):
        _accum(x, g * (1.0 - y * y))

    return _node(y, (x,), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    y = np.where(mask, x.data, 0).astype(x.dtype, copy=False)

    def bw(g):
        _accum(x, g * mask)

    return _node(y, (x,), bw)


def dropout_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a fixed (already scaled) mask."""
    mask = mask.astype(x.dtype, copy=False)

    def bw(g):
        _accum(x, g * mask)

    return _node(x.data * mask, (x,), bw)


# reductions and shape ops ---------------------------------------------------


def tensor_sum(x: Tensor) -> Tensor:
    def bw(g):
        _accum(x, np.broadcast_to(g, x.shape))

    return _node(np.asarray(x.data.sum(), dtype=x.dtype), (x,), bw)


def tensor_mean(x: Tensor) -> Tensor:
    n = x.data.size

    def bw(g):
        _accum(x, np.broadcast_to(g / n, x.shape))

    return _node(np.asarray(x.data.mean(), dtype=x.dtype), (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    def bw(g):
        _accum(x, g.reshape(x.shape))

    return _node(x.data.reshape(shape), (x,), bw)


def concat(xs: list[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([x.data for x in xs], axis=axis)
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for x, part in zip(xs, np.split(g, splits, axis=axis)):
            _accum(x, part)

    return _node(data, tuple(xs), bw)


def time_step(x: Tensor, t: int) -> Tensor:
    """Row ``t`` along the time axis (second to last) of ``x``."""

    def bw(g):
        buf = _grad_buffer(x)
        if buf is not None:
            buf[..., t, :] += g

    return _node(x.data[..., t, :], (x,), bw)


def stack_time(xs: list[Tensor]) -> Tensor:
    """Stack per-step vectors ``[..., H]`` into ``[..., T, H]``."""
    data = np.stack([x.data for x in xs], axis=-2)

    def bw(g):
        for t, x in enumerate(xs):
            _accum(x, g[..., t, :])

    return _node(data, tuple(xs), bw)


def gather_time(x: Tensor, index: np.ndarray) -> Tensor:
    """Pick timestep ``index[b]`` from each sequence of ``x`` (``[B, T, H]``)."""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(x.shape[0])

    def bw(g):
        buf = _grad_buffer(x)
        if buf is not None:
            np.add.at(buf, (rows, index), g)

    return _node(x.data[rows, index], (x,), bw)


# linear algebra ---------------------------------------------------------------


def _matmul_t(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    # one 2-D GEMM is far faster than numpy's stacked matmul loop
    return (x.reshape(-1, x.shape[-1]) @ W.T).reshape(*x.shape[:-1], W.shape[0])


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W.T + b`` for ``W`` of shape ``[out, in]``; ``x`` may carry leading dims."""
    if x.shape[-1] != W.shape[1]:
        raise ShapeMismatch(f"input dim {x.shape[-1]} does not match weight {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise ShapeMismatch(f"bias {b.shape} does not match weight {W.shape}")
    y = _matmul_t(x.data, W.data)
    if b is not None:
        y = y + b.data
    parents = (x, W) if b is None else (x, W, b)

    def bw(g):
        if x.requires_grad:
            _accum(x, (g.reshape(-1, g.shape[-1]) @ W.data).reshape(x.shape))
        if W.requires_grad:
            g2 = g.reshape(-1, g.shape[-1])
            x2 = x.data.reshape(-1, x.shape[-1])
            _accum(W, g2.T @ x2)
        if b is not None and b.requires_grad:
            _accum(b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _node(y, parents, bw)


def embedding(E: Tensor, indices: np.ndarray) -> Tensor:
    indices = np.asarray(indices)
    if not np.issubdtype(indices.dtype, np.integer):
        raise TypeError("embedding indices must be integers")
    V = E.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= V):
        raise IndexOutOfRange(f"index out of range for vocabulary of size {V}")

    def bw(g):
        buf = _grad_buffer(E)
        if buf is not None:
            np.add.at(buf, indices, g)

    return _node(E.data[indices], (E,), bw)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid, stride-1 cross-correlation over time; no activation.

    ``x`` is ``[..., L, d]``, ``kernels`` is ``[K, k, d]``, result ``[..., L-k+1, K]``.
    """
    K, k, d = kernels.shape
    L = x.shape[-2]
    if x.shape[-1] != d:
        raise ShapeMismatch(f"channel dim {x.shape[-1]} does not match kernels {kernels.shape}")
    if k > L:
        raise KernelTooLong(f"kernel width {k} exceeds sequence length {L}")
    T = L - k + 1
    windows = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=-2)  # [..., T, d, k]
    windows = np.swapaxes(windows, -1, -2).reshape(*x.shape[:-2], T, k * d)
    flat_k = kernels.data.reshape(K, k * d)
    y = _matmul_t(windows, flat_k) + bias.data

    def bw(g):
        if kernels.requires_grad:
            gk = g.reshape(-1, K).T @ windows.reshape(-1, k * d)
            _accum(kernels, gk.reshape(K, k, d))
        if bias.requires_grad:
            _accum(bias, g.reshape(-1, K).sum(axis=0))
        buf = _grad_buffer(x)
        if buf is not None:
            gw = (g.reshape(-1, K) @ flat_k).reshape(*g.shape[:-1], k, d)
            for j in range(k):
                buf[..., j : j + T, :] += gw[..., j, :]

    return _node(y, (x, kernels, bias), bw)


class KernelTooLong(ValueError):
    pass


class WindowTooLarge(ValueError):
    pass


def max_pool1d(x: Tensor, window: int) -> Tensor:
    """Non-overlapping window maxima over time; a ragged tail is dropped."""
    T, C = x.shape[-2], x.shape[-1]
    if window > T:
        raise WindowTooLarge(f"window {window} exceeds length {T}")
    n = T // window
    blocks = x.data[..., : n * window, :].reshape(*x.shape[:-2], n, window, C)
    arg = blocks.argmax(axis=-2)
    y = np.take_along_axis(blocks, arg[..., None, :], axis=-2)[..., 0, :]

    def bw(g):
        buf = _grad_buffer(x)
        if buf is None:
            return
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None, :], g[..., None, :], axis=-2)
        buf[..., : n * window, :] += gb.reshape(*x.shape[:-2], n * window, C)

    return _node(y, (x,), bw)


def _time_mask(x: Tensor, lengths) -> np.ndarray | None:
    if lengths is None:
        return None
    T = x.shape[-2]
    lengths = np.clip(np.asarray(lengths, dtype=np.int64), 1, T)
    steps = np.arange(T)
    if x.ndim == 2:
        return steps < int(lengths)
    return steps[None, :] < lengths[:, None]


def global_avg_pool(x: Tensor, lengths=None) -> Tensor:
    """Mean over time; with ``lengths`` only the first ``lengths[b]`` rows count."""
    mask = _time_mask(x, lengths)
    if mask is None:
        T = x.shape[-2]

        def bw(g):
            _accum(x, np.broadcast_to(g[..., None, :] / T, x.shape))

        return _node(x.data.mean(axis=-2), (x,), bw)
    w = (mask / mask.sum(axis=-1, keepdims=True)).astype(x.dtype)[..., None]

    def bw_masked(g):
        _accum(x, g[..., None, :] * w)

    return _node((x.data * w).sum(axis=-2), (x,), bw_masked)


def global_max_pool(x: Tensor, lengths=None) -> Tensor:
    mask = _time_mask(x, lengths)
    data = x.data if mask is None else np.where(mask[..., None], x.data, -np.inf)
    arg = data.argmax(axis=-2)
    y = np.take_along_axis(x.data, arg[..., None, :], axis=-2)[..., 0, :]

    def bw(g):
        buf = _grad_buffer(x)
        if buf is not None:
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, arg[..., None, :], g[..., None, :], axis=-2)
            buf += gx

    return _node(y, (x,), bw)


# losses -----------------------------------------------------------------------


def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 labels.

    The gradient with respect to each logit is ``(sigmoid(z) - y) / n``.
    """
    y = np.asarray(labels, dtype=logits.dtype).reshape(logits.shape)
    z = logits.data
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = max(z.size, 1)
    p = stable_sigmoid(z)

    def bw(g):
        _accum(logits, g * (p - y) / n)

    return _node(np.asarray(per.mean(), dtype=logits.dtype), (logits,), bw)
