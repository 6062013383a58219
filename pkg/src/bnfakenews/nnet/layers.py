"""Layer-level building blocks composed from tensor primitives.

Every function accepts a single sequence (``[L, d]``) or a batch (``[B, L, d]``);
the recurrent ones scan the second-to-last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .tensor import (
    ShapeMismatch,
    Tensor,
    WindowTooLarge,
    concat,
    conv1d,
    dropout_mask,
    embedding,
    gather_time,
    global_avg_pool,
    global_max_pool,
    linear,
    max_pool1d,
    relu,
    sigmoid,
    stack_time,
    tanh,
    time_step,
)


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape).astype(dtype)


@dataclass
class GruParams:
    """Update (z), reset (r) and candidate (h) paths of one GRU cell."""

    W_z: Tensor
    W_r: Tensor
    W_h: Tensor
    U_z: Tensor
    U_r: Tensor
    U_h: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    def tensors(self) -> list[Tensor]:
        return [getattr(self, f.name) for f in fields(self)]

    def check(self) -> None:
        H, d = self.hidden_size, self.input_size
        for name in ("W_z", "W_r", "W_h"):
            if getattr(self, name).shape != (H, d):
                raise ShapeMismatch(f"{name} must be {(H, d)}")
        for name in ("U_z", "U_r", "U_h"):
            if getattr(self, name).shape != (H, H):
                raise ShapeMismatch(f"{name} must be {(H, H)}")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (H,):
                raise ShapeMismatch(f"{name} must be {(H,)}")

    @classmethod
    def init(cls, rng, input_size: int, hidden_size: int, dtype=np.float32, prefix: str = "") -> "GruParams":
        H, d = hidden_size, input_size
        kw = {}
        for gate in "zrh":
            kw[f"W_{gate}"] = Tensor(glorot(rng, (H, d), d, H, dtype), requires_grad=True, name=f"{prefix}W_{gate}")
            kw[f"U_{gate}"] = Tensor(glorot(rng, (H, H), H, H, dtype), requires_grad=True, name=f"{prefix}U_{gate}")
            kw[f"b_{gate}"] = Tensor(np.zeros(H, dtype), requires_grad=True, name=f"{prefix}b_{gate}")
        return cls(**{f.name: kw[f.name] for f in fields(cls)})


@dataclass
class LstmParams:
    W_i: Tensor
    W_f: Tensor
    W_o: Tensor
    W_g: Tensor
    U_i: Tensor
    U_f: Tensor
    U_o: Tensor
    U_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1]

    def tensors(self) -> list[Tensor]:
        return [getattr(self, f.name) for f in fields(self)]

    def check(self) -> None:
        H, d = self.hidden_size, self.input_size
        for gate in "ifog":
            if getattr(self, f"W_{gate}").shape != (H, d):
                raise ShapeMismatch(f"W_{gate} must be {(H, d)}")
            if getattr(self, f"U_{gate}").shape != (H, H):
                raise ShapeMismatch(f"U_{gate} must be {(H, H)}")
            if getattr(self, f"b_{gate}").shape != (H,):
                raise ShapeMismatch(f"b_{gate} must be {(H,)}")

    @classmethod
    def init(cls, rng, input_size: int, hidden_size: int, dtype=np.float32, prefix: str = "") -> "LstmParams":
        H, d = hidden_size, input_size
        kw = {}
        for gate in "ifog":
            kw[f"W_{gate}"] = Tensor(glorot(rng, (H, d), d, H, dtype), requires_grad=True, name=f"{prefix}W_{gate}")
            kw[f"U_{gate}"] = Tensor(glorot(rng, (H, H), H, H, dtype), requires_grad=True, name=f"{prefix}U_{gate}")
            kw[f"b_{gate}"] = Tensor(np.zeros(H, dtype), requires_grad=True, name=f"{prefix}b_{gate}")
        return cls(**{f.name: kw[f.name] for f in fields(cls)})


def embedding_forward(seq, E: Tensor) -> Tensor:
    return embedding(E, np.asarray(seq))


# GRU ---------------------------------------------------------------------------


def _gru_cell(xz: Tensor, xr: Tensor, xh: Tensor, h_prev: Tensor, p: GruParams) -> Tensor:
    z = sigmoid(xz + linear(h_prev, p.U_z))
    r = sigmoid(xr + linear(h_prev, p.U_r))
    h_cand = tanh(xh + linear(r * h_prev, p.U_h))
    # h_t = (1 - z) * h_prev + z * h_cand
    return h_prev + z * (h_cand - h_prev)


def gru_step(x_t: Tensor, h_prev: Tensor, p: GruParams) -> Tensor:
    if x_t.shape[-1] != p.input_size or h_prev.shape[-1] != p.hidden_size:
        raise ShapeMismatch(f"gru_step got x {x_t.shape}, h {h_prev.shape} for cell {p.hidden_size}x{p.input_size}")
    return _gru_cell(linear(x_t, p.W_z, p.b_z), linear(x_t, p.W_r, p.b_r), linear(x_t, p.W_h, p.b_h), h_prev, p)


def _zeros_state(x: Tensor, hidden: int) -> Tensor:
    return Tensor(np.zeros((*x.shape[:-2], hidden), dtype=x.dtype))


def gru_sequence(xs: Tensor, p: GruParams, reverse: bool = False) -> list[Tensor]:
    """Hidden states for every timestep, indexed by position (not scan order)."""
    if xs.shape[-1] != p.input_size:
        raise ShapeMismatch(f"sequence features {xs.shape[-1]} != GRU input {p.input_size}")
    L = xs.shape[-2]
    XZ, XR, XH = linear(xs, p.W_z, p.b_z), linear(xs, p.W_r, p.b_r), linear(xs, p.W_h, p.b_h)
    h = _zeros_state(xs, p.hidden_size)
    out: list[Tensor | None] = [None] * L
    order = range(L - 1, -1, -1) if reverse else range(L)
    for t in order:
        h = _gru_cell(time_step(XZ, t), time_step(XR, t), time_step(XH, t), h, p)
        out[t] = h
    return out


def bidirectional_gru(seq_emb: Tensor, fwd: GruParams, bwd: GruParams) -> Tensor:
    """``[..., L, d]`` -> ``[..., L, 2H]``, forward states first."""
    if fwd.hidden_size != bwd.hidden_size:
        raise ShapeMismatch("forward and backward GRUs must share a hidden size")
    hf = gru_sequence(seq_emb, fwd)
    hb = gru_sequence(seq_emb, bwd, reverse=True)
    return concat([stack_time(hf), stack_time(hb)], axis=-1)


# LSTM --------------------------------------------------------------------------


def _lstm_cell(xi, xf, xo, xg, h_prev, c_prev, p: LstmParams):
    i = sigmoid(xi + linear(h_prev, p.U_i))
    f = sigmoid(xf + linear(h_prev, p.U_f))
    o = sigmoid(xo + linear(h_prev, p.U_o))
    g = tanh(xg + linear(h_prev, p.U_g))
    c = f * c_prev + i * g
    h = o * tanh(c)
    return h, c


def lstm_step(x_t: Tensor, state: tuple[Tensor, Tensor], p: LstmParams) -> tuple[Tensor, Tensor]:
    h_prev, c_prev = state
    if x_t.shape[-1] != p.input_size or h_prev.shape[-1] != p.hidden_size or c_prev.shape != h_prev.shape:
        raise ShapeMismatch("lstm_step shapes do not match the cell")
    return _lstm_cell(
        linear(x_t, p.W_i, p.b_i),
        linear(x_t, p.W_f, p.b_f),
        linear(x_t, p.W_o, p.b_o),
        linear(x_t, p.W_g, p.b_g),
        h_prev,
        c_prev,
        p,
    )


def lstm_sequence(xs: Tensor, p: LstmParams) -> list[Tensor]:
    if xs.shape[-1] != p.input_size:
        raise ShapeMismatch(f"sequence features {xs.shape[-1]} != LSTM input {p.input_size}")
    XI, XF = linear(xs, p.W_i, p.b_i), linear(xs, p.W_f, p.b_f)
    XO, XG = linear(xs, p.W_o, p.b_o), linear(xs, p.W_g, p.b_g)
    h = _zeros_state(xs, p.hidden_size)
    c = h
    out = []
    for t in range(xs.shape[-2]):
        h, c = _lstm_cell(time_step(XI, t), time_step(XF, t), time_step(XO, t), time_step(XG, t), h, c, p)
        out.append(h)
    return out


def final_state(states: list[Tensor], lengths=None) -> Tensor:
    """Last hidden state, or the state at the last valid step per sequence."""
    if lengths is None or states[0].ndim == 1:
        if lengths is not None:
            return states[int(np.clip(lengths, 1, len(states))) - 1]
        return states[-1]
    idx = np.clip(np.asarray(lengths, dtype=np.int64), 1, len(states)) - 1
    return gather_time(stack_time(states), idx)


# convolution, pooling, dense ---------------------------------------------------------


def conv1d_forward(seq_emb: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    return relu(conv1d(seq_emb, kernels, bias))


def pool(seq: Tensor, mode: str, window: int | None = None, valid_length=None) -> Tensor:
    """``mode`` is one of ``max_window``, ``global_avg``, ``global_max``."""
    if mode == "max_window":
        if window is None or window < 1:
            raise WindowTooLarge("max_window pooling needs a positive window")
        return max_pool1d(seq, window)
    if mode == "global_avg":
        return global_avg_pool(seq, valid_length)
    if mode == "global_max":
        return global_max_pool(seq, valid_length)
    raise ValueError(f"unknown pooling mode {mode!r}")


def dense_forward(x: Tensor, W: Tensor, b: Tensor, activation: str = "none") -> Tensor:
    y = linear(x, W, b)
    if activation == "relu":
        return relu(y)
    if activation == "none":
        return y
    raise ValueError(f"unknown activation {activation!r}")


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity in ``infer`` mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if mode == "infer" or rate == 0.0:
        return x
    if mode != "train":
        raise ValueError(f"unknown dropout mode {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs a seeded generator")
    keep = rng.random(x.shape) >= rate
    return dropout_mask(x, keep / (1.0 - rate))
