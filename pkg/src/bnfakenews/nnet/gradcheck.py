from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numeric_gradient(loss_fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-5, elements=None) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. ``param`` (perturbed in place)."""
    grad = np.zeros_like(param.data, dtype=np.float64)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    idx = range(flat.size) if elements is None else elements
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        up = float(loss_fn().data)
        flat[i] = orig - eps
        down = float(loss_fn().data)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_elements: int | None = None,
    seed: int = 0,
    per_tensor: bool = False,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` rebuilds the scalar loss from the current parameter values and must
    be deterministic (infer mode, or dropout masks from a freshly seeded generator). Parameters should be
    64-bit. With ``max_elements`` set, a seeded sample of elements is checked per
    parameter instead of all of them.

    By default the result is the worst element-wise error. ``per_tensor=True``
    compares each parameter's (sampled) gradient as a vector,
    ``||a - n|| / max(||a||, ||n||)``, which stops entries far below the
    finite-difference noise floor from dominating deep composites.
    """
    for p in params:
        if p.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 parameters, got {p.dtype}")
    with Tape() as tape:
        loss = loss_fn()
    analytic = tape.gradient(loss, params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        elements = None
        if max_elements is not None and p.data.size > max_elements:
            elements = np.sort(rng.choice(p.data.size, size=max_elements, replace=False))
        n = numeric_gradient(loss_fn, p, eps, elements)
        a, n = a.reshape(-1), n.reshape(-1)
        if elements is not None:
            a, n = a[elements], n[elements]
        if per_tensor:
            err = np.atleast_1d(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-8))
        else:
            err = relative_error(a, n)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
