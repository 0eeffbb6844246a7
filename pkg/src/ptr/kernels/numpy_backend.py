"""Pure-NumPy encoder kernels; the fallback twin of the compiled core.

All functions operate on one sequence at a time (T x d matrices) and are
stateless: forward kernels return whatever the matching backward kernel
needs.  Shapes and math are identical to ``ptr.kernels._core``.
"""

from __future__ import annotations

import numpy as np

_GELU_C = 0.7978845608028654  # sqrt(2 / pi)
_GELU_A = 0.044715


def ln_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float):
    mean = x.mean(axis=-1)
    var = ((x - mean[:, None]) ** 2).mean(axis=-1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean[:, None]) * rstd[:, None] * gain + bias
    return y, mean, rstd


def ln_backward(dy: np.ndarray, x: np.ndarray, gain: np.ndarray,
                mean: np.ndarray, rstd: np.ndarray):
    xhat = (x - mean[:, None]) * rstd[:, None]
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    return dx, dgain, dbias


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0)
    return dx, dw, db


def gelu_forward(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * x * (1.0 + t)


def gelu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du)


def attention_forward(q: np.ndarray, k: np.ndarray, v: np.ndarray, n_heads: int):
    """Multi-head scaled dot-product attention over one sequence.

    Returns the context matrix and the (heads, T, T) attention probabilities
    needed by the backward pass.
    """
    seq, dim = q.shape
    dh = dim // n_heads
    scale = 1.0 / np.sqrt(dh)
    ctx = np.empty_like(q)
    probs = np.empty((n_heads, seq, seq), dtype=q.dtype)
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = (q[:, sl] @ k[:, sl].T) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        p = e / e.sum(axis=-1, keepdims=True)
        probs[h] = p
        ctx[:, sl] = p @ v[:, sl]
    return ctx, probs


def attention_backward(dctx: np.ndarray, q: np.ndarray, k: np.ndarray,
                       v: np.ndarray, probs: np.ndarray, n_heads: int):
    seq, dim = q.shape
    dh = dim // n_heads
    scale = 1.0 / np.sqrt(dh)
    dq = np.empty_like(q)
    dk = np.empty_like(k)
    dv = np.empty_like(v)
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        p = probs[h]
        dp = dctx[:, sl] @ v[:, sl].T
        dv[:, sl] = p.T @ dctx[:, sl]
        ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
        dq[:, sl] = (ds @ k[:, sl]) * scale
        dk[:, sl] = (ds.T @ q[:, sl]) * scale
    return dq, dk, dv
