"""Differentiable numpy kernels for the CNN-LSTM network.

All activations use the N x H x W x C layout and float64.  Every forward
function has a hand-written ``*_backward`` counterpart; nothing here keeps
hidden state, so running statistics and random generators are passed in
and returned explicitly.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigError, PreconditionError, ShapeError, ValidationError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


class KernelGrads(NamedTuple):
    """Gradients of a parametrised kernel, each shaped like its primal."""

    d_input: np.ndarray
    d_weights: np.ndarray
    d_bias: np.ndarray


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a float64 array with every extent >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim < 1 or arr.ndim > 4:
        raise ShapeError(f"tensor rank must be 1..4, got {arr.ndim}")
    if 0 in arr.shape:
        raise ShapeError(f"tensor extents must be >= 1, got {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _check_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> None:
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects a rank-4 N x H x W x C input, got rank {x.ndim}")
    if w.ndim != 4 or w.shape[:2] != (3, 3):
        raise ShapeError(f"conv2d expects 3 x 3 x Cin x Cout weights, got {w.shape}")
    if x.shape[3] != w.shape[2]:
        raise ShapeError(
            f"input has {x.shape[3]} channels but weights expect {w.shape[2]}"
        )
    if b is not None and b.shape != (w.shape[3],):
        raise ShapeError(f"bias shape {b.shape} does not match {w.shape[3]} filters")


def _im2col(x: np.ndarray) -> np.ndarray:
    # (N, H, W, C) -> (N*H*W, 9*C) with column order (kh, kw, c)
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # N, H, W, C, 3, 3
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, 9 * c)


def conv2d(x, w, b) -> np.ndarray:
    """3x3 cross-correlation with stride 1 and zero "same" padding.

    Parameters
    ----------
    x : ndarray, shape (N, H, W, Cin)
    w : ndarray, shape (3, 3, Cin, Cout)
    b : ndarray, shape (Cout,)

    Returns
    -------
    ndarray, shape (N, H, W, Cout)
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_conv(x, w, b)
    n, h, wd, _ = x.shape
    cout = w.shape[3]
    out = _im2col(x) @ w.reshape(-1, cout)
    out += b
    return out.reshape(n, h, wd, cout)


def conv2d_backward(d_out, x, w) -> KernelGrads:
    """Gradients of :func:`conv2d` with respect to input, weights and bias."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    d_out = np.asarray(d_out, dtype=np.float64)
    _check_conv(x, w)
    cout = w.shape[3]
    if d_out.shape != x.shape[:3] + (cout,):
        raise ShapeError(f"upstream gradient {d_out.shape} does not match output shape")
    g2 = d_out.reshape(-1, cout)
    d_w = (_im2col(x).T @ g2).reshape(w.shape)
    d_b = g2.sum(axis=0)
    # input gradient is a same-padded correlation with the flipped, transposed kernel
    w_flip = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    d_x = conv2d(d_out, w_flip, np.zeros(w.shape[2]))
    return KernelGrads(d_x, d_w, d_b)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def _pool_windows(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    # window index k = 2*row + col, i.e. row-major order inside the window
    return x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(
        n, h // 2, w // 2, c, 4
    )


def maxpool2d(x) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2.

    Returns the pooled tensor and the argmax index (0..3, row-major inside
    each window) needed by :func:`maxpool2d_backward`.  Ties resolve to the
    first maximal element.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects rank 4, got rank {x.ndim}")
    if x.shape[1] % 2 or x.shape[2] % 2:
        raise ShapeError(f"maxpool2d needs even H and W, got {x.shape[1]} x {x.shape[2]}")
    win = _pool_windows(x)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2d_backward(d_out, argmax) -> np.ndarray:
    """Route each upstream gradient to the stored argmax position only."""
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != argmax.shape:
        raise ShapeError("upstream gradient and argmax mask disagree in shape")
    n, ho, wo, c = d_out.shape
    win = np.zeros((n, ho, wo, c, 4))
    np.put_along_axis(win, argmax[..., None], d_out[..., None], axis=-1)
    return (
        win.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * ho, 2 * wo, c)
    )


# ---------------------------------------------------------------------------
# batch normalisation
# ---------------------------------------------------------------------------

class BatchNormCache(NamedTuple):
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def batch_norm(x, gamma, beta, running_mean, running_var, training: bool,
               momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
    """Per-channel batch normalisation over every axis but the last.

    Returns ``(out, cache, new_running_mean, new_running_var)``.  In the
    inference phase the running statistics are used and returned unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},)")
    axes = tuple(range(x.ndim - 1))
    if training:
        m = x.size // c
        if m < 2:
            raise PreconditionError("batch_norm training needs at least 2 values per channel")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_mean = momentum * running_mean + (1.0 - momentum) * mean
        new_var = momentum * running_var + (1.0 - momentum) * var
    else:
        if x.size == 0:
            raise PreconditionError("batch_norm called on an empty batch")
        mean, var = np.asarray(running_mean), np.asarray(running_var)
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    out = gamma * x_hat + beta
    return out, BatchNormCache(x_hat, inv_std, gamma), new_mean, new_var


def batch_norm_backward(d_out, cache: BatchNormCache) -> KernelGrads:
    """Backward pass of training-phase batch norm (batch statistics)."""
    d_out = np.asarray(d_out, dtype=np.float64)
    axes = tuple(range(d_out.ndim - 1))
    m = d_out.size // d_out.shape[-1]
    d_beta = d_out.sum(axis=axes)
    d_gamma = (d_out * cache.x_hat).sum(axis=axes)
    d_x = (cache.gamma * cache.inv_std / m) * (m * d_out - d_beta - cache.x_hat * d_gamma)
    return KernelGrads(d_x, d_gamma, d_beta)


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

def dense(x, w, b) -> np.ndarray:
    """Affine map ``x @ w + b`` for x of shape (N, D) and w of shape (D, U)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: cannot map {x.shape} through weights {w.shape}")
    if np.shape(b) != (w.shape[1],):
        raise ShapeError(f"dense: bias must have shape ({w.shape[1]},)")
    return x @ w + b


def dense_backward(d_out, x, w) -> KernelGrads:
    d_out = np.asarray(d_out, dtype=np.float64)
    return KernelGrads(d_out @ w.T, x.T @ d_out, d_out.sum(axis=0))


def dense_param_count(d: int, u: int) -> int:
    return d * u + u


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def activation(x, kind: str) -> np.ndarray:
    """Apply ``relu``, ``sigmoid``, ``tanh`` or ``softmax`` (over the last axis)."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "softmax":
        return softmax(x)
    raise ConfigError(f"unknown activation {kind!r}")


def activation_backward(d_out, x, kind: str, out=None) -> np.ndarray:
    """Gradient of :func:`activation` given the input ``x``.

    ``out`` may carry the already computed forward result to avoid
    recomputing it.
    """
    d_out = np.asarray(d_out, dtype=np.float64)
    if kind == "relu":
        return d_out * (np.asarray(x) > 0)
    y = activation(x, kind) if out is None else out
    if kind == "sigmoid":
        return d_out * y * (1.0 - y)
    if kind == "tanh":
        return d_out * (1.0 - y * y)
    if kind == "softmax":
        return y * (d_out - (d_out * y).sum(axis=-1, keepdims=True))
    raise ConfigError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout(x, rate: float, rng, training: bool) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout.

    ``rng`` is a :class:`numpy.random.Generator` or an integer seed.  Returns
    ``(out, mask)`` where ``mask`` already includes the ``1 / (1 - rate)``
    scale, or ``None`` when the call is an identity.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x, None
    rng = np.random.default_rng(rng)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(d_out, mask) -> np.ndarray:
    return d_out if mask is None else d_out * mask


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against one-hot ``labels``.

    Returns ``(loss, d_logits)`` with ``d_logits = (softmax - labels) / N``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.ndim != 2 or labels.shape != logits.shape:
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} must be equal N x K")
    if not (np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)):
        raise ValidationError("labels must be one-hot rows")
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    loss = float(-(log_p * labels).sum() / n)
    d_logits = (np.exp(log_p) - labels) / n
    return loss, d_logits


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

class GradientCheck(NamedTuple):
    """Outcome of :func:`gradient_check`."""

    max_error: float  # max |analytic - numeric| / max(1, |analytic|) over checked coordinates
    checked: int
    kinks: int  # coordinates skipped because f is not differentiable within +-h


def gradient_check(f: Callable[[], float], params: Sequence[np.ndarray],
                   grads: Sequence[np.ndarray], h: float = 1e-5,
                   max_coords: int | None = None, seed: int = 0,
                   pattern: Callable[[], bytes] | None = None) -> GradientCheck:
    """Compare analytic gradients against central differences.

    ``f`` is a zero-argument closure returning a scalar that reads the
    arrays in ``params``; those arrays are perturbed in place and restored.
    When ``max_coords`` is given, that many coordinates per parameter are
    sampled instead of checking every entry.

    Piecewise-linear layers (ReLU, max pooling) make ``f`` non-differentiable
    on measure-zero sets that a finite step can still straddle.  ``pattern``,
    when given, returns a fingerprint of the branch choices (ReLU masks,
    pooling argmaxes) made by the most recent ``f()`` call.  A coordinate
    whose ``+h`` and ``-h`` evaluations take different branches is counted
    as a kink and left out of ``max_error``.
    """
    rng = np.random.default_rng(seed)
    worst, checked, kinks = 0.0, 0, 0
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ShapeError(f"gradient shape {np.shape(g)} differs from parameter {p.shape}")
        flat_p = p.reshape(-1)
        if not np.shares_memory(flat_p, p):
            raise ValidationError("parameters must be contiguous arrays")
        flat_g = np.asarray(g).reshape(-1)
        idx = np.arange(flat_p.size)
        if max_coords is not None and flat_p.size > max_coords:
            idx = rng.choice(flat_p.size, size=max_coords, replace=False)
        for i in idx:
            old = flat_p[i]
            flat_p[i] = old + h
            f_plus = f()
            branch = pattern() if pattern is not None else None
            flat_p[i] = old - h
            f_minus = f()
            flat_p[i] = old
            if pattern is not None and pattern() != branch:
                kinks += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * h)
            worst = max(worst, abs(flat_g[i] - numeric) / max(1.0, abs(flat_g[i])))
            checked += 1
    return GradientCheck(worst, checked, kinks)


def finite_difference_check(f: Callable[[], float], params: Sequence[np.ndarray],
                            grads: Sequence[np.ndarray], h: float = 1e-5,
                            max_coords: int | None = None, seed: int = 0) -> float:
    """Worst relative error of :func:`gradient_check` with every coordinate kept."""
    return gradient_check(f, params, grads, h, max_coords, seed).max_error
