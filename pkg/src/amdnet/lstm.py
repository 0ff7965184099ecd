"""Single-layer LSTM with backpropagation through time.

Each gate owns a ``(D + U) x U`` matrix applied to the concatenation
``[x_t, h_{t-1}]``::

    i_t  = sigmoid([x_t, h_{t-1}] W_i + b_i)
    g_t  = tanh   ([x_t, h_{t-1}] W_c + b_c)      # candidate cell state
    f_t  = sigmoid([x_t, h_{t-1}] W_f + b_f)
    o_t  = sigmoid([x_t, h_{t-1}] W_o + b_o)
    c_t  = f_t * c_{t-1} + i_t * g_t
    h_t  = o_t * tanh(c_t)
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .exceptions import PreconditionError, ShapeError, ValidationError
from .kernels import sigmoid

GATES = ("i", "c", "f", "o")


@dataclass
class LstmParams:
    W_i: np.ndarray
    W_c: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        shape = self.W_i.shape
        if len(shape) != 2 or shape[0] <= shape[1]:
            raise ShapeError(f"gate weights must be (D + U) x U, got {shape}")
        for g in GATES:
            if getattr(self, f"W_{g}").shape != shape:
                raise ShapeError("all gate weight matrices must share one shape")
            if getattr(self, f"b_{g}").shape != (shape[1],):
                raise ShapeError(f"gate biases must have shape ({shape[1]},)")

    @property
    def units(self) -> int:
        return self.W_i.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[0] - self.W_i.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, units: int) -> "LstmParams":
        w = lambda: np.zeros((input_dim + units, units))  # noqa: E731
        b = lambda: np.zeros(units)  # noqa: E731
        return cls(w(), w(), w(), w(), b(), b(), b(), b())

    @classmethod
    def initialize(cls, input_dim: int, units: int, rng) -> "LstmParams":
        """Uniform weights in +-sqrt(6 / (D + 2U)); zero biases, forget bias 1."""
        rng = np.random.default_rng(rng)
        limit = np.sqrt(6.0 / (input_dim + 2 * units))
        ws = [rng.uniform(-limit, limit, (input_dim + units, units)) for _ in GATES]
        p = cls(*ws, *(np.zeros(units) for _ in GATES))
        p.b_f[:] = 1.0
        return p

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


class StepCache(NamedTuple):
    xh: np.ndarray
    i: np.ndarray
    g: np.ndarray
    f: np.ndarray
    o: np.ndarray
    c_prev: np.ndarray
    tanh_c: np.ndarray


class SequenceCache(NamedTuple):
    params: LstmParams
    steps: list
    shape: tuple


def lstm_cell_step(x_t, prev: LstmState, params: LstmParams) -> tuple[LstmState, StepCache]:
    """Advance one time step; returns the new state and the gate cache."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 2 or x_t.shape[1] != params.input_dim:
        raise ShapeError(f"x_t must be N x {params.input_dim}, got {x_t.shape}")
    if prev.h.shape != (x_t.shape[0], params.units) or prev.c.shape != prev.h.shape:
        raise ShapeError("previous state does not match batch size / hidden width")
    xh = np.concatenate([x_t, prev.h], axis=1)
    i = sigmoid(xh @ params.W_i + params.b_i)
    g = np.tanh(xh @ params.W_c + params.b_c)
    f = sigmoid(xh @ params.W_f + params.b_f)
    o = sigmoid(xh @ params.W_o + params.b_o)
    c = f * prev.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return LstmState(h, c), StepCache(xh, i, g, f, o, prev.c, tanh_c)


def zero_state(n: int, units: int) -> LstmState:
    return LstmState(np.zeros((n, units)), np.zeros((n, units)))


def lstm_sequence_forward(x, params: LstmParams, init: LstmState | None = None):
    """Run the cell over every step of ``x`` (N x T x D).

    Returns ``(h_seq, cache)`` where ``h_seq`` is N x T x U, the hidden state
    at every step.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"sequence input must be N x T x D, got {x.shape}")
    n, t_len, _ = x.shape
    if t_len < 1:
        raise PreconditionError("sequence must contain at least one time step")
    state = zero_state(n, params.units) if init is None else init
    out = np.empty((n, t_len, params.units))
    steps = []
    for t in range(t_len):
        state, step = lstm_cell_step(x[:, t, :], state, params)
        out[:, t, :] = state.h
        steps.append(step)
    return out, SequenceCache(params, steps, x.shape)


def lstm_backward(cache: SequenceCache, d_out) -> tuple[np.ndarray, LstmParams]:
    """Backpropagation through time.

    Returns the input gradient (N x T x D) and an :class:`LstmParams`
    holding the parameter gradients.
    """
    if not isinstance(cache, SequenceCache):
        raise ValidationError("lstm_backward needs the cache returned by lstm_sequence_forward")
    params = cache.params
    n, t_len, d = cache.shape
    u = params.units
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != (n, t_len, u) or len(cache.steps) != t_len:
        raise ValidationError(
            f"upstream gradient {d_out.shape} does not match cached forward pass {(n, t_len, u)}"
        )
    if params.input_dim != d:
        raise ValidationError("cached parameters no longer match the forward input width")

    grads = LstmParams.zeros(d, u)
    d_x = np.empty((n, t_len, d))
    dh_next = np.zeros((n, u))
    dc_next = np.zeros((n, u))
    for t in reversed(range(t_len)):
        s = cache.steps[t]
        dh = d_out[:, t, :] + dh_next
        d_o = dh * s.tanh_c
        dc = dc_next + dh * s.o * (1.0 - s.tanh_c ** 2)
        d_f = dc * s.c_prev
        d_i = dc * s.g
        d_g = dc * s.i
        dc_next = dc * s.f
        pre = {
            "i": d_i * s.i * (1.0 - s.i),
            "c": d_g * (1.0 - s.g ** 2),
            "f": d_f * s.f * (1.0 - s.f),
            "o": d_o * s.o * (1.0 - s.o),
        }
        d_xh = np.zeros_like(s.xh)
        for gate, da in pre.items():
            getattr(grads, f"W_{gate}")[...] += s.xh.T @ da
            getattr(grads, f"b_{gate}")[...] += da.sum(axis=0)
            d_xh += da @ getattr(params, f"W_{gate}").T
        d_x[:, t, :] = d_xh[:, :d]
        dh_next = d_xh[:, d:]
    return d_x, grads
