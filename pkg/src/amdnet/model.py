"""AMDNet23: six convolution blocks feeding an LSTM and two dense layers.

Functional core: a :class:`ModelState` holds every tensor, and the free
functions here build, run, differentiate, optimise and serialise it.
:class:`amdnet.estimator.AMDNet23Classifier` wraps this for scikit-learn.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import kernels as K
from .exceptions import (
    ConfigError,
    CorruptCheckpointError,
    NotFittedError,
    ShapeError,
    SpecMismatchError,
    TrainingDivergedError,
)
from .lstm import LstmParams, lstm_backward, lstm_sequence_forward

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"AMDNCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Layer plan of the network.

    The defaults give the full-size network: 256 x 256 x 3 input, blocks of
    (2, 2, 2, 2, 3, 3) convolutions with (32, 64, 128, 256, 512, 512) filters,
    an LSTM over the 4 x 4 = 16 spatial positions with 512 units, a 64-unit
    dense layer and a 4-way output.
    """

    input_size: int = 256
    channels: int = 3
    filters: tuple = (32, 64, 128, 256, 512, 512)
    convs_per_block: tuple = (2, 2, 2, 2, 3, 3)
    dropout: float = 0.2
    lstm_units: int = 512
    fc_units: int = 64
    n_classes: int = 4

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        object.__setattr__(self, "convs_per_block", tuple(int(c) for c in self.convs_per_block))
        if len(self.filters) != len(self.convs_per_block):
            raise ConfigError("filters and convs_per_block must list one entry per block")
        factor = 2 ** len(self.filters)
        if self.input_size < factor or self.input_size % factor:
            raise ConfigError(
                f"input_size {self.input_size} must be a positive multiple of {factor}"
            )
        if min(self.filters + self.convs_per_block) < 1:
            raise ConfigError("filter counts and convs per block must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        for name in ("channels", "lstm_units", "fc_units", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def final_size(self) -> int:
        return self.input_size // 2 ** len(self.filters)

    @property
    def seq_len(self) -> int:
        return self.final_size ** 2

    @property
    def lstm_input(self) -> int:
        return self.filters[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filters"] = list(self.filters)
        d["convs_per_block"] = list(self.convs_per_block)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    learning_rate: float = 0.001
    decay_rate: float = 0.95
    decay_step: int = 1
    seed: int = 0
    augment: bool = True
    recalibrate_bn: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ConfigError(f"decay_rate must lie in (0, 1], got {self.decay_rate}")
        if self.decay_step < 1:
            raise ConfigError(f"decay_step must be >= 1, got {self.decay_step}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")

    def lr_at(self, epoch: int) -> float:
        return learning_rate(epoch, self.learning_rate, self.decay_rate, self.decay_step)


def learning_rate(epoch: int, lr0: float = 0.001, decay_rate: float = 0.95,
                  decay_step: int = 1) -> float:
    """Staircase exponential decay, stepped once per ``decay_step`` epochs."""
    return lr0 * decay_rate ** (epoch // decay_step)


@dataclass
class ModelState:
    spec: ModelSpec
    params: dict
    running: dict
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    epoch: int = 0
    step: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.adam_m:
            self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        if not self.adam_v:
            self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))


class LayerInfo(NamedTuple):
    index: int
    kind: str
    kernel_size: str
    units: str
    input_shape: tuple
    output_shape: tuple
    n_params: int

    @property
    def input_size_cell(self) -> str:
        """The layer's entry in the summary table's "Input Size" column.

        Rows for the dense layers carry their parameter count there, as the
        published table does.
        """
        if self.kind in ("FC", "Output"):
            return str(self.n_params)
        return " X ".join(str(s) for s in self.input_shape)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _conv_names(spec: ModelSpec):
    for b, (nf, nc) in enumerate(zip(spec.filters, spec.convs_per_block), start=1):
        for k in range(1, nc + 1):
            yield b, k, nf


def shape_trace(spec: ModelSpec) -> list[LayerInfo]:
    """Per-layer shapes and parameter counts of the numbered layers.

    Batch-norm and dropout layers are not numbered, so a default spec gives
    23 rows: 14 convolutions, 6 poolings, the LSTM, the dense layer and the
    output layer.
    """
    rows: list[LayerInfo] = []
    size, ch = spec.input_size, spec.channels
    for nf, nc in zip(spec.filters, spec.convs_per_block):
        for _ in range(nc):
            rows.append(LayerInfo(len(rows) + 1, "Convolution2D", "3 X 3", str(nf),
                                  (size, size, ch), (size, size, nf), 9 * ch * nf + nf))
            ch = nf
        rows.append(LayerInfo(len(rows) + 1, "Maxpooling2D", "2 X 2", "-",
                              (size, size, ch), (size // 2, size // 2, ch), 0))
        size //= 2
    t, d, u = spec.seq_len, spec.lstm_input, spec.lstm_units
    rows.append(LayerInfo(len(rows) + 1, "LSTM", "-", "-", (t, d), (t, u), 4 * ((d + u) * u + u)))
    flat = t * u
    rows.append(LayerInfo(len(rows) + 1, "FC", "-", str(spec.fc_units), (flat,),
                          (spec.fc_units,), K.dense_param_count(flat, spec.fc_units)))
    rows.append(LayerInfo(len(rows) + 1, "Output", "-", str(spec.n_classes), (spec.fc_units,),
                          (spec.n_classes,), K.dense_param_count(spec.fc_units, spec.n_classes)))
    return rows


def build_model(spec: ModelSpec | None = None, seed: int = 0) -> tuple[ModelState, list[LayerInfo]]:
    """Initialise weights for ``spec`` and return ``(state, shape_trace)``.

    Convolutions use He-uniform (fan-in) initialisation, dense layers
    Glorot-uniform, batch norm starts at gamma=1, beta=0 with running
    mean 0 / variance 1.
    """
    spec = ModelSpec() if spec is None else spec
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    running: dict[str, np.ndarray] = {}
    ch = spec.channels
    for b, k, nf in _conv_names(spec):
        limit = np.sqrt(6.0 / (9 * ch))
        params[f"block{b}.conv{k}.w"] = rng.uniform(-limit, limit, (3, 3, ch, nf))
        params[f"block{b}.conv{k}.b"] = np.zeros(nf)
        ch = nf
        if k == spec.convs_per_block[b - 1]:
            params[f"block{b}.bn.gamma"] = np.ones(nf)
            params[f"block{b}.bn.beta"] = np.zeros(nf)
            running[f"block{b}.bn.mean"] = np.zeros(nf)
            running[f"block{b}.bn.var"] = np.ones(nf)
    lstm = LstmParams.initialize(spec.lstm_input, spec.lstm_units, rng)
    for name, arr in lstm.arrays().items():
        params[f"lstm.{name}"] = arr
    flat = spec.seq_len * spec.lstm_units
    for name, d, u in (("fc", flat, spec.fc_units), ("out", spec.fc_units, spec.n_classes)):
        limit = np.sqrt(6.0 / (d + u))
        params[f"{name}.w"] = rng.uniform(-limit, limit, (d, u))
        params[f"{name}.b"] = np.zeros(u)
    state = ModelState(spec, params, running, seed=seed)
    return state, shape_trace(spec)


def _lstm_params(state: ModelState) -> LstmParams:
    p = state.params
    return LstmParams(*(p[f"lstm.{n}"] for n in ("W_i", "W_c", "W_f", "W_o", "b_i", "b_c", "b_f", "b_o")))


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _check_batch(state: ModelState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    s = state.spec
    if x.ndim != 4:
        raise ShapeError(f"expected an N x H x W x C batch, got shape {x.shape}")
    if x.shape[3] != s.channels:
        raise ShapeError(f"expected {s.channels} channels, got {x.shape[3]}")
    if x.shape[1:3] != (s.input_size, s.input_size):
        raise ShapeError(
            f"model expects {s.input_size} x {s.input_size} images, got {x.shape[1]} x {x.shape[2]}"
        )
    return x


def forward(state: ModelState, x, training: bool = False, rng=None,
            bn_momentum: float = K.BN_MOMENTUM):
    """Compute logits for a batch scaled to [0, 1].

    In the training phase batch statistics are used (and the running
    statistics in ``state`` are updated), dropout masks are drawn from
    ``rng`` and a cache for :func:`backward` is returned; otherwise the
    cache is ``None``.
    """
    a = _check_batch(state, x)
    spec, p = state.spec, state.params
    rng = np.random.default_rng(rng) if training else None
    cache: dict = {"convs": [], "blocks": []} if training else None

    for b, k, _ in _conv_names(spec):
        pre = K.conv2d(a, p[f"block{b}.conv{k}.w"], p[f"block{b}.conv{k}.b"])
        if training:
            cache["convs"].append((b, k, a, pre))
        a = np.maximum(pre, 0.0)
        if k != spec.convs_per_block[b - 1]:
            continue
        # block tail: batch norm -> max pool -> dropout
        bn = f"block{b}.bn"
        a, bn_cache, mean, var = K.batch_norm(
            a, p[f"{bn}.gamma"], p[f"{bn}.beta"],
            state.running[f"{bn}.mean"], state.running[f"{bn}.var"], training, bn_momentum,
        )
        if training:
            state.running[f"{bn}.mean"], state.running[f"{bn}.var"] = mean, var
        a, arg = K.maxpool2d(a)
        a, mask = K.dropout(a, spec.dropout, rng, training)
        if training:
            cache["blocks"].append((b, bn_cache, arg, mask))

    n = a.shape[0]
    seq = a.reshape(n, spec.seq_len, spec.lstm_input)
    h_seq, lstm_cache = lstm_sequence_forward(seq, _lstm_params(state))
    flat = h_seq.reshape(n, -1)
    fc_pre = K.dense(flat, p["fc.w"], p["fc.b"])
    fc = np.maximum(fc_pre, 0.0)
    logits = K.dense(fc, p["out.w"], p["out.b"])
    if training:
        cache.update(lstm=lstm_cache, flat=flat, fc_pre=fc_pre, fc=fc, pool_shape=a.shape)
    return logits, cache


def backward(state: ModelState, cache: dict, d_logits) -> dict:
    """Gradients of every parameter given the gradient of the logits."""
    if cache is None:
        raise ConfigError("backward needs a cache from a training-phase forward pass")
    p, spec = state.params, state.spec
    grads: dict[str, np.ndarray] = {}

    g = K.dense_backward(d_logits, cache["fc"], p["out.w"])
    grads["out.w"], grads["out.b"] = g.d_weights, g.d_bias
    d_fc = g.d_input * (cache["fc_pre"] > 0)
    g = K.dense_backward(d_fc, cache["flat"], p["fc.w"])
    grads["fc.w"], grads["fc.b"] = g.d_weights, g.d_bias
    d_seq = g.d_input.reshape(cache["lstm"].shape[0], spec.seq_len, spec.lstm_units)
    d_x, lstm_grads = lstm_backward(cache["lstm"], d_seq)
    for name, arr in lstm_grads.arrays().items():
        grads[f"lstm.{name}"] = arr
    d_a = d_x.reshape(cache["pool_shape"])

    blocks = {b: rest for b, *rest in cache["blocks"]}
    for b, k, a_in, pre in reversed(cache["convs"]):
        if k == spec.convs_per_block[b - 1]:
            bn_cache, arg, mask = blocks[b]
            d_a = K.dropout_backward(d_a, mask)
            d_a = K.maxpool2d_backward(d_a, arg)
            g = K.batch_norm_backward(d_a, bn_cache)
            grads[f"block{b}.bn.gamma"], grads[f"block{b}.bn.beta"] = g.d_weights, g.d_bias
            d_a = g.d_input
        d_pre = d_a * (pre > 0)
        g = K.conv2d_backward(d_pre, a_in, p[f"block{b}.conv{k}.w"])
        grads[f"block{b}.conv{k}.w"], grads[f"block{b}.conv{k}.b"] = g.d_weights, g.d_bias
        d_a = g.d_input
    return grads


def loss_and_grads(state: ModelState, x, y_onehot, rng=None):
    """Training-phase forward + backward.  Returns ``(loss, grads, logits)``."""
    logits, cache = forward(state, x, training=True, rng=rng)
    loss, d_logits = K.softmax_cross_entropy(logits, y_onehot)
    return loss, backward(state, cache, d_logits), logits


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

def adam_step(state: ModelState, grads: dict, epoch: int, lr0: float = 0.001,
              decay_rate: float = 0.95, decay_step: int = 1) -> float:
    """One bias-corrected Adam update in place; returns the learning rate used."""
    for name, g in grads.items():
        if name not in state.params:
            raise ConfigError(f"gradient for unknown parameter {name!r}")
        if g.shape != state.params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {state.params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(
                f"non-finite gradient for {name} at epoch {epoch}, step {state.step + 1}"
            )
    lr = learning_rate(epoch, lr0, decay_rate, decay_step)
    state.step += 1
    c1 = 1.0 - ADAM_BETA1 ** state.step
    c2 = 1.0 - ADAM_BETA2 ** state.step
    for name, g in grads.items():
        m, v = state.adam_m[name], state.adam_v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        state.params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return lr


class ArrayBatches:
    """Shuffled mini-batches over in-memory arrays.

    The permutation for an epoch depends only on ``(seed, epoch)``.
    """

    def __init__(self, X, Y, batch_size: int = 32, seed: int = 0, shuffle: bool = True):
        self.X = np.asarray(X, dtype=np.float64)
        self.Y = np.asarray(Y, dtype=np.float64)
        if len(self.X) == 0:
            raise ConfigError("cannot iterate over an empty dataset")
        if len(self.X) != len(self.Y):
            raise ShapeError("X and Y disagree in length")
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle

    def __len__(self) -> int:
        return len(self.X)

    def batches(self, epoch: int = 0) -> Iterable[tuple[np.ndarray, np.ndarray]]:
        order = np.arange(len(self.X))
        if self.shuffle:
            order = np.random.default_rng([self.seed, epoch]).permutation(len(self.X))
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            yield self.X[idx], self.Y[idx]


def evaluate(state: ModelState, data) -> tuple[float, float]:
    """Inference-phase mean loss and accuracy over ``data`` (batches at epoch 0)."""
    total_loss = 0.0
    correct = 0
    n = 0
    for xb, yb in data.batches(0):
        logits, _ = forward(state, xb, training=False)
        loss, _ = K.softmax_cross_entropy(logits, yb)
        total_loss += loss * len(xb)
        correct += int((logits.argmax(axis=1) == yb.argmax(axis=1)).sum())
        n += len(xb)
    return total_loss / n, correct / n


def recalibrate_batch_norm(state: ModelState, data) -> None:
    """Replace the running batch-norm statistics with data averages.

    The momentum averages trail the weights while they are still moving
    quickly, so after a short run they can be far from the statistics the
    final weights produce.  Here every batch of ``data.batches(0)`` is passed
    forward in the training phase with dropout off; each layer's batch mean
    and variance are averaged, weighted by batch size, and stored as the
    running statistics.  Parameters are untouched.
    """
    probe = ModelState(replace(state.spec, dropout=0.0), state.params, dict(state.running))
    sums = {k: np.zeros_like(v) for k, v in state.running.items()}
    n = 0
    for xb, _ in data.batches(0):
        forward(probe, xb, training=True, rng=0, bn_momentum=0.0)
        for k in sums:
            sums[k] += len(xb) * probe.running[k]
        n += len(xb)
    if n == 0:
        raise ConfigError("batch-norm recalibration got no samples")
    for k, total in sums.items():
        state.running[k] = total / n


def fit(state: ModelState, train, config: TrainConfig | None = None, validation=None) -> list[dict]:
    """Train ``state`` in place for ``config.epochs`` epochs.

    ``train`` and ``validation`` are batch sources exposing
    ``batches(epoch)``, or ``(X, Y_onehot)`` tuples which are wrapped in
    :class:`ArrayBatches`.  Epoch numbers continue from ``state.epoch`` so the
    learning-rate schedule survives resumption.

    Returns one record per epoch with ``epoch, lr, train_loss, train_acc,
    val_loss, val_acc`` (validation entries are ``None`` without a
    validation source).  Training loss and accuracy are accumulated over the
    training-phase batches of the epoch.  With ``config.recalibrate_bn`` the
    running batch-norm statistics are re-estimated on ``train`` once the last
    epoch is done (see :func:`recalibrate_batch_norm`).
    """
    config = TrainConfig() if config is None else config
    if isinstance(train, tuple):
        train = ArrayBatches(*train, batch_size=config.batch_size, seed=config.seed)
    if isinstance(validation, tuple):
        validation = ArrayBatches(*validation, batch_size=config.batch_size, shuffle=False)

    history = []
    for _ in range(config.epochs):
        epoch = state.epoch
        total_loss, correct, seen = 0.0, 0, 0
        lr = config.lr_at(epoch)
        for bi, (xb, yb) in enumerate(train.batches(epoch)):
            rng = np.random.default_rng([config.seed, epoch, bi])
            loss, grads, logits = loss_and_grads(state, xb, yb, rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} at epoch {epoch}, batch {bi}")
            adam_step(state, grads, epoch, config.learning_rate, config.decay_rate, config.decay_step)
            total_loss += loss * len(xb)
            correct += int((logits.argmax(axis=1) == yb.argmax(axis=1)).sum())
            seen += len(xb)
        if seen == 0:
            raise ConfigError("training set yielded no samples")
        record = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": total_loss / seen,
            "train_acc": correct / seen,
            "val_loss": None,
            "val_acc": None,
        }
        if validation is not None:
            record["val_loss"], record["val_acc"] = evaluate(state, validation)
        logger.info("epoch %d lr=%.6g loss=%.4f acc=%.4f", epoch, lr,
                    record["train_loss"], record["train_acc"])
        history.append(record)
        state.epoch += 1
    if config.recalibrate_bn and config.epochs > 0:
        recalibrate_batch_norm(state, train)
    return history


def predict(state: ModelState | None, x, batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and argmax labels (lowest index wins ties)."""
    if state is None:
        raise NotFittedError("no model loaded; build, train or load a checkpoint first")
    x = _check_batch(state, x)
    probs = []
    for start in range(0, len(x), batch_size):
        logits, _ = forward(state, x[start:start + batch_size], training=False)
        probs.append(K.softmax(logits))
    probs = np.concatenate(probs, axis=0)
    return probs, probs.argmax(axis=1)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _tensor_groups(state: ModelState):
    for prefix, group in (("param", state.params), ("bn", state.running),
                          ("adam_m", state.adam_m), ("adam_v", state.adam_v)):
        for name, arr in group.items():
            yield f"{prefix}/{name}", arr


def save_checkpoint(state: ModelState, path) -> None:
    """Write ``state`` as a versioned, checksummed binary file.

    Layout: magic, uint16 version, uint32 header length, UTF-8 JSON header
    (spec, counters, tensor names/shapes), little-endian row-major float64
    payloads in header order, then the SHA-256 digest of everything before it.
    """
    tensors = list(_tensor_groups(state))
    header = {
        "spec": state.spec.to_dict(),
        "epoch": state.epoch,
        "step": state.step,
        "seed": state.seed,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    h = hashlib.sha256()
    path = Path(path)
    with open(path, "wb") as fh:
        def put(chunk: bytes):
            h.update(chunk)
            fh.write(chunk)

        put(CHECKPOINT_MAGIC + struct.pack("<HI", CHECKPOINT_VERSION, len(hbytes)))
        put(hbytes)
        for _, arr in tensors:
            put(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(h.digest())


def load_checkpoint(path, expected_spec: ModelSpec | None = None) -> ModelState:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises :class:`CorruptCheckpointError` on bad magic, version or checksum
    and :class:`SpecMismatchError` when ``expected_spec`` differs from the
    spec stored in the file.
    """
    raw = Path(path).read_bytes()
    head = len(CHECKPOINT_MAGIC) + 6
    if len(raw) < head + 32 or raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: not a checkpoint or truncated")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpointError(f"{path}: checksum mismatch (truncated or modified)")
    version, hlen = struct.unpack("<HI", raw[len(CHECKPOINT_MAGIC):head])
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(body[head:head + hlen].decode("utf-8"))
        spec = ModelSpec.from_dict(header["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header ({exc})") from exc
    if expected_spec is not None and spec != expected_spec:
        raise SpecMismatchError(
            f"{path} was written for {spec.to_dict()}, not {expected_spec.to_dict()}"
        )
    groups = {"param": {}, "bn": {}, "adam_m": {}, "adam_v": {}}
    offset = head + hlen
    for t in header["tensors"]:
        shape = tuple(t["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(body):
            raise CorruptCheckpointError(f"{path}: payload shorter than header declares")
        arr = np.frombuffer(body, dtype="<f8", count=nbytes // 8, offset=offset)
        prefix, name = t["name"].split("/", 1)
        groups[prefix][name] = arr.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(body):
        raise CorruptCheckpointError(f"{path}: trailing bytes after payload")
    return ModelState(spec, groups["param"], groups["bn"], groups["adam_m"], groups["adam_v"],
                      epoch=header["epoch"], step=header["step"], seed=header["seed"])
