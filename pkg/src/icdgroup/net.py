"""
Feed-forward multi-label classifier with learned per-dimension fusion gates.

Architecture (hybrid mode)::

    fused = g1 * x1 + g2 * x2                 (elementwise, gates start at 0.5)
    h1 = dropout(relu(fused @ W1 + b1))       200 -> 1024, inverted dropout 0.2
    h2 = relu(h1 @ W2 + b2)                   1024 -> 512
    h3 = relu(h2 @ W3 + b3)                   512 -> 256
    h4 = relu(h3 @ W4 + b4)                   256 -> 128
    p  = sigmoid(h4 @ W5 + b5)                128 -> 20

Single-channel modes skip the gates and feed one input straight into the
first dense layer. Everything is plain numpy in float64; backpropagation is
written out by hand and verified against central finite differences.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, NumericError
from .icd9 import N_GROUPS

log = logging.getLogger(__name__)

HIDDEN = (1024, 512, 256, 128)
PROB_CLAMP = 1e-7
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


@dataclass
class Scaler:
    """Per-column affine map of the training range onto [-1, 1], one entry per channel."""

    mins: list[np.ndarray]
    maxs: list[np.ndarray]

    def transform(self, channel: int, x: np.ndarray) -> np.ndarray:
        lo, hi = self.mins[channel], self.maxs[channel]
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != lo.shape[0]:
            raise DataError(f"channel {channel}: expected {lo.shape[0]} columns, got {x.shape[-1]}")
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, 2.0 * (x - lo) / safe - 1.0, 0.0)
        return np.clip(out, -1.0, 1.0)


def fit_scaler(channels: Sequence[np.ndarray]) -> Scaler:
    mins, maxs = [], []
    for x in channels:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise DataError("scaler needs a non-empty 2-D training matrix per channel")
        mins.append(x.min(axis=0))
        maxs.append(x.max(axis=0))
    return Scaler(mins, maxs)


def apply_scaler(scaler: Scaler, channels: Sequence[np.ndarray]) -> list[np.ndarray]:
    if len(channels) != len(scaler.mins):
        raise DataError(f"scaler fitted on {len(scaler.mins)} channel(s), got {len(channels)}")
    return [scaler.transform(i, x) for i, x in enumerate(channels)]


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gates: list[np.ndarray] | None = None  # [g1, g2] in hybrid mode
    dropout_rate: float = 0.2

    @property
    def n_channels(self) -> int:
        return 1 if self.gates is None else len(self.gates)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        if self.gates is not None:
            for i, g in enumerate(self.gates):
                out[f"g{i + 1}"] = g
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i + 1}"] = w
            out[f"b{i + 1}"] = b
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.gates is None else [g.copy() for g in self.gates],
            self.dropout_rate,
        )

    def is_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors().values())


def init_params(
    input_dim: int = 200,
    n_channels: int = 2,
    rng: np.random.Generator | None = None,
    hidden: Sequence[int] = HIDDEN,
    n_outputs: int = N_GROUPS,
    dropout_rate: float = 0.2,
) -> ModelParams:
    """He-uniform weights (bound sqrt(6/fan_in)), zero biases, fusion gates at 0.5."""
    rng = rng or np.random.default_rng(0)
    sizes = [input_dim, *hidden, n_outputs]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    gates = [np.full(input_dim, 0.5) for _ in range(n_channels)] if n_channels > 1 else None
    return ModelParams(weights, biases, gates, dropout_rate)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def _fuse(params: ModelParams, inputs: Sequence[np.ndarray]) -> np.ndarray:
    if len(inputs) != params.n_channels:
        raise DataError(f"model expects {params.n_channels} input channel(s), got {len(inputs)}")
    for x in inputs:
        if x.shape[1] != params.input_dim:
            raise DataError(f"input width {x.shape[1]} does not match model input {params.input_dim}")
        if not np.isfinite(x).all():
            raise DataError("non-finite value in model input")
    if params.gates is None:
        return inputs[0]
    fused = params.gates[0] * inputs[0]
    for g, x in zip(params.gates[1:], inputs[1:]):
        fused = fused + g * x
    return fused


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped units, 1/(1-rate) for kept ones."""
    if rate <= 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward_cache(params: ModelParams, inputs: Sequence[np.ndarray], mask: np.ndarray | None):
    fused = _fuse(params, inputs)
    acts = [fused]
    pre = []
    a = fused
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        if i == n_layers - 1:
            a = _sigmoid(z)
        else:
            a = np.maximum(z, 0.0)
            if i == 0 and mask is not None:
                a = a * mask
        acts.append(a)
    return acts, pre


def forward(params: ModelParams, *inputs, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Output probabilities for one sample (1-D inputs) or a batch (2-D inputs).

    With ``training=True`` inverted dropout is applied after the first dense
    layer using ``rng``; otherwise the function is deterministic.
    """
    single = np.asarray(inputs[0]).ndim == 1
    batch = [_as_batch(x) for x in inputs]
    mask = None
    if training and params.dropout_rate > 0:
        rng = rng or np.random.default_rng()
        mask = dropout_mask((batch[0].shape[0], params.weights[0].shape[1]), params.dropout_rate, rng)
    acts, _ = _forward_cache(params, batch, mask)
    return acts[-1][0] if single else acts[-1]


def bce_loss(p: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy over batch and labels with p clamped to [1e-7, 1-1e-7]."""
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gates: list[np.ndarray] | None

    def tensors(self) -> dict[str, np.ndarray]:
        return ModelParams(self.weights, self.biases, self.gates).tensors()


def loss_and_grads(
    params: ModelParams, inputs: Sequence[np.ndarray], y: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, Gradients]:
    """Loss and its analytic gradient for one batch (``mask`` = dropout multiplier or None)."""
    inputs = [_as_batch(x) for x in inputs]
    y = _as_batch(y)
    acts, pre = _forward_cache(params, inputs, mask)
    p = acts[-1]
    loss = bce_loss(p, y)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    # d(mean BCE)/dz for a sigmoid output; zero where the clamp is active
    delta = (p - y) * inside / y.size
    n_layers = len(params.weights)
    gw: list = [None] * n_layers
    gb: list = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        da = delta @ params.weights[i].T
        if i == 0:
            break
        if i == 1 and mask is not None:
            da = da * mask
        delta = da * (pre[i - 1] > 0)
    gg = None
    if params.gates is not None:
        gg = [(da * x).sum(axis=0) for x in inputs]
    return loss, Gradients(gw, gb, gg)


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> None:
    for w, g in zip(params.weights, grads.weights):
        w -= lr * g
    for b, g in zip(params.biases, grads.biases):
        b -= lr * g
    if params.gates is not None:
        for gate, g in zip(params.gates, grads.gates):
            gate -= lr * g


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    validation_fraction: float = 0.2
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class Dataset:
    channels: list[np.ndarray]
    targets: np.ndarray

    def __post_init__(self):
        self.channels = [np.asarray(c, dtype=np.float64) for c in self.channels]
        self.targets = np.asarray(self.targets, dtype=np.float64)
        n = self.targets.shape[0]
        if n == 0:
            raise DataError("empty dataset")
        if any(c.shape[0] != n for c in self.channels):
            raise DataError("channel and target row counts differ")

    def __len__(self) -> int:
        return self.targets.shape[0]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset([c[idx] for c in self.channels], self.targets[idx])


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)  # mean minibatch loss, dropout on
    train_eval_loss: list[float] = field(default_factory=list)  # index 0 = before training
    val_loss: list[float] = field(default_factory=list)


def _rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng([seed, *label.encode()])


def split_by_admission(hadm_ids: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of (train, validation) with whole admissions on one side only."""
    hadm_ids = np.asarray(hadm_ids)
    unique = np.unique(hadm_ids)
    rng = _rng(seed, "split")
    n_val = int(round(fraction * unique.size))
    if fraction > 0 and unique.size > 1:
        n_val = min(max(n_val, 1), unique.size - 1)
    val_adm = set(rng.permutation(unique)[:n_val].tolist())
    is_val = np.array([h in val_adm for h in hadm_ids.tolist()], dtype=bool)
    return np.flatnonzero(~is_val), np.flatnonzero(is_val)


def evaluate_loss(params: ModelParams, data: Dataset, batch_size: int = 1024) -> float:
    p = predict_scores(params, data.channels, batch_size)
    return bce_loss(p, data.targets)


def train_model(
    train: Dataset,
    config: TrainConfig | None = None,
    validation: Dataset | None = None,
    params: ModelParams | None = None,
) -> tuple[ModelParams, History]:
    """Plain minibatch SGD on mean BCE; every random draw comes from ``config.seed``."""
    config = config or TrainConfig()
    if params is None:
        params = init_params(
            train.channels[0].shape[1],
            len(train.channels),
            _rng(config.seed, "init"),
            n_outputs=train.targets.shape[1],
            dropout_rate=config.dropout_rate,
        )
    shuffle_rng = _rng(config.seed, "shuffle")
    drop_rng = _rng(config.seed, "dropout")
    history = History()
    history.train_eval_loss.append(evaluate_loss(params, train))
    n = len(train)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            mask = None
            if params.dropout_rate > 0:
                mask = dropout_mask((idx.size, params.weights[0].shape[1]), params.dropout_rate, drop_rng)
            loss, grads = loss_and_grads(params, [c[idx] for c in train.channels], train.targets[idx], mask)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch + 1}, batch {batches + 1}; "
                    f"gradient norms {[float(np.linalg.norm(g)) for g in grads.weights]}"
                )
            sgd_step(params, grads, config.learning_rate)
            total += loss
            batches += 1
        if not params.is_finite():
            raise NumericError(f"non-finite parameters after epoch {epoch + 1}")
        history.train_loss.append(total / batches)
        history.train_eval_loss.append(evaluate_loss(params, train))
        if validation is not None:
            history.val_loss.append(evaluate_loss(params, validation))
        log.debug(
            "epoch %d: train %.4f val %s", epoch + 1, history.train_loss[-1],
            f"{history.val_loss[-1]:.4f}" if history.val_loss else "-",
        )
    return params, history


def predict_scores(params: ModelParams, channels: Sequence[np.ndarray], batch_size: int = 1024) -> np.ndarray:
    """Dropout-free scores, one row per input row, in input order."""
    channels = [_as_batch(c) for c in channels]
    n = channels[0].shape[0]
    out = np.empty((n, params.weights[-1].shape[1]))
    for start in range(0, n, batch_size):
        acts, _ = _forward_cache(params, [c[start : start + batch_size] for c in channels], None)
        out[start : start + batch_size] = acts[-1]
    return out


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


def _relu_pattern(params, inputs, mask):
    _, pre = _forward_cache(params, inputs, mask)
    return [z > 0 for z in pre[:-1]]


def gradient_check(
    params: ModelParams,
    inputs: Sequence[np.ndarray],
    targets: np.ndarray,
    epsilon: float = 1e-4,
    samples_per_tensor: int = 12,
    seed: int = 0,
    use_dropout: bool = True,
    grad_fn: Callable | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    A random subset of entries of every tensor (gates included) is probed.
    Entries whose perturbation flips a ReLU on or off are skipped, since the
    loss is not differentiable across the kink. ``grad_fn`` replaces
    :func:`loss_and_grads` (used to show that a corrupted gradient fails).
    """
    rng = np.random.default_rng(seed)
    inputs = [_as_batch(x) for x in inputs]
    targets = _as_batch(targets)
    mask = None
    if use_dropout and params.dropout_rate > 0:
        mask = dropout_mask((inputs[0].shape[0], params.weights[0].shape[1]), params.dropout_rate, rng)
    grad_fn = grad_fn or loss_and_grads
    _, grads = grad_fn(params, inputs, targets, mask)
    analytic = grads.tensors()
    base_pattern = _relu_pattern(params, inputs, mask)

    def probe(tensor: np.ndarray, flat: int, delta: float):
        old = tensor.flat[flat]
        tensor.flat[flat] = old + delta
        _, pre = _forward_cache(params, inputs, mask)
        loss = bce_loss(_sigmoid(pre[-1]), targets)
        pattern = [z > 0 for z in pre[:-1]]
        tensor.flat[flat] = old
        return loss, pattern

    worst = 0.0
    for name, tensor in params.tensors().items():
        candidates = rng.permutation(tensor.size)
        checked = 0
        for flat in candidates:
            if checked >= samples_per_tensor:
                break
            plus, pat_p = probe(tensor, int(flat), epsilon)
            minus, pat_m = probe(tensor, int(flat), -epsilon)
            kink = any((a != b).any() for a, b in zip(pat_p, base_pattern)) or any(
                (a != b).any() for a, b in zip(pat_m, base_pattern)
            )
            if kink:
                continue
            num = (plus - minus) / (2.0 * epsilon)
            ana = float(analytic[name].flat[int(flat)])
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, rel)
            checked += 1
    return worst


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    scaler: Scaler | None = None,
    config: TrainConfig | None = None,
    meta: dict | None = None,
) -> None:
    """Self-describing ``.npz``: every tensor plus a JSON header under ``__meta__``."""
    arrays = {name: t for name, t in params.tensors().items()}
    n_scaled = 0
    if scaler is not None:
        for i, (lo, hi) in enumerate(zip(scaler.mins, scaler.maxs)):
            arrays[f"scaler_min_{i}"] = lo
            arrays[f"scaler_max_{i}"] = hi
        n_scaled = len(scaler.mins)
    header = {
        "format": "icdgroup-checkpoint",
        "version": CHECKPOINT_VERSION,
        "n_layers": len(params.weights),
        "n_channels": params.n_channels,
        "dropout_rate": params.dropout_rate,
        "scaler_channels": n_scaled,
        "train_config": asdict(config) if config is not None else None,
        "meta": meta or {},
    }
    arrays["__meta__"] = np.array(json.dumps(header, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, Scaler | None, dict]:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["__meta__"]))
        if header.get("format") != "icdgroup-checkpoint":
            raise DataError(f"{path}: not a checkpoint file")
        if header["version"] != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {header['version']}")
        n = header["n_layers"]
        weights = [z[f"W{i + 1}"].copy() for i in range(n)]
        biases = [z[f"b{i + 1}"].copy() for i in range(n)]
        gates = None
        if header["n_channels"] > 1:
            gates = [z[f"g{i + 1}"].copy() for i in range(header["n_channels"])]
        scaler = None
        if header["scaler_channels"]:
            k = header["scaler_channels"]
            scaler = Scaler([z[f"scaler_min_{i}"].copy() for i in range(k)], [z[f"scaler_max_{i}"].copy() for i in range(k)])
    return ModelParams(weights, biases, gates, header["dropout_rate"]), scaler, header
