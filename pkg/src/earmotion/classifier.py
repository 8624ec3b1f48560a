"""Variable-length LSTM binary classifier over feature sequences.

Pure numpy: stacked LSTM layers with inter-layer inverted dropout, a final
linear layer with logistic output, binary cross-entropy loss, exact
backpropagation through time, adaptive-moment gradient descent, and
patience-based early stopping on validation accuracy.  Everything is
deterministic given the config seed.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import LABEL_BACKGROUND, LABEL_MOVEMENT

MODEL_MAGIC = b"EFLM"
MODEL_VERSION = 1

# Hyperparameter lattices explored by the default grid search.
INPUT_DIM_GRID = (1024, 768)
LAYER_GRID = (2, 3)
HIDDEN_GRID = (256, 512)
LR_GRID = (0.0005, 0.001, 0.005, 0.01)

BCE_EPS = 1e-7

# One labelled example: (T, D) float array plus a 0/1 label.
LabeledSequence = tuple[np.ndarray, int]


class ModelFormatError(ValueError):
    """Malformed model file; ``code`` names the failure."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class LstmConfig:
    input_dim: int
    num_layers: int = 2
    hidden_size: int = 256
    dropout: float = 0.2
    learning_rate: float = 0.001
    max_epochs: int = 500
    patience: int = 20
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.num_layers < 1 or self.hidden_size < 1:
            raise ValueError("input_dim, num_layers and hidden_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience and batch_size must be >= 1")


@dataclass
class LstmParams:
    """Gate order along the first axis of each stacked tensor: i, f, g, o."""

    w_x: list[np.ndarray]  # per layer (4H, D_in)
    w_h: list[np.ndarray]  # per layer (4H, H)
    bias: list[np.ndarray]  # per layer (4H,)
    w_out: np.ndarray  # (H,)
    b_out: np.ndarray  # scalar array

    def tensors(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for wx, wh, b in zip(self.w_x, self.w_h, self.bias):
            out.extend((wx, wh, b))
        out.extend((self.w_out, self.b_out))
        return out

    def copy(self) -> "LstmParams":
        return LstmParams(
            w_x=[w.copy() for w in self.w_x],
            w_h=[w.copy() for w in self.w_h],
            bias=[b.copy() for b in self.bias],
            w_out=self.w_out.copy(),
            b_out=self.b_out.copy(),
        )


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainedModel:
    config: LstmConfig
    params: LstmParams
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0  # 1-based epoch whose parameters are stored

    @property
    def epochs_run(self) -> int:
        return len(self.history)


class EarlyStopper:
    """Patience counter on validation accuracy; improvement means strictly better."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.stale = 0
        self.epoch = 0

    def update(self, val_acc: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        self.epoch += 1
        if val_acc > self.best:
            self.best = val_acc
            self.best_epoch = self.epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def init_params(config: LstmConfig, rng: np.random.Generator, dtype=np.float64) -> LstmParams:
    """Uniform +-1/sqrt(H) weights; zero biases except forget gate at 1."""
    h = config.hidden_size
    k = 1.0 / np.sqrt(h)
    w_x, w_h, bias = [], [], []
    for layer in range(config.num_layers):
        d_in = config.input_dim if layer == 0 else h
        w_x.append(rng.uniform(-k, k, size=(4 * h, d_in)).astype(dtype))
        w_h.append(rng.uniform(-k, k, size=(4 * h, h)).astype(dtype))
        b = np.zeros(4 * h, dtype=dtype)
        b[h : 2 * h] = 1.0
        bias.append(b)
    w_out = rng.uniform(-k, k, size=h).astype(dtype)
    b_out = np.zeros((), dtype=dtype)
    return LstmParams(w_x=w_x, w_h=w_h, bias=bias, w_out=w_out, b_out=b_out)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _dropout_masks(
    config: LstmConfig, batch: int, t_len: int, seed: int, dtype=np.float64
) -> list[np.ndarray] | None:
    """Inverted-dropout masks between layers, or None outside train mode."""
    if config.num_layers < 2 or config.dropout == 0.0:
        return None
    rng = np.random.default_rng(seed)
    keep = 1.0 - config.dropout
    return [
        ((rng.random((batch, t_len, config.hidden_size)) < keep) / keep).astype(dtype)
        for _ in range(config.num_layers - 1)
    ]


def _forward_batch(
    x: np.ndarray,
    params: LstmParams,
    config: LstmConfig,
    train: bool,
    dropout_seed: int = 0,
) -> tuple[np.ndarray, dict]:
    """LSTM forward over a (B, T, D) batch of equal-length sequences."""
    b_n, t_len, d = x.shape
    if d != config.input_dim:
        raise ValueError(f"input dim {d} != config.input_dim {config.input_dim}")
    h_size = config.hidden_size
    dtype = params.w_x[0].dtype
    masks = _dropout_masks(config, b_n, t_len, dropout_seed, dtype) if train else None

    cache: dict = {"inputs": [], "gates": [], "masks": masks, "x_shape": x.shape}
    layer_in = x.astype(dtype, copy=False)
    for layer in range(config.num_layers):
        wx, wh, bias = params.w_x[layer], params.w_h[layer], params.bias[layer]
        # Input projection for every timestep in one pass; only the
        # recurrent term stays inside the loop.
        z_x = (layer_in.reshape(b_n * t_len, -1) @ wx.T).reshape(b_n, t_len, 4 * h_size) + bias
        h = np.zeros((b_n, h_size), dtype=dtype)
        c = np.zeros((b_n, h_size), dtype=dtype)
        gates_i = np.empty((b_n, t_len, h_size), dtype=dtype)
        gates_f = np.empty_like(gates_i)
        gates_g = np.empty_like(gates_i)
        gates_o = np.empty_like(gates_i)
        cells = np.empty_like(gates_i)
        tanh_c = np.empty_like(gates_i)
        hs = np.empty_like(gates_i)
        for t in range(t_len):
            z = z_x[:, t] + h @ wh.T
            i = _sigmoid(z[:, :h_size])
            f = _sigmoid(z[:, h_size : 2 * h_size])
            g = np.tanh(z[:, 2 * h_size : 3 * h_size])
            o = _sigmoid(z[:, 3 * h_size :])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t] = i, f, g, o
            cells[:, t], tanh_c[:, t], hs[:, t] = c, tc, h
        cache["inputs"].append(layer_in)
        cache["gates"].append((gates_i, gates_f, gates_g, gates_o, cells, tanh_c, hs))
        layer_in = hs
        if masks is not None and layer < config.num_layers - 1:
            layer_in = layer_in * masks[layer]

    # Top-layer output never passes a dropout mask; take it from the cache.
    h_last = cache["gates"][-1][6][:, -1]
    logits = h_last @ params.w_out + params.b_out
    probs = _sigmoid(logits)
    cache["h_last"] = h_last
    cache["probs"] = probs
    return probs, cache


def lstm_forward(
    seq: np.ndarray,
    params: LstmParams,
    config: LstmConfig,
    mode: str = "eval",
    dropout_seed: int = 0,
) -> float:
    """Probability of the positive (movement) class for one (T, D) sequence."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    seq = np.asarray(seq, dtype=params.w_x[0].dtype)
    if seq.ndim != 2:
        raise ValueError(f"sequence must be TxD, got shape {seq.shape}")
    probs, _ = _forward_batch(seq[None], params, config, train=(mode == "train"), dropout_seed=dropout_seed)
    return float(probs[0])


def bce_loss(p: float | np.ndarray, y: float | np.ndarray) -> float | np.ndarray:
    """Binary cross-entropy with the probability clamped away from {0, 1}."""
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(out) if np.ndim(out) == 0 else out


def _backward_batch(
    y: np.ndarray,
    params: LstmParams,
    config: LstmConfig,
    cache: dict,
    out: LstmParams | None = None,
) -> LstmParams:
    """Summed (not averaged) gradients of BCE over the cached forward batch.

    When ``out`` is given, gradients accumulate on top of its contents.
    """
    b_n, t_len, _ = cache["x_shape"]
    h_size = config.hidden_size
    dtype = params.w_x[0].dtype
    masks = cache["masks"]

    grads = out if out is not None else LstmParams(
        w_x=[np.zeros_like(w) for w in params.w_x],
        w_h=[np.zeros_like(w) for w in params.w_h],
        bias=[np.zeros_like(b) for b in params.bias],
        w_out=np.zeros_like(params.w_out),
        b_out=np.zeros((), dtype=dtype),
    )

    dz_out = cache["probs"] - y.astype(dtype)  # (B,)
    grads.w_out += dz_out @ cache["h_last"]
    grads.b_out += dz_out.sum()

    d_out = np.zeros((b_n, t_len, h_size), dtype=dtype)
    d_out[:, -1] = dz_out[:, None] * params.w_out

    for layer in range(config.num_layers - 1, -1, -1):
        gates_i, gates_f, gates_g, gates_o, cells, tanh_c, hs = cache["gates"][layer]
        layer_in = cache["inputs"][layer]
        wx, wh = params.w_x[layer], params.w_h[layer]
        dz_all = np.empty((b_n, t_len, 4 * h_size), dtype=dtype)
        dh_next = np.zeros((b_n, h_size), dtype=dtype)
        dc_next = np.zeros((b_n, h_size), dtype=dtype)
        for t in range(t_len - 1, -1, -1):
            i, f, g, o = gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t]
            tc = tanh_c[:, t]
            c_prev = cells[:, t - 1] if t > 0 else np.zeros((b_n, h_size), dtype=dtype)
            dh = d_out[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dc_next = dc * f
            dz = dz_all[:, t]
            dz[:, :h_size] = dc * g * i * (1 - i)
            dz[:, h_size : 2 * h_size] = dc * c_prev * f * (1 - f)
            dz[:, 2 * h_size : 3 * h_size] = dc * i * (1 - g * g)
            dz[:, 3 * h_size :] = do * o * (1 - o)
            dh_next = dz @ wh
        # Weight gradients and input gradients batched over all timesteps.
        dz_flat = dz_all.reshape(b_n * t_len, 4 * h_size)
        grads.w_x[layer] += dz_flat.T @ layer_in.reshape(b_n * t_len, -1)
        h_prev_all = np.concatenate([np.zeros((b_n, 1, h_size), dtype=dtype), hs[:, :-1]], axis=1)
        grads.w_h[layer] += dz_flat.T @ h_prev_all.reshape(b_n * t_len, h_size)
        grads.bias[layer] += dz_flat.sum(axis=0)
        if layer > 0:
            d_in = (dz_flat @ wx).reshape(layer_in.shape)
            d_out = d_in if masks is None else d_in * masks[layer - 1]
    return grads


def backward(
    seq: np.ndarray,
    y: int,
    params: LstmParams,
    config: LstmConfig,
    mode: str = "eval",
    dropout_seed: int = 0,
) -> LstmParams:
    """Exact gradients of bce_loss(lstm_forward(seq), y) for one sequence."""
    seq = np.asarray(seq, dtype=params.w_x[0].dtype)
    _, cache = _forward_batch(seq[None], params, config, train=(mode == "train"), dropout_seed=dropout_seed)
    return _backward_batch(np.array([float(y)]), params, config, cache)


def _param_shapes(config: LstmConfig) -> list[tuple[int, ...]]:
    h = config.hidden_size
    shapes: list[tuple[int, ...]] = []
    for layer in range(config.num_layers):
        d_in = config.input_dim if layer == 0 else h
        shapes.extend([(4 * h, d_in), (4 * h, h), (4 * h,)])
    shapes.extend([(h,), ()])
    return shapes


def _views_from_flat(flat: np.ndarray, config: LstmConfig) -> LstmParams:
    """Rebuild the parameter structure as views into one flat buffer."""
    views: list[np.ndarray] = []
    offset = 0
    for shape in _param_shapes(config):
        count = int(np.prod(shape)) if shape else 1
        views.append(flat[offset : offset + count].reshape(shape))
        offset += count
    layers = config.num_layers
    return LstmParams(
        w_x=[views[3 * l] for l in range(layers)],
        w_h=[views[3 * l + 1] for l in range(layers)],
        bias=[views[3 * l + 2] for l in range(layers)],
        w_out=views[-2],
        b_out=views[-1],
    )


def _flatten_params(params: LstmParams) -> np.ndarray:
    return np.concatenate([t.reshape(-1) for t in params.tensors()])


class _Adam:
    """Adaptive moments over one flat parameter vector, updated in place."""

    def __init__(self, flat: np.ndarray, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.p = flat
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros_like(flat)
        self.v = np.zeros_like(flat)
        self.scratch = np.empty_like(flat)
        self.t = 0

    def step(self, grad: np.ndarray, scale: float = 1.0) -> None:
        """One update from summed gradients; ``scale`` folds in the batch mean."""
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        s = self.scratch
        np.multiply(grad, (1.0 - self.beta1) * scale, out=s)
        self.m *= self.beta1
        self.m += s
        np.multiply(grad, grad, out=s)
        s *= (1.0 - self.beta2) * scale * scale
        self.v *= self.beta2
        self.v += s
        np.divide(self.v, b2c, out=s)
        np.sqrt(s, out=s)
        s += self.eps
        np.divide(self.m, s, out=s)
        s *= self.lr / b1c
        self.p -= s


def _validate_sets(train_set, val_set) -> None:
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be non-empty")
    labels = {int(y) for _, y in train_set}
    if labels != {0, 1}:
        raise ValueError(f"train set must contain both classes, got labels {sorted(labels)}")


def _group_by_length(items, indices) -> dict[int, list[int]]:
    by_len: dict[int, list[int]] = {}
    for idx in indices:
        by_len.setdefault(items[idx][0].shape[0], []).append(idx)
    return by_len


def _eval_pass(items, params: LstmParams, config: LstmConfig) -> tuple[float, float]:
    """Mean loss and accuracy in eval mode (dropout off), batched by length."""
    dtype = params.w_x[0].dtype
    loss_sum = 0.0
    correct = 0
    for t_len in sorted(by_len := _group_by_length(items, range(len(items)))):
        group = by_len[t_len]
        x = np.stack([items[i][0] for i in group]).astype(dtype)
        y = np.array([float(items[i][1]) for i in group])
        probs, _ = _forward_batch(x, params, config, train=False)
        loss_sum += float(np.sum(bce_loss(probs, y)))
        correct += int(np.sum((probs > 0.5) == (y > 0.5)))
    return loss_sum / len(items), correct / len(items)


def train(train_set: list[LabeledSequence], val_set: list[LabeledSequence], config: LstmConfig) -> TrainedModel:
    """Mini-batch Adam with early stopping on validation accuracy.

    Returns the parameters from the best-validation epoch.  Fully
    deterministic for a given config seed: data order, init, and dropout all
    derive from one seeded generator.
    """
    _validate_sets(train_set, val_set)
    # float32 keeps training memory-light; gradients were validated against
    # finite differences in float64.
    train_set = [(np.asarray(s, dtype=np.float32), int(y)) for s, y in train_set]
    val_set = [(np.asarray(s, dtype=np.float32), int(y)) for s, y in val_set]
    for s, _ in train_set + val_set:
        if s.ndim != 2 or s.shape[1] != config.input_dim:
            raise ValueError(f"sequence shape {s.shape} incompatible with input_dim {config.input_dim}")

    rng = np.random.default_rng(config.seed)
    flat = _flatten_params(init_params(config, rng, dtype=np.float32))
    params = _views_from_flat(flat, config)
    grad_flat = np.zeros_like(flat)
    grad_views = _views_from_flat(grad_flat, config)
    adam = _Adam(flat, config.learning_rate)
    stopper = EarlyStopper(config.patience)
    history: list[EpochStats] = []
    best_flat = flat.copy()
    n = len(train_set)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        total_correct = 0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            grad_flat.fill(0.0)
            for t_len in sorted(by_len := _group_by_length(train_set, batch_idx)):
                group = by_len[t_len]
                x = np.stack([train_set[i][0] for i in group])
                y = np.array([float(train_set[i][1]) for i in group])
                seed = int(rng.integers(0, 2**63 - 1))
                probs, cache = _forward_batch(x, params, config, train=True, dropout_seed=seed)
                total_loss += float(np.sum(bce_loss(probs, y)))
                total_correct += int(np.sum((probs > 0.5) == (y > 0.5)))
                _backward_batch(y, params, config, cache, out=grad_views)
            adam.step(grad_flat, scale=1.0 / len(batch_idx))

        val_loss, val_acc = _eval_pass(val_set, params, config)
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=total_loss / n,
                train_acc=total_correct / n,
                val_loss=val_loss,
                val_acc=val_acc,
            )
        )
        improved = val_acc > stopper.best
        stop = stopper.update(val_acc)
        if improved:
            best_flat = flat.copy()
        if stop:
            break

    return TrainedModel(
        config=config,
        params=_views_from_flat(best_flat, config),
        history=history,
        best_epoch=stopper.best_epoch,
    )


def predict(model: TrainedModel, seq: np.ndarray) -> tuple[float, str]:
    """Probability plus hard label; the tie p == 0.5 goes to background."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != model.config.input_dim:
        raise ValueError(
            f"sequence shape {seq.shape} incompatible with model input_dim {model.config.input_dim}"
        )
    p = lstm_forward(seq, model.params, model.config, mode="eval")
    return p, (LABEL_MOVEMENT if p > 0.5 else LABEL_BACKGROUND)


@dataclass
class GridResult:
    config: LstmConfig
    val_accuracy: float
    val_f1: float
    best_epoch: int
    epochs_run: int


def table2_lattice(
    input_dim: int,
    seed: int = 0,
    max_epochs: int = 500,
    batch_size: int = 8,
    patience: int = 20,
) -> list[LstmConfig]:
    """The full layers x hidden x learning-rate grid for one input dimension."""
    return [
        LstmConfig(
            input_dim=input_dim,
            num_layers=layers,
            hidden_size=hidden,
            learning_rate=lr,
            max_epochs=max_epochs,
            batch_size=batch_size,
            patience=patience,
            seed=seed,
        )
        for layers in LAYER_GRID
        for hidden in HIDDEN_GRID
        for lr in LR_GRID
    ]


def grid_search(
    train_set: list[LabeledSequence],
    val_set: list[LabeledSequence],
    configs: list[LstmConfig],
) -> tuple[TrainedModel, list[GridResult]]:
    """Train every config; best validation accuracy wins.

    Ties break toward the smaller architecture: fewer layers, then smaller
    hidden size, then lower learning rate.  Results keep lattice order.
    """
    if not configs:
        raise ValueError("empty config lattice")
    results: list[GridResult] = []
    models: list[TrainedModel] = []
    for cfg in configs:
        model = train(train_set, val_set, cfg)
        val_acc = model.history[model.best_epoch - 1].val_acc
        tp = fp = fn = 0
        for seq, y in val_set:
            pred = lstm_forward(np.asarray(seq), model.params, cfg) > 0.5
            tp += int(pred and y)
            fp += int(pred and not y)
            fn += int(not pred and y)
        val_f1 = 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)
        results.append(
            GridResult(
                config=cfg,
                val_accuracy=val_acc,
                val_f1=val_f1,
                best_epoch=model.best_epoch,
                epochs_run=model.epochs_run,
            )
        )
        models.append(model)
    best_i = min(
        range(len(results)),
        key=lambda i: (
            -results[i].val_accuracy,
            results[i].config.num_layers,
            results[i].config.hidden_size,
            results[i].config.learning_rate,
        ),
    )
    return models[best_i], results


def _config_dict(config: LstmConfig) -> dict:
    return {
        "input_dim": config.input_dim,
        "num_layers": config.num_layers,
        "hidden_size": config.hidden_size,
        "dropout": config.dropout,
        "learning_rate": config.learning_rate,
        "max_epochs": config.max_epochs,
        "patience": config.patience,
        "batch_size": config.batch_size,
        "seed": config.seed,
    }


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Binary model file: config JSON, float32 tensors, history JSON."""
    cfg_blob = json.dumps(_config_dict(model.config), sort_keys=True).encode("utf-8")
    hist = {
        "best_epoch": model.best_epoch,
        "epochs": [
            {
                "epoch": h.epoch,
                "train_loss": h.train_loss,
                "train_acc": h.train_acc,
                "val_loss": h.val_loss,
                "val_acc": h.val_acc,
            }
            for h in model.history
        ],
    }
    hist_blob = json.dumps(hist, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<H", MODEL_VERSION))
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        for tensor in model.params.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(hist_blob)))
        fh.write(hist_blob)
    os.replace(tmp, path)


def load_model(path: str | Path) -> TrainedModel:
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise ModelFormatError("bad-magic", f"not a model file: {path}")
        raw = fh.read(2)
        if len(raw) != 2 or struct.unpack("<H", raw)[0] != MODEL_VERSION:
            raise ModelFormatError("bad-version", f"unsupported model version in {path}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise ModelFormatError("truncated", f"truncated config header in {path}")
        cfg_blob = fh.read(struct.unpack("<I", raw)[0])
        try:
            config = LstmConfig(**json.loads(cfg_blob))
        except (ValueError, TypeError) as exc:
            raise ModelFormatError("bad-config", f"unreadable config block in {path}") from exc

        h = config.hidden_size
        w_x, w_h, bias = [], [], []

        def read_tensor(shape: tuple[int, ...]) -> np.ndarray:
            count = int(np.prod(shape)) if shape else 1
            blob = fh.read(4 * count)
            if len(blob) != 4 * count:
                raise ModelFormatError("truncated", f"truncated tensor data in {path}")
            return np.frombuffer(blob, dtype="<f4").reshape(shape).copy()

        for layer in range(config.num_layers):
            d_in = config.input_dim if layer == 0 else h
            w_x.append(read_tensor((4 * h, d_in)))
            w_h.append(read_tensor((4 * h, h)))
            bias.append(read_tensor((4 * h,)))
        w_out = read_tensor((h,))
        b_out = read_tensor(()).reshape(())
        raw = fh.read(4)
        if len(raw) != 4:
            raise ModelFormatError("truncated", f"truncated history header in {path}")
        hist_blob = fh.read(struct.unpack("<I", raw)[0])
        try:
            hist = json.loads(hist_blob)
        except ValueError as exc:
            raise ModelFormatError("bad-history", f"unreadable history block in {path}") from exc

    params = LstmParams(w_x=w_x, w_h=w_h, bias=bias, w_out=w_out, b_out=b_out)
    history = [EpochStats(**h) for h in hist["epochs"]]
    return TrainedModel(config=config, params=params, history=history, best_epoch=hist["best_epoch"])
