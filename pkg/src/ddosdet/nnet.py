"""Dense feedforward classifier trained from scratch.

Architecture: a stack of fully-connected hidden layers with ReLU and
inverted dropout (surviving activations scaled by 1/(1-p) at train time,
so inference applies no scaling), then an affine output layer with
row-wise softmax. Loss is mean categorical cross-entropy; the optimizer
is RMSProp. The default shape (19 inputs, three hidden layers of 64, two
outputs, dropout 0.25) carries exactly 9730 trainable parameters.

All randomness (weight init, epoch shuffles, dropout masks) flows from
explicit seeds through numpy generators, so training is deterministic for
a fixed backend lane.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import KERNELS
from .errors import (
    CorruptFileError,
    EmptyDatasetError,
    InvalidConfigError,
    ShapeMismatchError,
    StaleCacheError,
    VersionMismatchError,
)

MODEL_HEADER = "ddosdet-model v1"


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 19
    hidden_dims: tuple = (64, 64, 64)
    output_dim: int = 2
    dropout_rate: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise InvalidConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.output_dim < 2:
            raise InvalidConfigError(f"output_dim must be >= 2, got {self.output_dim}")
        if any(h < 1 for h in self.hidden_dims):
            raise InvalidConfigError(f"hidden dims must be >= 1, got {self.hidden_dims}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def dims(self) -> tuple:
        return (self.input_dim, *self.hidden_dims, self.output_dim)


@dataclass
class Network:
    config: NetworkConfig
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list  # per layer, shape (fan_out,)

    @property
    def n_hidden(self) -> int:
        return len(self.config.hidden_dims)


def build_network(cfg: NetworkConfig) -> Network:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(cfg.seed)
    weights = []
    biases = []
    dims = cfg.dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(config=cfg, weights=weights, biases=biases)


def parameter_count(net: Network) -> int:
    return sum(w.size + b.size for w, b in zip(net.weights, net.biases))


@dataclass
class ForwardCache:
    """Intermediate values retained by a training-mode forward pass."""

    net: Network
    x: np.ndarray
    pre_activations: list  # per hidden layer
    activations: list  # per hidden layer, post-dropout
    masks: list  # per hidden layer, entries in {0, 1/(1-p)}
    probs: np.ndarray


def _as_batch(net: Network, batch) -> np.ndarray:
    x = np.ascontiguousarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatchError(f"batch must be 2-D, got shape {x.shape}")
    if x.shape[1] != net.config.input_dim:
        raise ShapeMismatchError(
            f"batch width {x.shape[1]} != network input_dim {net.config.input_dim}"
        )
    return x


def forward(net: Network, batch, train: bool = False, rng=None):
    """Run the network on a batch of rows.

    Returns (probabilities, cache). The cache is populated only in train
    mode, where dropout masks are drawn from ``rng`` (required when the
    dropout rate is nonzero); inference returns cache None.
    """
    x = _as_batch(net, batch)
    p = net.config.dropout_rate
    if not train:
        acts = x
        for w, b in zip(net.weights[:-1], net.biases[:-1]):
            acts = KERNELS.affine_relu(acts, w, b)
        probs = KERNELS.softmax_rows(KERNELS.affine(acts, net.weights[-1], net.biases[-1]))
        return probs, None
    if p > 0.0 and rng is None:
        raise ValueError("training forward with dropout needs an rng")
    acts = x
    zs, activations, masks = [], [], []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        if p > 0.0:
            mask = (rng.random((acts.shape[0], w.shape[1])) >= p) / (1.0 - p)
        else:
            mask = np.ones((acts.shape[0], w.shape[1]))
        z, acts = KERNELS.affine_relu_dropout(acts, w, b, mask)
        zs.append(z)
        activations.append(acts)
        masks.append(mask)
    probs = KERNELS.softmax_rows(KERNELS.affine(acts, net.weights[-1], net.biases[-1]))
    return probs, ForwardCache(net, x, zs, activations, masks, probs)


def cce_loss(probs, onehot) -> float:
    """Mean categorical cross-entropy with probabilities clamped at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    if probs.shape != onehot.shape:
        raise ShapeMismatchError(f"probs shape {probs.shape} != targets shape {onehot.shape}")
    rows = onehot.sum(axis=1)
    if not (np.all((onehot == 0.0) | (onehot == 1.0)) and np.all(rows == 1.0)):
        raise ValueError("targets must be one-hot rows")
    return KERNELS.cce_loss(np.ascontiguousarray(probs), np.ascontiguousarray(onehot))


@dataclass
class Gradients:
    weights: list
    biases: list


def backward(net: Network, cache: ForwardCache, onehot) -> Gradients:
    """Gradients of the mean cross-entropy w.r.t. every weight and bias.

    The softmax/cross-entropy pair collapses to an output delta of
    (probs - targets) / batch_size; dropout masks and ReLU gates from the
    cached forward are replayed on the way back.
    """
    if cache is None or cache.net is not net:
        raise StaleCacheError("cache does not belong to this network's training forward")
    y = np.ascontiguousarray(onehot, dtype=np.float64)
    if y.shape != cache.probs.shape:
        raise ShapeMismatchError(f"targets shape {y.shape} != probs shape {cache.probs.shape}")
    n = y.shape[0]
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    delta = (cache.probs - y) / n
    last_in = cache.activations[-1] if cache.activations else cache.x
    grads_w[-1] = last_in.T @ delta
    grads_b[-1] = delta.sum(axis=0)
    upstream = delta @ net.weights[-1].T
    for l in range(net.n_hidden - 1, -1, -1):
        delta = KERNELS.relu_dropout_backward(
            np.ascontiguousarray(upstream), cache.pre_activations[l], cache.masks[l]
        )
        prev = cache.x if l == 0 else cache.activations[l - 1]
        grads_w[l] = prev.T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            upstream = delta @ net.weights[l].T
    return Gradients(grads_w, grads_b)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 0.001
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.rms_decay < 1.0:
            raise InvalidConfigError(f"rms_decay must be in (0, 1), got {self.rms_decay}")
        if self.rms_epsilon <= 0.0:
            raise InvalidConfigError(f"rms_epsilon must be > 0, got {self.rms_epsilon}")


def rmsprop_step(params, grads, state, cfg: TrainConfig):
    """One RMSProp update over parallel lists of arrays.

    s <- rho*s + (1-rho)*g^2 ; theta <- theta - lr*g/(sqrt(s)+eps).
    Returns (new_params, new_state); state starts as zeros_like(params).
    """
    if len(params) != len(grads) or len(params) != len(state):
        raise ShapeMismatchError("params, grads, and state lists differ in length")
    new_params, new_state = [], []
    for p, g, s in zip(params, grads, state):
        if p.shape != g.shape or p.shape != s.shape:
            raise ShapeMismatchError(f"shape mismatch: {p.shape} vs {g.shape} vs {s.shape}")
        p2, s2 = KERNELS.rmsprop_update(
            p, np.ascontiguousarray(g), s, cfg.learning_rate, cfg.rms_decay, cfg.rms_epsilon
        )
        new_params.append(p2)
        new_state.append(s2)
    return new_params, new_state


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


def _epoch_metrics(net: Network, x, y):
    probs, _ = forward(net, x, train=False)
    loss = cce_loss(probs, y)
    acc = float(np.mean(np.argmax(probs, axis=1) == np.argmax(y, axis=1)))
    return loss, acc


def train(net: Network, x_train, y_train, x_val, y_val, cfg: TrainConfig):
    """Mini-batch training with a seeded per-epoch shuffle.

    Inputs are already-scaled feature matrices and one-hot target rows.
    Dropout is active only in the training forward passes; per-epoch
    metrics are measured on the full train and validation sets in
    inference mode. Mutates and returns ``net`` along with the history.
    """
    x_train = _as_batch(net, x_train)
    x_val = _as_batch(net, x_val)
    y_train = np.ascontiguousarray(y_train, dtype=np.float64)
    y_val = np.ascontiguousarray(y_val, dtype=np.float64)
    if len(x_train) == 0 or len(x_val) == 0:
        raise EmptyDatasetError("training and validation sets must be non-empty")
    if y_train.shape != (len(x_train), net.config.output_dim):
        raise ShapeMismatchError(f"train targets shape {y_train.shape} unexpected")
    if y_val.shape != (len(x_val), net.config.output_dim):
        raise ShapeMismatchError(f"val targets shape {y_val.shape} unexpected")

    rng = np.random.default_rng(cfg.seed)
    params = net.weights + net.biases
    state = [np.zeros_like(p) for p in params]
    history = TrainHistory()
    n = len(x_train)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            _, cache = forward(net, xb, train=True, rng=rng)
            grads = backward(net, cache, yb)
            params = net.weights + net.biases
            new_params, state = rmsprop_step(params, grads.weights + grads.biases, state, cfg)
            k = len(net.weights)
            net.weights = new_params[:k]
            net.biases = new_params[k:]
        train_loss, train_acc = _epoch_metrics(net, x_train, y_train)
        val_loss, val_acc = _epoch_metrics(net, x_val, y_val)
        history.records.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
    return net, history


def predict(net: Network, features):
    """Classify one feature vector; ties at the argmax go to class 0 (Benign)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.config.input_dim:
        raise ShapeMismatchError(
            f"feature vector of width {x.shape} does not match input_dim {net.config.input_dim}"
        )
    probs, _ = forward(net, x.reshape(1, -1), train=False)
    idx = int(np.argmax(probs[0]))
    return idx, float(probs[0, idx])


def predict_batch(net: Network, features):
    """Classify many rows at once; returns (labels, probability-of-label)."""
    probs, _ = forward(net, features, train=False)
    labels = np.argmax(probs, axis=1)
    return labels, probs[np.arange(len(labels)), labels]


# --- model persistence ------------------------------------------------------


def save_model(net: Network, path) -> None:
    """Line-oriented text format; weights serialized at 17 significant digits."""
    cfg = net.config
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_HEADER + "\n")
        hidden = ",".join(str(h) for h in cfg.hidden_dims)
        fh.write(
            f"config input_dim={cfg.input_dim} hidden_dims={hidden} "
            f"output_dim={cfg.output_dim} dropout_rate={cfg.dropout_rate!r} seed={cfg.seed}\n"
        )
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            fh.write(f"layer {l} {w.shape[0]} {w.shape[1]}\n")
            for row in w:
                fh.write(" ".join(f"{v:.17e}" for v in row) + "\n")
            fh.write(" ".join(f"{v:.17e}" for v in b) + "\n")
        fh.write("end\n")


def _parse_config_line(line):
    if not line.startswith("config "):
        raise CorruptFileError(f"expected config line, got {line!r}")
    fields = dict(part.split("=", 1) for part in line[len("config ") :].split())
    return NetworkConfig(
        input_dim=int(fields["input_dim"]),
        hidden_dims=tuple(int(h) for h in fields["hidden_dims"].split(",")),
        output_dim=int(fields["output_dim"]),
        dropout_rate=float(fields["dropout_rate"]),
        seed=int(fields["seed"]),
    )


def load_model(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("ddosdet-model"):
        raise CorruptFileError(f"{path}: not a model file")
    if lines[0] != MODEL_HEADER:
        raise VersionMismatchError(f"{path}: unsupported model version {lines[0]!r}")
    if lines[-1] != "end":
        raise CorruptFileError(f"{path}: truncated model file")
    try:
        cfg = _parse_config_line(lines[1])
    except (IndexError, KeyError, ValueError) as exc:
        raise CorruptFileError(f"{path}: bad config line") from exc
    dims = cfg.dims
    weights, biases = [], []
    pos = 2
    try:
        for l, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            tag, l_str, in_str, out_str = lines[pos].split()
            if tag != "layer" or int(l_str) != l or int(in_str) != fan_in or int(out_str) != fan_out:
                raise CorruptFileError(f"{path}: unexpected layer marker {lines[pos]!r}")
            pos += 1
            w = np.empty((fan_in, fan_out))
            for i in range(fan_in):
                row = np.array([float(t) for t in lines[pos].split()])
                if row.shape[0] != fan_out:
                    raise CorruptFileError(f"{path}: short weight row at line {pos + 1}")
                w[i] = row
                pos += 1
            b = np.array([float(t) for t in lines[pos].split()])
            if b.shape[0] != fan_out:
                raise CorruptFileError(f"{path}: short bias row at line {pos + 1}")
            pos += 1
            weights.append(w)
            biases.append(b)
    except (IndexError, ValueError) as exc:
        raise CorruptFileError(f"{path}: truncated or malformed model file") from exc
    if lines[pos] != "end":
        raise CorruptFileError(f"{path}: trailing garbage after layers")
    return Network(config=cfg, weights=weights, biases=biases)
