"""Classical comparators implemented from first principles.

Gaussian naive Bayes scores in log space with per-class, per-feature
means and variances (variance floored at 1e-9); logistic regression is
full-batch gradient descent on the logistic loss. Both reuse the same
evaluation path as the neural model, and both break prediction ties
toward Benign.
"""

from dataclasses import dataclass

import numpy as np

from .dataio import Dataset, Label
from .errors import (
    CorruptFileError,
    MissingClassError,
    ShapeMismatchError,
    VersionMismatchError,
)

VAR_FLOOR = 1e-9

GNB_HEADER = "ddosdet-gnb v1"
LOGREG_HEADER = "ddosdet-logreg v1"


@dataclass(frozen=True)
class GnbModel:
    priors: np.ndarray  # (2,)
    means: np.ndarray  # (2, d)
    variances: np.ndarray  # (2, d), floored


@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray  # (d,)
    bias: float


def gnb_fit(train: Dataset) -> GnbModel:
    x = train.features
    y = train.labels
    means = []
    variances = []
    priors = []
    for k in (Label.BENIGN, Label.ATTACK):
        sel = x[y == k]
        if len(sel) == 0:
            raise MissingClassError(f"no training samples of class {k.name}")
        priors.append(len(sel) / len(x))
        means.append(sel.mean(axis=0))
        variances.append(np.maximum(sel.var(axis=0), VAR_FLOOR))
    return GnbModel(np.asarray(priors), np.asarray(means), np.asarray(variances))


def _gnb_log_scores(m: GnbModel, x: np.ndarray) -> np.ndarray:
    # log prior + sum of per-feature Gaussian log densities, per class
    diff = x[None, :] - m.means
    log_lik = -0.5 * (np.log(2.0 * np.pi * m.variances) + diff * diff / m.variances)
    return np.log(m.priors) + log_lik.sum(axis=1)


def gnb_posteriors(m: GnbModel, x) -> np.ndarray:
    """Class posteriors for one feature vector, normalized via log-sum-exp."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.means.shape[1],):
        raise ShapeMismatchError(f"feature width {x.shape} != model width {m.means.shape[1]}")
    scores = _gnb_log_scores(m, x)
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


def gnb_predict(m: GnbModel, x):
    """(class index, posterior of that class); argmax ties go to Benign."""
    post = gnb_posteriors(m, x)
    idx = int(np.argmax(post))
    return idx, float(post[idx])


def gnb_predict_batch(m: GnbModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    diff = x[:, None, :] - m.means[None, :, :]
    log_lik = -0.5 * (np.log(2.0 * np.pi * m.variances) + diff * diff / m.variances)
    scores = np.log(m.priors) + log_lik.sum(axis=2)
    return np.argmax(scores, axis=1)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(w, b, x, y) -> float:
    """Mean logistic loss, computed in the overflow-safe log1p form."""
    z = x @ w + b
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def logistic_grad(w, b, x, y):
    """Gradient of the mean logistic loss w.r.t. (w, b)."""
    residual = _sigmoid(x @ w + b) - y
    return x.T @ residual / len(x), float(residual.mean())


def logreg_fit(train: Dataset, lr: float = 0.1, iters: int = 500, seed: int = 0) -> LogRegModel:
    """Full-batch gradient descent from zero init; seed is accepted for
    interface symmetry but the fit is already deterministic."""
    x = train.features
    y = (train.labels == Label.ATTACK).astype(np.float64)
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(iters):
        gw, gb = logistic_grad(w, b, x, y)
        w = w - lr * gw
        b = b - lr * gb
    return LogRegModel(weights=w, bias=b)


def logreg_predict(m: LogRegModel, x):
    """(class index, probability of that class); p(attack) == 0.5 goes Benign."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != m.weights.shape:
        raise ShapeMismatchError(f"feature width {x.shape} != model width {m.weights.shape}")
    p_attack = float(_sigmoid(np.asarray([x @ m.weights + m.bias]))[0])
    if p_attack > 0.5:
        return int(Label.ATTACK), p_attack
    return int(Label.BENIGN), 1.0 - p_attack


def logreg_predict_batch(m: LogRegModel, x) -> np.ndarray:
    p_attack = _sigmoid(np.asarray(x, dtype=np.float64) @ m.weights + m.bias)
    return (p_attack > 0.5).astype(np.int64)


# --- persistence -------------------------------------------------------------


def _check_header(lines, expected, path):
    if not lines:
        raise CorruptFileError(f"{path}: empty model file")
    tag = expected.split()[0]
    if not lines[0].startswith(tag):
        raise CorruptFileError(f"{path}: not a {tag} file")
    if lines[0] != expected:
        raise VersionMismatchError(f"{path}: unsupported version {lines[0]!r}")
    if lines[-1] != "end":
        raise CorruptFileError(f"{path}: truncated file")


def save_gnb(m: GnbModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(GNB_HEADER + "\n")
        fh.write(f"features {m.means.shape[1]}\n")
        fh.write("priors " + " ".join(f"{v:.17e}" for v in m.priors) + "\n")
        for k in range(2):
            fh.write(f"mean {k} " + " ".join(f"{v:.17e}" for v in m.means[k]) + "\n")
            fh.write(f"var {k} " + " ".join(f"{v:.17e}" for v in m.variances[k]) + "\n")
        fh.write("end\n")


def load_gnb(path) -> GnbModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    _check_header(lines, GNB_HEADER, path)
    try:
        d = int(lines[1].split()[1])
        priors = np.array([float(v) for v in lines[2].split()[1:]])
        means = np.empty((2, d))
        variances = np.empty((2, d))
        for k in range(2):
            means[k] = [float(v) for v in lines[3 + 2 * k].split()[2:]]
            variances[k] = [float(v) for v in lines[4 + 2 * k].split()[2:]]
    except (IndexError, ValueError) as exc:
        raise CorruptFileError(f"{path}: malformed gnb file") from exc
    return GnbModel(priors=priors, means=means, variances=variances)


def save_logreg(m: LogRegModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(LOGREG_HEADER + "\n")
        fh.write(f"features {m.weights.shape[0]}\n")
        fh.write("weights " + " ".join(f"{v:.17e}" for v in m.weights) + "\n")
        fh.write(f"bias {m.bias:.17e}\n")
        fh.write("end\n")


def load_logreg(path) -> LogRegModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    _check_header(lines, LOGREG_HEADER, path)
    try:
        d = int(lines[1].split()[1])
        weights = np.array([float(v) for v in lines[2].split()[1:]])
        bias = float(lines[3].split()[1])
    except (IndexError, ValueError) as exc:
        raise CorruptFileError(f"{path}: malformed logreg file") from exc
    if weights.shape[0] != d:
        raise CorruptFileError(f"{path}: weight count {weights.shape[0]} != declared {d}")
    return LogRegModel(weights=weights, bias=bias)
