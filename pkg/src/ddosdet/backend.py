"""Hot numeric kernels: a numba-jitted lane and a pure-numpy fallback.

The active lane is picked once at import time from the ``DDOSDET_BACKEND``
environment variable: ``numba``, ``numpy``, or ``auto`` (the default; numba
when importable, numpy otherwise). ``get_kernels`` exposes both lanes so
tests and benchmarks can compare them directly.

The kernels cover the per-batch training step of the classifier: fused
affine/ReLU/dropout forward passes, row-wise softmax, the backward gate,
the RMSProp update, and the cross-entropy reduction. Matrix products go
through BLAS on both lanes (``np.dot`` compiles to a BLAS call under
numba); the numba lane wins by fusing the elementwise chains around them.

Dropout masks and shuffles are always drawn from seeded numpy generators
outside the kernels, so a run is deterministic for a fixed backend.
"""

import math
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

BACKEND_ENV = "DDOSDET_BACKEND"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without the accel extra
    HAVE_NUMBA = False


@dataclass(frozen=True)
class Kernels:
    """One lane of kernel implementations; all take/return C-contiguous float64."""

    name: str
    affine: Callable
    affine_relu: Callable
    affine_relu_dropout: Callable
    softmax_rows: Callable
    relu_dropout_backward: Callable
    rmsprop_update: Callable
    cce_loss: Callable


# --- pure-numpy lane ---------------------------------------------------


def _np_affine(x, w, b):
    return x @ w + b


def _np_affine_relu(x, w, b):
    return np.maximum(x @ w + b, 0.0)


def _np_affine_relu_dropout(x, w, b, mask):
    z = x @ w + b
    return z, np.maximum(z, 0.0) * mask


def _np_softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _np_relu_dropout_backward(upstream, z, mask):
    return upstream * mask * (z > 0.0)


def _np_rmsprop_update(param, grad, sq_avg, lr, rho, eps):
    new_sq = rho * sq_avg + (1.0 - rho) * grad * grad
    return param - lr * grad / (np.sqrt(new_sq) + eps), new_sq


def _np_cce_loss(probs, onehot):
    picked = np.maximum((probs * onehot).sum(axis=1), 1e-12)
    return float(-np.mean(np.log(picked)))


NUMPY_KERNELS = Kernels(
    name="numpy",
    affine=_np_affine,
    affine_relu=_np_affine_relu,
    affine_relu_dropout=_np_affine_relu_dropout,
    softmax_rows=_np_softmax_rows,
    relu_dropout_backward=_np_relu_dropout_backward,
    rmsprop_update=_np_rmsprop_update,
    cce_loss=_np_cce_loss,
)


# --- numba lane ---------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_affine(x, w, b):
        z = np.dot(x, w)
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                z[i, j] += b[j]
        return z

    @njit(cache=True)
    def _nb_affine_relu(x, w, b):
        z = np.dot(x, w)
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                v = z[i, j] + b[j]
                z[i, j] = v if v > 0.0 else 0.0
        return z

    @njit(cache=True)
    def _nb_affine_relu_dropout(x, w, b, mask):
        z = np.dot(x, w)
        a = np.empty_like(z)
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                v = z[i, j] + b[j]
                z[i, j] = v
                a[i, j] = (v if v > 0.0 else 0.0) * mask[i, j]
        return z, a

    @njit(cache=True)
    def _nb_softmax_rows(logits):
        out = np.empty_like(logits)
        for i in range(logits.shape[0]):
            m = logits[i, 0]
            for j in range(1, logits.shape[1]):
                if logits[i, j] > m:
                    m = logits[i, j]
            s = 0.0
            for j in range(logits.shape[1]):
                e = math.exp(logits[i, j] - m)
                out[i, j] = e
                s += e
            for j in range(logits.shape[1]):
                out[i, j] /= s
        return out

    @njit(cache=True)
    def _nb_relu_dropout_backward(upstream, z, mask):
        out = np.empty_like(upstream)
        for i in range(upstream.shape[0]):
            for j in range(upstream.shape[1]):
                out[i, j] = upstream[i, j] * mask[i, j] if z[i, j] > 0.0 else 0.0
        return out

    @njit(cache=True)
    def _nb_rmsprop_update(param, grad, sq_avg, lr, rho, eps):
        new_sq = rho * sq_avg + (1.0 - rho) * grad * grad
        return param - lr * grad / (np.sqrt(new_sq) + eps), new_sq

    @njit(cache=True)
    def _nb_cce_loss(probs, onehot):
        total = 0.0
        for i in range(probs.shape[0]):
            for c in range(probs.shape[1]):
                y = onehot[i, c]
                if y != 0.0:
                    p = probs[i, c]
                    if p < 1e-12:
                        p = 1e-12
                    total -= y * math.log(p)
        return total / probs.shape[0]

    NUMBA_KERNELS = Kernels(
        name="numba",
        affine=_nb_affine,
        affine_relu=_nb_affine_relu,
        affine_relu_dropout=_nb_affine_relu_dropout,
        softmax_rows=_nb_softmax_rows,
        relu_dropout_backward=_nb_relu_dropout_backward,
        rmsprop_update=_nb_rmsprop_update,
        cce_loss=_nb_cce_loss,
    )
else:
    NUMBA_KERNELS = None


def get_kernels(name: str) -> Kernels:
    """Return one kernel lane by name ("numpy" or "numba")."""
    if name == "numpy":
        return NUMPY_KERNELS
    if name == "numba":
        if NUMBA_KERNELS is None:
            raise RuntimeError("numba backend requested but numba is not installed")
        return NUMBA_KERNELS
    raise ValueError(f"unknown backend {name!r} (expected 'numpy' or 'numba')")


def _resolve_default() -> str:
    choice = os.environ.get(BACKEND_ENV, "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if choice in ("numpy", "numba"):
        return choice
    raise RuntimeError(
        f"{BACKEND_ENV}={choice!r} is not a valid backend (use 'numba', 'numpy', or 'auto')"
    )


ACTIVE_BACKEND = _resolve_default()
KERNELS = get_kernels(ACTIVE_BACKEND)
