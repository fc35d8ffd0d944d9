"""Losses and their hand-derived gradients, optimized by Adam one video at a time."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._validation import check_feature_list, check_label_matrix
from .data import DatasetManifest, label_matrix, load_stream, sample_segments
from .model import ForwardCache, ModelParams, forward, init_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyperparams:
    beta: float = 0.1
    lr: float = 1e-4
    T_out: int = 400
    epochs: int = 100
    hidden: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.T_out < 1 or self.hidden < 1:
            raise ValueError("T_out and hidden must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam constants")


@dataclass(frozen=True, eq=False)
class Gradients:
    dW1: np.ndarray
    db1: np.ndarray
    dW2: np.ndarray
    db2: float
    dWc: np.ndarray

    def tensors(self) -> dict:
        return {"W1": self.dW1, "b1": self.db1, "W2": self.dW2,
                "b2": np.array(self.db2), "Wc": self.dWc}

    @classmethod
    def from_tensors(cls, t: dict) -> "Gradients":
        return cls(dW1=t["W1"], db1=t["b1"], dW2=t["W2"],
                   db2=float(t["b2"]), dWc=t["Wc"])


@dataclass(frozen=True, eq=False)
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        t = params.tensors()
        return cls(m={k: np.zeros_like(a) for k, a in t.items()},
                   v={k: np.zeros_like(a) for k, a in t.items()})


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss_class: float
    loss_sparsity: float
    loss_total: float
    mean_lambda: float

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.loss_class!r},{self.loss_sparsity!r},"
                f"{self.loss_total!r},{self.mean_lambda!r}")


CSV_HEADER = "epoch,loss_class,loss_sparsity,loss_total,mean_lambda"


def as_indicator(y, C: int) -> np.ndarray:
    """Label set (any non-array iterable of class ids) or 0/1 array -> indicator."""
    if isinstance(y, np.ndarray):
        y = y.astype(np.float64)
        if y.shape != (C,):
            raise ValueError(f"label indicator must have shape ({C},)")
        return y
    out = np.zeros(C)
    out[list(y)] = 1.0
    return out


def classification_loss(p, y) -> float:
    """Mean binary cross-entropy over classes."""
    p = np.asarray(p, dtype=np.float64)
    y = as_indicator(y, p.shape[0])
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def classification_loss_from_scores(s, y) -> float:
    """Same as :func:`classification_loss` with ``p = sigmoid(s)``, stable for large |s|."""
    s = np.asarray(s, dtype=np.float64)
    y = as_indicator(y, s.shape[0])
    return float(np.mean(np.logaddexp(0.0, s) - y * s))


def sparsity_loss(lam) -> float:
    lam = np.asarray(lam, dtype=np.float64)
    return float(np.mean(np.abs(lam)))


def total_loss(cache: ForwardCache, y, beta: float) -> float:
    return classification_loss_from_scores(cache.s, y) + beta * sparsity_loss(cache.lam)


def backward(params: ModelParams, cache: ForwardCache, y, beta: float) -> Gradients:
    C, T = params.C, cache.T
    y = as_indicator(y, C)
    g_s = (cache.p - y) / C
    dWc = np.outer(g_s, cache.xbar)
    g_xbar = params.Wc.T @ g_s
    # lambda feeds both the pooled representation and the sparsity term
    g_lam = cache.X @ g_xbar + beta * np.sign(cache.lam) / T
    g_z2 = g_lam * cache.lam * (1.0 - cache.lam)
    dW2 = (g_z2 @ cache.r1)[None, :]
    db2 = float(g_z2.sum())
    g_z1 = np.outer(g_z2, params.W2[0]) * (cache.z1 > 0)
    dW1 = g_z1.T @ cache.X
    db1 = g_z1.sum(axis=0)
    return Gradients(dW1=dW1, db1=db1, dW2=dW2, db2=db2, dWc=dWc)


def finite_diff_grad(params: ModelParams, X, y, beta: float, epsilon: float = 1e-4,
                     loss=None) -> Gradients:
    """Central differences of the loss with respect to every scalar parameter.

    ``loss(params) -> float`` replaces the network loss when given.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if loss is None:
        def loss(p):
            return total_loss(forward(p, X), y, beta)
    base = {k: np.array(a, dtype=np.float64) for k, a in params.tensors().items()}
    grads = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            up = loss(ModelParams.from_tensors(base))
            arr[idx] = orig - epsilon
            down = loss(ModelParams.from_tensors(base))
            arr[idx] = orig
            g[idx] = (up - down) / (2 * epsilon)
        grads[name] = g
    return Gradients.from_tensors(grads)


def kink_adjacent_units(params: ModelParams, X, epsilon: float = 1e-4,
                        tol: float = 1e-6) -> np.ndarray:
    """Hidden units whose pre-activation could cross 0 under a finite-difference step."""
    X = np.asarray(X, dtype=np.float64)
    z1 = X @ params.W1.T + params.b1
    # largest |dz1| from perturbing one entry of that unit's row by epsilon
    reach = np.maximum(tol, epsilon * np.maximum(1.0, np.abs(X).max(axis=1)))
    return np.any(np.abs(z1) <= reach[:, None], axis=0)


def gradient_check(params: ModelParams, X, y, beta: float, epsilon: float = 1e-4,
                   floor: float = 1e-8) -> float:
    """Max elementwise relative error between :func:`backward` and central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``. W1 rows and b1 entries
    of kink-adjacent hidden units are skipped.
    """
    analytic = backward(params, forward(params, X), y, beta).tensors()
    numeric = finite_diff_grad(params, X, y, beta, epsilon).tensors()
    kink = kink_adjacent_units(params, X, epsilon)
    worst = 0.0
    for k in analytic:
        a, n = np.atleast_1d(analytic[k]), np.atleast_1d(numeric[k])
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if k in ("W1", "b1"):
            err = err[~kink]
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


def adam_step(params: ModelParams, grads: Gradients, state: AdamState,
              hyper: Hyperparams) -> tuple[ModelParams, AdamState]:
    step = state.step + 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1, c2 = 1.0 - b1 ** step, 1.0 - b2 ** step
    g_all = grads.tensors()
    new_p, new_m, new_v = {}, {}, {}
    for k, theta in params.tensors().items():
        g = g_all[k]
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        new_p[k] = theta - hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
        new_m[k], new_v[k] = m, v
    return ModelParams.from_tensors(new_p), AdamState(m=new_m, v=new_v, step=step)


def train_arrays(features, Y, hyper: Hyperparams, on_epoch=None):
    """Train one stream on in-memory features.

    ``features`` is a list of (T_i, m) arrays and ``Y`` an (n, C) 0/1 matrix.
    Returns ``(params, history)``.
    """
    features = check_feature_list(features)
    Y = check_label_matrix(Y, len(features))
    m, C = features[0].shape[1], Y.shape[1]
    params = init_params(m, hyper.hidden, C, hyper.seed)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng([hyper.seed, 1])
    history = []
    for epoch in range(1, hyper.epochs + 1):
        sums = np.zeros(4)
        order = rng.permutation(len(features))
        for i in order:
            X = sample_segments(features[i], hyper.T_out, "perturbed", rng)
            cache = forward(params, X)
            lc = classification_loss_from_scores(cache.s, Y[i])
            ls = sparsity_loss(cache.lam)
            sums += (lc, ls, lc + hyper.beta * ls, cache.lam.mean())
            grads = backward(params, cache, Y[i], hyper.beta)
            params, state = adam_step(params, grads, state, hyper)
        stats = EpochStats(epoch, *(float(x) for x in sums / len(features)))
        history.append(stats)
        logger.debug("epoch %d loss %.5f", epoch, stats.loss_total)
        if on_epoch is not None:
            on_epoch(stats)
    return params, history


def train(manifest: DatasetManifest, stream: str, hyper: Hyperparams, on_epoch=None,
          return_history: bool = False):
    """Train the model for ``stream`` from video-level labels only."""
    features = load_stream(manifest, stream)
    params, history = train_arrays(features, label_matrix(manifest), hyper, on_epoch)
    return (params, history) if return_history else params


__all__ = [
    "Hyperparams", "Gradients", "AdamState", "EpochStats", "CSV_HEADER",
    "classification_loss", "classification_loss_from_scores", "sparsity_loss",
    "total_loss", "backward", "finite_diff_grad", "gradient_check", "adam_step", "train",
    "train_arrays", "as_indicator",
]
