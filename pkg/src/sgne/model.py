"""Embedding tables, the Sigmoid and Sine skip-gram losses, and their gradients.

Parameters live in a dict of 2-D arrays so optimizers can treat them
uniformly: ``center`` and ``context`` are ``(N, r)``; the Sine projection
``w_t`` is stored as a single ``(1, r)`` row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .errors import DomainError, NumericError, UndefinedSimilarityError

SIGMOID = "sigmoid"
SINE = "sine"
ACTIVATIONS = (SIGMOID, SINE)

HALF_PI = 0.5 * math.pi
RUNNING_MOMENTUM = 0.9


class SparseRows(NamedTuple):
    """Row ids (sorted, unique) and the matching row values."""

    ids: np.ndarray
    values: np.ndarray


def segment_sum(ids: np.ndarray, values: np.ndarray) -> SparseRows:
    """Sum ``values`` rows sharing the same id."""
    unique, inverse = np.unique(ids, return_inverse=True)
    n = len(ids)
    scatter = sparse.csr_matrix((np.ones(n), (inverse, np.arange(n))), shape=(len(unique), n))
    return SparseRows(unique, scatter @ values)


@dataclass
class EmbeddingModel:
    center: np.ndarray
    context: np.ndarray
    activation: str = SIGMOID
    w_t: np.ndarray | None = None
    delta: float = 0.01
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    bn_eps: float = 1e-5
    stats_warm: bool = False

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.activation == SINE:
            if self.delta <= 0:
                raise DomainError("delta must be positive for the Sine loss")
            r = self.dim
            if self.w_t is None:
                self.w_t = np.zeros((1, r))
            self.w_t = np.asarray(self.w_t, dtype=np.float64).reshape(1, r)
            if self.running_mean is None:
                self.running_mean = np.zeros(r)
            if self.running_var is None:
                self.running_var = np.ones(r)

    @property
    def node_count(self) -> int:
        return self.center.shape[0]

    @property
    def dim(self) -> int:
        return self.center.shape[1]

    @property
    def params(self) -> dict:
        params = {"center": self.center, "context": self.context}
        if self.activation == SINE:
            params["w_t"] = self.w_t
        return params

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            self.center.copy(), self.context.copy(), self.activation,
            None if self.w_t is None else self.w_t.copy(), self.delta,
            None if self.running_mean is None else self.running_mean.copy(),
            None if self.running_var is None else self.running_var.copy(),
            self.bn_eps, self.stats_warm)

    def update_running_stats(self, batch_mean, batch_var) -> None:
        if self.activation != SINE or batch_mean is None:
            return
        self.running_mean *= RUNNING_MOMENTUM
        self.running_mean += (1 - RUNNING_MOMENTUM) * batch_mean
        self.running_var *= RUNNING_MOMENTUM
        self.running_var += (1 - RUNNING_MOMENTUM) * batch_var
        self.stats_warm = True

    def write_embeddings(self, stream, which="center", labels=None) -> None:
        """Text export: header ``N r`` then ``label v_1 ... v_r`` per node."""
        table = self.center if which == "center" else self.context
        stream.write(f"{table.shape[0]} {table.shape[1]}\n")
        for i, row in enumerate(table):
            label = labels[i] if labels is not None else str(i)
            stream.write(label + " " + " ".join(f"{v:.9g}" for v in row) + "\n")

    def sine_params_json(self) -> str:
        return json.dumps({
            "w_t": [float(v) for v in self.w_t.ravel()],
            "delta": self.delta,
            "bn_eps": self.bn_eps,
            "running_mean": [float(v) for v in self.running_mean],
            "running_var": [float(v) for v in self.running_var],
            "stats_warm": self.stats_warm,
        }, indent=2, sort_keys=True)


def init_model(n: int, dim: int, activation: str = SIGMOID, delta: float = 0.01,
               seed: int | None = 0, bn_eps: float = 1e-5) -> EmbeddingModel:
    """Uniform ``[-0.5/r, 0.5/r]`` tables; ``w_t ~ U(-sqrt(6/r), sqrt(6/r))`` for Sine."""
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    bound = 0.5 / dim
    center = rng.uniform(-bound, bound, size=(n, dim))
    context = rng.uniform(-bound, bound, size=(n, dim))
    w_t = None
    if activation == SINE:
        limit = math.sqrt(6.0 / dim)
        w_t = rng.uniform(-limit, limit, size=(1, dim))
    return EmbeddingModel(center, context, activation, w_t, delta, bn_eps=bn_eps)


@dataclass
class SampleBatch:
    centers: np.ndarray
    contexts: np.ndarray
    weights: np.ndarray
    negatives: np.ndarray  # (B, k)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.int64)
        self.contexts = np.asarray(self.contexts, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        negatives = np.asarray(self.negatives, dtype=np.int64)
        if negatives.ndim != 2:
            negatives = negatives.reshape(len(self.centers), -1)
        self.negatives = negatives

    def __len__(self):
        return len(self.centers)

    @property
    def k(self) -> int:
        return self.negatives.shape[1]


@dataclass
class Gradients:
    rows: dict
    loss: float
    batch_mean: np.ndarray | None = None
    batch_var: np.ndarray | None = None

    @property
    def center(self) -> SparseRows:
        return self.rows["center"]

    @property
    def context(self) -> SparseRows:
        return self.rows["context"]

    @property
    def w_t(self):
        rows = self.rows.get("w_t")
        return None if rows is None else rows.values[0]

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(r.values ** 2)) for r in self.rows.values()))


# -- scalar helpers ---------------------------------------------------------

def sigmoid(x):
    """Logistic function, evaluated without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else out[()]


def softplus(x):
    return np.logaddexp(0.0, x)


def sine_scores(pre_activation, delta):
    """``(T+, T-)`` for a pre-activation ``a = W_T · normalized product``."""
    s = np.sin(HALF_PI * np.asarray(pre_activation, dtype=np.float64))
    return 0.5 * (1.0 + s) + delta, 0.5 * (1.0 - s) + delta


# -- gathering with optional parameter offsets --------------------------------

def _gather(param: np.ndarray, ids: np.ndarray, offset: SparseRows | None):
    rows = param[ids]
    if offset is not None and len(offset.ids):
        pos = np.searchsorted(offset.ids, ids)
        pos = np.minimum(pos, len(offset.ids) - 1)
        hit = offset.ids[pos] == ids
        rows[hit] += offset.values[pos[hit]]
    return rows


def _check_finite(values, batch, what):
    bad = ~np.isfinite(values)
    if bad.any():
        b = int(np.flatnonzero(bad.reshape(len(batch), -1).any(axis=1))[0])
        raise NumericError(f"non-finite {what}",
                           pair=(int(batch.centers[b]), int(batch.contexts[b])))


def _sigmoid_forward(model, batch, perturbation):
    off = perturbation or {}
    u = _gather(model.center, batch.centers, off.get("center"))
    vp = _gather(model.context, batch.contexts, off.get("context"))
    vn = _gather(model.context, batch.negatives.ravel(), off.get("context"))
    vn = vn.reshape(len(batch), batch.k, -1)
    xp = np.einsum("br,br->b", u, vp)
    xn = np.einsum("bkr,br->bk", vn, u)
    return u, vp, vn, xp, xn


def _sine_forward(model, batch, perturbation):
    off = perturbation or {}
    u = _gather(model.center, batch.centers, off.get("center"))
    vp = _gather(model.context, batch.contexts, off.get("context"))
    vn = _gather(model.context, batch.negatives.ravel(), off.get("context"))
    vn = vn.reshape(len(batch), batch.k, -1)
    w = _gather(model.w_t, np.zeros(1, dtype=np.int64), off.get("w_t"))[0]
    z = np.concatenate([u * vp, (u[:, None, :] * vn).reshape(-1, model.dim)])
    mean = z.mean(axis=0)
    var = z.var(axis=0)
    inv = 1.0 / np.sqrt(var + model.bn_eps)
    zhat = (z - mean) * inv
    a = zhat @ w
    return u, vp, vn, w, zhat, inv, mean, var, a


def _sigmoid_loss_terms(batch, xp, xn):
    return batch.weights * (softplus(-xp) + softplus(xn).sum(axis=1))


def _sine_loss_terms(model, batch, a):
    b = len(batch)
    tp, _ = sine_scores(a[:b], model.delta)
    _, tn = sine_scores(a[b:].reshape(b, batch.k), model.delta)
    return batch.weights * (-np.log(tp) - np.log(tn).sum(axis=1))


def batch_loss(model: EmbeddingModel, batch: SampleBatch, perturbation=None) -> float:
    """Summed negative-sampling loss over the batch entries.

    Each entry contributes ``-w (log S+ + sum over its k negatives of log S-)``;
    for Sine the products are normalized with the statistics of this batch.
    """
    if len(batch) == 0:
        raise DomainError("empty batch")
    if model.activation == SIGMOID:
        *_, xp, xn = _sigmoid_forward(model, batch, perturbation)
        terms = _sigmoid_loss_terms(batch, xp, xn)
    else:
        *_, a = _sine_forward(model, batch, perturbation)
        terms = _sine_loss_terms(model, batch, a)
    _check_finite(terms, batch, "loss")
    return float(terms.sum())


def batch_gradients(model: EmbeddingModel, batch: SampleBatch,
                    perturbation: dict | None = None) -> Gradients:
    """Exact gradient of :func:`batch_loss` w.r.t. the rows the batch touches.

    ``perturbation`` maps parameter names to :class:`SparseRows` offsets that
    are added to the parameters before evaluation (the model is not modified).
    """
    if len(batch) == 0:
        raise DomainError("empty batch")
    b, k = len(batch), batch.k
    w = batch.weights
    if model.activation == SIGMOID:
        u, vp, vn, xp, xn = _sigmoid_forward(model, batch, perturbation)
        terms = _sigmoid_loss_terms(batch, xp, xn)
        _check_finite(terms, batch, "loss")
        dxp = -w * sigmoid(-xp)
        dxn = w[:, None] * sigmoid(xn)
        du = dxp[:, None] * vp + np.einsum("bk,bkr->br", dxn, vn)
        dvp = dxp[:, None] * u
        dvn = dxn[:, :, None] * u[:, None, :]
        extra = {}
        mean = var = None
    else:
        u, vp, vn, wt, zhat, inv, mean, var, a = _sine_forward(model, batch, perturbation)
        terms = _sine_loss_terms(model, batch, a)
        _check_finite(terms, batch, "loss")
        ap, an = a[:b], a[b:].reshape(b, k)
        tp, _ = sine_scores(ap, model.delta)
        _, tn = sine_scores(an, model.delta)
        dap = -w * (0.25 * math.pi) * np.cos(HALF_PI * ap) / tp
        dan = w[:, None] * (0.25 * math.pi) * np.cos(HALF_PI * an) / tn
        da = np.concatenate([dap, dan.ravel()])
        dw = zhat.T @ da
        dzhat = da[:, None] * wt[None, :]
        dz = inv * (dzhat - dzhat.mean(axis=0) - zhat * (dzhat * zhat).mean(axis=0))
        dzp = dz[:b]
        dzn = dz[b:].reshape(b, k, -1)
        du = dzp * vp + np.einsum("bkr,bkr->br", dzn, vn)
        dvp = dzp * u
        dvn = dzn * u[:, None, :]
        extra = {"w_t": SparseRows(np.zeros(1, dtype=np.int64), dw[None, :])}

    rows = {
        "center": segment_sum(batch.centers, du),
        "context": segment_sum(np.concatenate([batch.contexts, batch.negatives.ravel()]),
                               np.concatenate([dvp, dvn.reshape(b * k, -1)])),
        **extra,
    }
    for name, r in rows.items():
        if not np.all(np.isfinite(r.values)):
            raise NumericError(f"non-finite gradient for {name}")
    return Gradients(rows, float(terms.sum()), mean, var)


# -- similarities --------------------------------------------------------------

def sigmoid_similarity(model: EmbeddingModel, i, j):
    """``sigma(u'_j · u_i)``."""
    if model.activation != SIGMOID:
        raise DomainError("sigmoid_similarity requires a Sigmoid model")
    x = np.einsum("...r,...r->...", model.center[i], model.context[j])
    return sigmoid(x)


def sine_pre_activation(model: EmbeddingModel, i, j, mode: str = "inference"):
    z = model.center[i] * model.context[j]
    if mode == "train_batch":
        z2 = np.atleast_2d(z)
        mean, var = z2.mean(axis=0), z2.var(axis=0)
        model.update_running_stats(mean, var)
    elif mode == "inference":
        mean, var = model.running_mean, model.running_var
    else:
        raise DomainError(f"unknown mode {mode!r}")
    zhat = (z - mean) / np.sqrt(var + model.bn_eps)
    return zhat @ model.w_t[0]


def sine_similarity(model: EmbeddingModel, i, j, mode: str = "inference"):
    """``T+ = (1 + sin(pi/2 · a)) / 2 + delta`` for the pairs ``(i, j)``.

    ``inference`` normalizes with the running statistics; ``train_batch``
    treats the given pairs as one batch and folds its statistics into the
    running estimates.
    """
    if model.activation != SINE:
        raise DomainError("sine_similarity requires a Sine model")
    tp, _ = sine_scores(sine_pre_activation(model, i, j, mode), model.delta)
    return tp


def similarity(model: EmbeddingModel, i, j):
    if model.activation == SIGMOID:
        return sigmoid_similarity(model, i, j)
    return sine_similarity(model, i, j)


def positive_pair_gradient(model: EmbeddingModel, i, j):
    """Magnitude of ``d(-log score)/d(pre-activation)`` for linked pairs.

    Sigmoid: ``1 - S+``.  Sine: ``(pi/4)|cos(pi a / 2)| / T+`` under the
    running normalization statistics.
    """
    if model.activation == SIGMOID:
        return 1.0 - sigmoid_similarity(model, i, j)
    a = sine_pre_activation(model, i, j)
    tp, _ = sine_scores(a, model.delta)
    return 0.25 * math.pi * np.abs(np.cos(HALF_PI * a)) / tp


def normalized_similarity(model: EmbeddingModel, i, j):
    """Cosine between context row ``j`` and center row ``i``."""
    u = np.atleast_2d(model.center[i])
    v = np.atleast_2d(model.context[j])
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise UndefinedSimilarityError("cosine of a zero-norm embedding row")
    cos = np.einsum("br,br->b", u, v) / (nu * nv)
    cos = np.clip(cos, -1.0, 1.0)
    return cos if np.ndim(i) or np.ndim(j) else float(cos[0])
