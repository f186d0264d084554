"""Sparse first-order update rules: SGD, Momentum, Adam, APP and lagged APP.

Every step function takes ``(model, state, batch)``, evaluates gradients
through ``state.grad_fn`` and updates only the rows the batch touches.
``model`` can be anything exposing a ``params`` dict of 2-D arrays, which
is how the scalar toy problems in :mod:`sgne.theory` reuse these rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, NumericError
from .model import SparseRows, batch_gradients

SGD = "sgd"
MOMENTUM = "momentum"
ADAM = "adam"
APP = "app"
APP_APPROX = "app_approx"
KINDS = (SGD, MOMENTUM, ADAM, APP, APP_APPROX)

PER_ROW = "per_row"
GLOBAL = "global"


@dataclass
class OptimizerState:
    kind: str = SGD
    learning_rate: float = 0.025
    eta: float = 0.9
    rho: float = 1.0
    lam: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    normalization: str = PER_ROW
    base: str = SGD
    grad_fn: Callable = batch_gradients
    step_count: int = 0
    gradient_calls: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be > 0")
        if self.kind == MOMENTUM and not 0.0 <= self.eta < 1.0:
            raise DomainError("eta must lie in [0, 1)")
        if self.kind in (APP, APP_APPROX) and self.lam < 0:
            raise DomainError("lam must be >= 0")
        if self.kind == APP and not self.rho > 0:
            raise DomainError("rho must be > 0")
        if self.base not in (SGD, ADAM):
            raise DomainError(f"base rule must be {SGD!r} or {ADAM!r}, got {self.base!r}")
        if self.normalization not in (PER_ROW, GLOBAL):
            raise DomainError(f"unknown normalization {self.normalization!r}")

    def slot(self, kind: str, name: str, like: np.ndarray, per_row: bool = False,
             fill=0.0):
        """Lazily allocated per-parameter buffer (full shape, or one value per row)."""
        key = (kind, name)
        if key not in self.slots:
            if per_row:
                self.slots[key] = np.full(like.shape[0], fill, dtype=np.int64)
            else:
                self.slots[key] = np.full(like.shape, fill, dtype=np.float64)
        return self.slots[key]


@dataclass
class StepReport:
    loss: float
    grad_norm: float
    perturbed_loss: float | None = None
    app_cosine: float | None = None
    batch_mean: np.ndarray | None = None
    batch_var: np.ndarray | None = None


def _grad(model, state, batch, perturbation=None):
    state.gradient_calls += 1
    return state.grad_fn(model, batch, perturbation)


def _apply(model, state, deltas: dict) -> None:
    lr = state.learning_rate
    for name, rows in deltas.items():
        model.params[name][rows.ids] -= lr * rows.values


def _report(grads, **extra) -> StepReport:
    return StepReport(grads.loss, grads.norm(), batch_mean=grads.batch_mean,
                      batch_var=grads.batch_var, **extra)


def sgd_step(model, state: OptimizerState, batch) -> StepReport:
    """``theta <- theta - lr * grad`` on the touched rows."""
    g = _grad(model, state, batch)
    _apply(model, state, g.rows)
    state.step_count += 1
    return _report(g)


def momentum_step(model, state: OptimizerState, batch) -> StepReport:
    """Heavy-ball update ``v <- grad + eta v``; ``theta <- theta - lr v``.

    Velocities are kept per row.  A row untouched for ``m`` steps would, under
    dense momentum, have kept moving by ``-lr eta^s v`` for ``s = 1..m``; that
    drift and the matching decay are applied in one go before the row is next
    read by a batch (or on :func:`flush`), so the trajectory equals dense momentum.
    """
    eta, lr, t = state.eta, state.learning_rate, state.step_count
    if eta > 0:
        for name, ids in _batch_rows(model, batch).items():
            param = model.params[name]
            v = state.slot("velocity", name, param)
            last = state.slot("last_touch", name, param, per_row=True, fill=-1)
            _catch_up(param, v, last, ids, t, eta, lr)
            last[ids[last[ids] >= 0]] = t - 1
    g = _grad(model, state, batch)
    for name, rows in g.rows.items():
        param = model.params[name]
        v = state.slot("velocity", name, param)
        last = state.slot("last_touch", name, param, per_row=True, fill=-1)
        ids = rows.ids
        if eta > 0:
            _catch_up(param, v, last, ids, t, eta, lr)
        v[ids] = rows.values + eta * v[ids]
        param[ids] -= lr * v[ids]
        last[ids] = t
    state.step_count += 1
    return _report(g)


def _batch_rows(model, batch) -> dict:
    """Rows a batch reads: its embedding rows, or every row for generic models."""
    if hasattr(batch, "centers"):
        rows = {"center": np.unique(batch.centers),
                "context": np.unique(np.concatenate([batch.contexts, batch.negatives.ravel()]))}
        if "w_t" in model.params:
            rows["w_t"] = np.zeros(1, dtype=np.int64)
        return rows
    return {name: np.arange(p.shape[0]) for name, p in model.params.items()}


def _catch_up(param, v, last, ids, t, eta, lr):
    seen = last[ids] >= 0
    ids = ids[seen]
    gap = t - last[ids] - 1
    lagging = gap > 0
    if not lagging.any():
        return
    ids, gap = ids[lagging], gap[lagging].astype(np.float64)
    decay = eta ** gap
    drift = eta * (1.0 - decay) / (1.0 - eta)
    param[ids] -= lr * drift[:, None] * v[ids]
    v[ids] *= decay[:, None]


def flush(model, state: OptimizerState) -> None:
    """Bring lazily-updated momentum rows up to the current step."""
    if state.kind != MOMENTUM or state.eta == 0:
        return
    t = state.step_count
    for name, param in model.params.items():
        key_v, key_l = ("velocity", name), ("last_touch", name)
        if key_v not in state.slots:
            continue
        v, last = state.slots[key_v], state.slots[key_l]
        ids = np.flatnonzero(last >= 0)
        _catch_up(param, v, last, ids, t, state.eta, state.learning_rate)
        last[ids] = t - 1


def _adam_apply(model, state: OptimizerState, deltas: dict) -> None:
    b1, b2 = state.beta1, state.beta2
    t = state.step_count + 1
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for name, rows in deltas.items():
        param = model.params[name]
        m = state.slot("adam_m", name, param)
        s = state.slot("adam_v", name, param)
        ids, grad = rows.ids, rows.values
        m[ids] = b1 * m[ids] + (1.0 - b1) * grad
        s[ids] = b2 * s[ids] + (1.0 - b2) * grad * grad
        param[ids] -= state.learning_rate * (m[ids] / c1) / (np.sqrt(s[ids] / c2) + state.eps_adam)


def _apply_direction(model, state: OptimizerState, deltas: dict) -> None:
    """Feed an update direction to the APP base rule (plain step or Adam)."""
    if state.base == ADAM:
        _adam_apply(model, state, deltas)
    else:
        _apply(model, state, deltas)


def adam_step(model, state: OptimizerState, batch) -> StepReport:
    """Bias-corrected Adam on touched rows (moments of other rows are left as is)."""
    g = _grad(model, state, batch)
    _adam_apply(model, state, g.rows)
    state.step_count += 1
    return _report(g)


def fgm_perturbation(gradient: dict, rho: float, normalization: str = PER_ROW) -> dict:
    """Closed-form maximiser ``n = rho * g / ||g||`` of the linearised loss.

    ``gradient`` maps parameter names to :class:`SparseRows`.  ``global`` takes
    one norm over every touched entry; ``per_row`` normalises each embedding
    row (and the ``w_t`` row) on its own.  Zero gradients give zero offsets.
    """
    if not rho > 0:
        raise DomainError("rho must be > 0")
    if normalization == GLOBAL:
        total = math.sqrt(sum(float(np.sum(r.values ** 2)) for r in gradient.values()))
        scale = rho / total if total > 0 else 0.0
        return {name: SparseRows(r.ids, r.values * scale) for name, r in gradient.items()}
    if normalization != PER_ROW:
        raise DomainError(f"unknown normalization {normalization!r}")
    out = {}
    for name, r in gradient.items():
        norms = np.linalg.norm(r.values, axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)
        out[name] = SparseRows(r.ids, np.where(norms > 0, rho * r.values / safe, 0.0))
    return out


def _cosine_with_last_displacement(model, state, perturbation):
    dot = nn = dd = 0.0
    for name, n in perturbation.items():
        disp = state.slot("displacement", name, model.params[name])[n.ids]
        dot += float(np.sum(n.values * disp))
        nn += float(np.sum(n.values ** 2))
        dd += float(np.sum(disp ** 2))
    if nn == 0 or dd == 0:
        return None
    return dot / math.sqrt(nn * dd)


def app_step(model, state: OptimizerState, batch) -> StepReport:
    """Adversarial perturbation on parameters.

    ``g1 = grad L(theta)``, ``n = fgm(g1)``, ``g2 = grad L(theta + n)`` on the
    same batch and negatives, then ``theta <- theta - lr (g1 + lam g2)``
    (or, with ``base="adam"``, an Adam step along ``g1 + lam g2``).
    The report carries the cosine between ``n`` and the previous displacement
    ``theta_prev - theta`` of the touched rows.
    """
    g1 = _grad(model, state, batch)
    n = fgm_perturbation(g1.rows, state.rho, state.normalization)
    g2 = _grad(model, state, batch, n)
    cosine = _cosine_with_last_displacement(model, state, n)
    lam = state.lam
    deltas = {name: SparseRows(r.ids, r.values + lam * g2.rows[name].values)
              for name, r in g1.rows.items()}
    before = {name: model.params[name][d.ids] for name, d in deltas.items()}
    _apply_direction(model, state, deltas)
    for name, d in deltas.items():
        state.slot("displacement", name, model.params[name])[d.ids] = (
            before[name] - model.params[name][d.ids])
    state.step_count += 1
    return _report(g1, perturbed_loss=g2.loss, app_cosine=cosine)


def app_approx_step(model, state: OptimizerState, batch) -> StepReport:
    """Lagged-gradient APP: ``theta <- theta - lr (g_t + lam g_prev)``.

    ``g_prev`` is, per touched row, the gradient stored the last time that row
    was updated (zero when it has no history).  One gradient pass per step.
    """
    g = _grad(model, state, batch)
    lam = state.lam
    deltas = {}
    for name, r in g.rows.items():
        prev = state.slot("prev_grad", name, model.params[name])
        deltas[name] = SparseRows(r.ids, r.values + lam * prev[r.ids])
        prev[r.ids] = r.values
    _apply_direction(model, state, deltas)
    state.step_count += 1
    return _report(g)


STEPS = {
    SGD: sgd_step,
    MOMENTUM: momentum_step,
    ADAM: adam_step,
    APP: app_step,
    APP_APPROX: app_approx_step,
}


def step(model, state: OptimizerState, batch) -> StepReport:
    report = STEPS[state.kind](model, state, batch)
    if not math.isfinite(report.loss):
        raise NumericError("non-finite loss")
    return report
