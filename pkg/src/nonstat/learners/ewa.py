"""Exponentially weighted average forecasters over explicit experts.

All array functions broadcast over leading axes, so a batch of independent
sequences can be run in lockstep with arrays of shape ``(n, m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..losses import LOG, LossKind, eval_loss, mixability_eta

CUMULATIVE = "cumulative"
MULTIPLICATIVE = "multiplicative"


@dataclass
class WeightVector:
    """Normalized expert weights and the round index inside the epoch."""

    w: np.ndarray
    r: int = 1

    @property
    def m(self) -> int:
        return int(self.w.shape[-1])

    @classmethod
    def uniform(cls, m: int) -> "WeightVector":
        if m < 1:
            raise ValueError("need at least one expert")
        return cls(np.full(m, 1.0 / m), 1)


def _as_array(weights) -> np.ndarray:
    return weights.w if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)


def learning_rate(m: int, r) -> float | np.ndarray:
    """eta_r = sqrt(8 ln m / r); zero for a single expert."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.sqrt(8.0 * math.log(m) / np.asarray(r, dtype=float)) if np.ndim(r) else math.sqrt(8.0 * math.log(m) / r)


def ewa_predict(weights, expert_preds) -> float | np.ndarray:
    """Weighted average of expert predictions along the last axis."""
    w = _as_array(weights)
    p = np.asarray(expert_preds, dtype=float)
    if p.shape[-1] == 0:
        raise ValueError("no experts")
    out = (w * p).sum(axis=-1) / w.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def ewa_update(weights, expert_losses, eta) -> np.ndarray:
    """Multiplicative update followed by renormalization to sum one."""
    w = _as_array(weights)
    loss = np.asarray(expert_losses, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eta.ndim:
        eta = eta[..., None]
    # Shift by the minimum loss before exponentiating; it cancels on
    # renormalization and keeps the exponent nonpositive.
    shift = loss.min(axis=-1, keepdims=True)
    new = w * np.exp(-eta * (loss - shift))
    return new / new.sum(axis=-1, keepdims=True)


def cumulative_weights(cum_losses, eta) -> np.ndarray:
    """Weights proportional to exp(-eta * L), the closed form of EWA."""
    L = np.asarray(cum_losses, dtype=float)
    return ewa_update(np.ones_like(L), L, eta)


class ExpertForecaster:
    """Adaptive-rate EWA over m experts, vectorized over a batch.

    ``weighting="cumulative"`` uses w_i proportional to exp(-eta_r L_i), the
    form whose regret is bounded by sqrt(2 T ln m) + sqrt(ln m / 8) with the
    decreasing rate. ``"multiplicative"`` chains w <- w exp(-eta_r loss)
    with the current rate, which coincides for a constant rate.
    """

    def __init__(self, m: int, loss: LossKind, batch: tuple = (), weighting: str = CUMULATIVE):
        self.m = m
        self.loss = loss
        self.weighting = weighting
        self.r = 1
        self.L = np.zeros(batch + (m,))
        self.w = np.full(batch + (m,), 1.0 / m)

    def weights(self) -> np.ndarray:
        if self.weighting == CUMULATIVE:
            return cumulative_weights(self.L, learning_rate(self.m, self.r))
        return self.w

    def predict(self, expert_preds) -> np.ndarray:
        return ewa_predict(self.weights(), expert_preds)

    def update(self, expert_preds, y) -> None:
        y = np.asarray(y)
        losses = eval_loss(self.loss, np.asarray(expert_preds, float), y[..., None] if y.ndim else y)
        if self.weighting == MULTIPLICATIVE:
            self.w = ewa_update(self.w, losses, learning_rate(self.m, self.r))
        self.L = self.L + losses
        self.r += 1


def aggregating_predict(weights, expert_preds, kind: LossKind) -> float | np.ndarray:
    """Aggregating-algorithm prediction for a mixable loss.

    Log-loss gives the Bayes mixture. For the Brier loss the substitution
    yhat = (1 + g(0) - g(1)) / 2 with the generalized prediction
    g(y) = -(1/eta) ln sum_i w_i exp(-eta loss(p_i, y)) satisfies the
    mixability inequality for eta = 2.
    """
    eta = mixability_eta(kind)
    w = _as_array(weights)
    w = w / w.sum(axis=-1, keepdims=True)
    p = np.asarray(expert_preds, dtype=float)
    if kind.kind == LOG:
        return ewa_predict(w, p)
    g0 = -np.log((w * np.exp(-eta * eval_loss(kind, p, 0))).sum(axis=-1)) / eta
    g1 = -np.log((w * np.exp(-eta * eval_loss(kind, p, 1))).sum(axis=-1)) / eta
    out = np.clip(0.5 * (1.0 + g0 - g1), 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def truncated_bayes_predict(weights, expert_preds, alpha: float) -> float | np.ndarray:
    """Bayes mixture of clamped expert predictions, clamped again."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    p = np.clip(np.asarray(expert_preds, dtype=float), alpha, 1.0 - alpha)
    out = np.clip(ewa_predict(weights, p), alpha, 1.0 - alpha)
    return float(out) if np.ndim(out) == 0 else out


class AggregatingForecaster:
    """Aggregating algorithm with the loss's mixability rate, batched.

    For log-loss the experts' predictions are clamped into the truncation
    range before both prediction and update (the loss clamps them anyway),
    which makes this the truncated Bayes mixture.
    """

    def __init__(self, m: int, loss: LossKind, batch: tuple = (), eta: float | None = None):
        self.loss = loss
        self.eta = mixability_eta(loss) if eta is None else eta
        self.w = np.full(batch + (m,), 1.0 / m)

    def _preds(self, expert_preds):
        p = np.asarray(expert_preds, dtype=float)
        if self.loss.kind == LOG:
            a = self.loss.truncation_alpha
            p = np.clip(p, a, 1.0 - a)
        return p

    def predict(self, expert_preds):
        p = self._preds(expert_preds)
        if self.loss.kind == LOG:
            return truncated_bayes_predict(self.w, p, self.loss.truncation_alpha)
        return aggregating_predict(self.w, p, self.loss)

    def update(self, expert_preds, y) -> None:
        y = np.asarray(y)
        p = self._preds(expert_preds)
        losses = eval_loss(self.loss, p, y[..., None] if y.ndim else y)
        self.w = ewa_update(self.w, losses, self.eta)


def ewa_regret_bound(T: int, m: int) -> float:
    """sqrt(2 T ln m) + sqrt(ln m / 8)."""
    return math.sqrt(2.0 * T * math.log(m)) + math.sqrt(math.log(m) / 8.0)
