"""Mixture forecasters over a finite cover of the class.

For thresholds the cover can be astronomically large (spacing 1/T^2 and
below), so members are never listed: members lying between two consecutive
observed points make identical predictions forever after, and they are kept
as one cell carrying the member count and a shared cumulative loss. The
cover only has to answer ``count_in(lo, hi)``, the number of members a with
lo < a <= hi.

Modes:
``ewa``     adaptive-rate EWA, eta_t = sqrt(8 ln M / t) with M members;
``tbayes``  Bayes mixture of clamped experts (log-loss);
``aa``      aggregating algorithm at the loss's mixability rate.
"""

from __future__ import annotations

import bisect
import math
from typing import Optional, Sequence

import numpy as np

from ..hypotheses import FiniteTable, HypothesisClass
from ..losses import LOG, LossKind, eval_loss, mixability_eta
from .ewa import aggregating_predict

EWA = "ewa"
TBAYES = "tbayes"
AA = "aa"
MODES = (EWA, TBAYES, AA)
_CHUNK = 1 << 20


def _expert_tables(mode: str, loss: LossKind) -> tuple[np.ndarray, np.ndarray]:
    """Prediction of a 0/1 expert and its loss table under the given mode."""
    preds = np.array([0.0, 1.0])
    if mode != EWA and loss.kind == LOG:
        a = loss.truncation_alpha
        preds = np.array([a, 1.0 - a])
    table = np.array([[eval_loss(loss, p, y) for y in (0, 1)] for p in preds])
    return preds, table


class _MixtureBase:
    def __init__(self, mode: str, loss: LossKind, log_size: float):
        if mode not in MODES:
            raise ValueError(f"unknown mixture mode {mode!r}")
        if mode == TBAYES and loss.kind != LOG:
            raise ValueError("truncated Bayes is defined for the log-loss")
        self.mode = mode
        self.loss = loss
        self.eta_fixed = None if mode == EWA else (1.0 if mode == TBAYES else mixability_eta(loss))
        self.log_size = log_size
        self.expert_pred, self.lt = _expert_tables(mode, loss)
        self.t = 0
        self.epochs = 1
        self.restarts = 0

    def _eta(self, t) -> float | np.ndarray:
        if self.eta_fixed is not None:
            return self.eta_fixed if np.ndim(t) == 0 else np.full(np.shape(t), self.eta_fixed)
        # ln M is known directly, so the rate is computed from it.
        return np.sqrt(8.0 * self.log_size / np.asarray(t, dtype=float)) if np.ndim(t) else math.sqrt(8.0 * self.log_size / t)

    def _combine(self, W0, W1):
        """Prediction from the total weight of experts saying 0 and 1."""
        tot = W0 + W1
        if self.mode == AA and self.loss.kind != LOG:
            w = np.stack([W0 / tot, W1 / tot], axis=-1)
            return aggregating_predict(w, self.expert_pred, self.loss)
        p = (W0 * self.expert_pred[0] + W1 * self.expert_pred[1]) / tot
        if self.mode != EWA and self.loss.kind == LOG:
            a = self.loss.truncation_alpha
            p = np.clip(p, a, 1.0 - a)
        return p


class ThresholdCoverMixture(_MixtureBase):
    """Mixture over a threshold cover, one cover per block.

    ``covers`` holds one object per block exposing ``count_in(lo, hi)`` and
    ``size``; product classes use the product cover, whose size is the
    product of the block sizes.
    """

    def __init__(self, hclass: HypothesisClass, covers: Sequence, mode: str, loss: LossKind):
        self.hclass = hclass
        self.covers = list(covers)
        if len(self.covers) != hclass.n_blocks:
            raise ValueError("need one cover per block")
        log_size = sum(math.log(c.size) for c in self.covers)
        super().__init__(mode, loss, log_size)
        self._bounds = []
        self._logc = []
        self._L = []
        for cov in self.covers:
            self._bounds.append([1.0])
            self._logc.append(np.array([math.log(cov.count_in(-math.inf, 1.0))]))
            self._L.append(np.zeros(1))
        self._pending = None

    def _split(self, b: int, v: float) -> int:
        """Make v a cell boundary in block b; return the index of (.., v]."""
        bounds = self._bounds[b]
        i = bisect.bisect_left(bounds, v)
        if i == len(bounds):
            raise ValueError(f"value {v} above 1")
        if bounds[i] == v:
            return i
        lo = bounds[i - 1] if i > 0 else -math.inf
        cov = self.covers[b]
        c_low = cov.count_in(lo, v)
        c_high = cov.count_in(v, bounds[i])
        bounds.insert(i, v)
        with np.errstate(divide="ignore"):
            lc = np.log([c_low, c_high])
        logc = self._logc[b]
        self._logc[b] = np.concatenate((logc[:i], lc, logc[i + 1 :]))
        L = self._L[b]
        self._L[b] = np.concatenate((L[: i + 1], L[i:]))
        return i

    def predict(self, value: float, coord: int = 0) -> float:
        b = coord if self.hclass.n_blocks > 1 else 0
        i = self._split(b, value)
        eta = self._eta(self.t + 1)
        logits = self._logc[b] - eta * self._L[b]
        w = np.exp(logits - logits.max())
        W1 = w[: i + 1].sum()
        W0 = w[i + 1 :].sum()
        self._pending = (b, i)
        return float(self._combine(W0, W1))

    def update(self, y: int) -> None:
        b, i = self._pending
        L = self._L[b]
        L[: i + 1] += self.lt[1, int(y)]
        L[i + 1 :] += self.lt[0, int(y)]
        self.t += 1

    def run(self, values, coords, ys) -> np.ndarray:
        """Predictions for fixed labels using the final cell partition."""
        values = np.asarray(values, dtype=float)
        coords = np.asarray(coords, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        T = len(values)
        out = np.empty(T)
        tt = np.arange(1, T + 1)
        for b, cov in enumerate(self.covers):
            sel = np.flatnonzero(coords == b) if self.hclass.n_blocks > 1 else np.arange(T)
            if len(sel) == 0:
                continue
            u = np.unique(values[sel])
            upper = np.concatenate((u[u < 1.0], [1.0]))
            lower = np.concatenate(([-math.inf], upper[:-1]))
            counts = np.array([cov.count_in(lo, hi) for lo, hi in zip(lower.tolist(), upper.tolist())], dtype=float)
            with np.errstate(divide="ignore"):
                logc = np.log(counts)
            if self.eta_fixed is not None:
                out[sel] = self._run_fixed_rate(upper, logc, values[sel], ys[sel])
                continue
            carry = np.zeros(len(upper))
            step = max(1, _CHUNK // len(upper))
            for c0 in range(0, len(sel), step):
                rows = sel[c0 : c0 + step]
                H = (upper[None, :] <= values[rows][:, None]).astype(np.int8)
                losses = self.lt[H, ys[rows][:, None]]
                cum = np.cumsum(losses, axis=0) + carry
                before = cum - losses
                carry = cum[-1]
                eta = np.asarray(self._eta(tt[rows]), dtype=float)[:, None]
                logits = logc[None, :] - eta * before
                w = np.exp(logits - logits.max(axis=1, keepdims=True))
                W1 = (w * H).sum(axis=1)
                W0 = w.sum(axis=1) - W1
                out[rows] = self._combine(W0, W1)
        self.t = T
        return out


    def _run_fixed_rate(self, upper, logc, values, ys) -> np.ndarray:
        """Fixed-rate mixture in O(T sqrt(n)) for n cells.

        With a constant rate every round multiplies the weights of the cells
        predicting 1 (a prefix in sorted order) by one factor and the rest by
        another; the common part cancels in the prediction, so only a prefix
        multiply and a prefix sum are needed. Cells are grouped in blocks
        carrying lazy multipliers.
        """
        n = len(upper)
        B = max(1, int(math.isqrt(n)))
        nb = -(-n // B)
        w = np.zeros(nb * B)
        w[:n] = np.exp(logc - logc[np.isfinite(logc)].max())
        w = w.reshape(nb, B)
        bsum = w.sum(axis=1)
        bmul = np.ones(nb)
        eta = self.eta_fixed
        factor = np.exp(-eta * (self.lt[1] - self.lt[0]))
        k_all = np.searchsorted(upper, values, side="right")
        out = np.empty(len(values))
        for t, (k, y) in enumerate(zip(k_all.tolist(), ys.tolist())):
            q, r = divmod(k, B)
            scaled = bsum * bmul
            total = scaled.sum()
            W1 = scaled[:q].sum()
            if r:
                W1 += bmul[q] * w[q, :r].sum()
            W0 = max(total - W1, 0.0)
            out[t] = self._combine(W0, W1)
            f = factor[y]
            if q:
                bmul[:q] *= f
            if r:
                w[q, :r] *= f
                bsum[q] = w[q].sum()
                if bsum[q] > 0 and not 1e-100 < bsum[q] < 1e100:
                    w[q] /= bsum[q]
                    bmul[q] *= bsum[q]
                    bsum[q] = 1.0
            new_total = total - W1 + f * W1
            if not 1e-150 < new_total < 1e150:
                bmul /= new_total
        return out


class TableMixture(_MixtureBase):
    """Mixture over all rows of a finite table."""

    def __init__(self, hclass: FiniteTable, mode: str, loss: LossKind):
        self.hclass = hclass
        super().__init__(mode, loss, math.log(len(hclass.rows)))
        self._L = np.zeros(len(hclass.rows))
        self._pending = None

    def predict(self, value: float, coord: int = 0) -> float:
        H = self.hclass.rows[:, int(value)]
        logits = -self._eta(self.t + 1) * self._L
        w = np.exp(logits - logits.max())
        W1 = w[H == 1].sum()
        W0 = w[H == 0].sum()
        self._pending = H
        return float(self._combine(W0, W1))

    def update(self, y: int) -> None:
        self._L += self.lt[self._pending, int(y)]
        self.t += 1


def make_mixture(hclass: HypothesisClass, mode: str, loss: LossKind, covers: Optional[Sequence] = None):
    if isinstance(hclass, FiniteTable):
        return TableMixture(hclass, mode, loss)
    if covers is None:
        raise ValueError("threshold mixtures need a cover per block")
    return ThresholdCoverMixture(hclass, covers, mode, loss)
