"""Epoch-based EWA over representatives of a hypothesis class.

Two ways to run the same learners:

* online, one ``predict`` / ``update`` pair per round, for label strategies
  that react to the predictions;
* batch, via ``run(values, coords, ys)``, when the labels are fixed in
  advance. The epoch boundaries depend on the instances alone, so they are
  found first and each epoch's EWA is then evaluated with array operations.

Both paths produce the same predictions (checked in the tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..hypotheses import HypothesisClass, RepresentativeSet, auto_threshold, make_tracker
from ..losses import LossKind, eval_loss
from .ewa import CUMULATIVE, MULTIPLICATIVE, cumulative_weights, learning_rate

_CHUNK = 1 << 20


def loss_table(loss: LossKind) -> np.ndarray:
    """loss_table[h, y] = loss of a 0/1 expert output h on label y."""
    return np.array([[eval_loss(loss, float(h), y) for y in (0, 1)] for h in (0, 1)])


@dataclass
class EpochState:
    """Algorithm state exposed for inspection."""

    s: int
    t_s: int
    representatives: RepresentativeSet
    r: int
    E: int
    N: float
    trace: list = field(default_factory=list)


class _EpochEWA:
    """Shared EWA machinery: per-factor losses, rate from the joint size."""

    name = "epoch-ewa"

    def __init__(self, hclass: HypothesisClass, loss: LossKind, weighting: str = CUMULATIVE):
        if weighting not in (CUMULATIVE, MULTIPLICATIVE):
            raise ValueError(f"unknown weighting {weighting!r}")
        self.hclass = hclass
        self.loss = loss
        self.weighting = weighting
        self.lt = loss_table(loss)
        self._vals: list[float] = []
        self._coords: list[int] = []
        self._ys: list[int] = []
        self.epochs = 0
        self.restarts = 0
        self.starts: list[int] = []
        self._pending = None

    # epoch bookkeeping

    def _history(self, upto: int) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self._vals[:upto], dtype=float), np.array(self._coords[:upto], dtype=np.int64)

    def _begin_epoch(self, reps: RepresentativeSet, t_s: int) -> None:
        self.reps = reps
        self.m = reps.size
        self.L = [np.zeros(len(f)) for f in reps.factors]
        self.logw = [np.zeros(len(f)) for f in reps.factors]
        self.r = 0
        self.t_s = t_s
        self.epochs += 1
        self.starts.append(t_s)

    def _weights(self, f: int) -> np.ndarray:
        if self.weighting == CUMULATIVE:
            return cumulative_weights(self.L[f], learning_rate(self.m, self.r + 1))
        lw = self.logw[f]
        w = np.exp(lw - lw.max())
        return w / w.sum()

    def _train(self, f: int, H: np.ndarray, y: int) -> None:
        losses = self.lt[H, y]
        if self.weighting == MULTIPLICATIVE:
            self.logw[f] = self.logw[f] - learning_rate(self.m, self.r + 1) * losses
        self.L[f] = self.L[f] + losses
        self.r += 1

    # online protocol

    def _before_predict(self) -> None:
        pass

    def predict(self, value: float, coord: int = 0) -> float:
        self._before_predict()
        f, H = self.reps.predict(value, coord)
        self._pending = (value, coord, f, H)
        w = self._weights(f)
        return float(np.dot(w, H) / w.sum())

    def update(self, y: int) -> None:
        value, coord, f, H = self._pending
        self._pending = None
        self._train(f, H, int(y))
        self._vals.append(float(value))
        self._coords.append(int(coord))
        self._ys.append(int(y))
        self._after_update(value, coord, int(y))

    def _after_update(self, value: float, coord: int, y: int) -> None:
        pass

    # batch protocol

    def _batch_epoch(self, reps, values, coords, ys, start, end, first_pred, out) -> None:
        """EWA over ``reps`` trained on rounds start..end (inclusive).

        Writes predictions for rounds first_pred..end into ``out``.
        """
        m = reps.size
        idx = np.arange(start, end + 1)
        r = (idx - start + 1).astype(float)
        eta = np.sqrt(8.0 * math.log(m) / r)
        for f, factor in enumerate(reps.factors):
            sel = idx if len(reps.factors) == 1 else idx[coords[idx] == f]
            if len(sel) == 0:
                continue
            eta_sel = eta[sel - start]
            carry = np.zeros(len(factor))
            step = max(1, _CHUNK // max(len(factor), 1))
            for c0 in range(0, len(sel), step):
                rows = sel[c0 : c0 + step]
                H = self.hclass.factor_outputs_many(factor, values[rows], coords[rows])
                losses = self.lt[H, ys[rows][:, None]]
                e = eta_sel[c0 : c0 + step][:, None]
                if self.weighting == CUMULATIVE:
                    cum = np.cumsum(losses, axis=0) + carry
                    before = cum - losses
                    carry = cum[-1]
                    z = before - before.min(axis=1, keepdims=True)
                    logits = -e * z
                else:
                    cum = np.cumsum(e * losses, axis=0) + carry
                    before = cum - e * losses
                    carry = cum[-1]
                    logits = -(before - before.min(axis=1, keepdims=True))
                W = np.exp(logits)
                W = W / W.sum(axis=1, keepdims=True)
                p = (W * H).sum(axis=1) / W.sum(axis=1)
                keep = rows >= first_pred
                out[rows[keep]] = p[keep]


class AdaptiveEpochEWA(_EpochEWA):
    """EWA restarted whenever the agreed-mismatch statistic exceeds N.

    After the statistic E exceeds N on round t, a new epoch starts with one
    representative per dichotomy of x_1..x_t, fresh weights and E = 0, and
    round t is replayed in it: its label trains the new weights and its point
    enters the new window. E in an epoch starting at t_s counts pairs that
    agree on x_1..x_{t_s - 1}.

    With ``autok_n`` set, the learner starts from K = 1 and doubles K (and
    recomputes N) whenever an epoch would push the count in the current run
    above ``autok_n * K``; this needs the horizon ``T``.
    """

    name = "aee"

    def __init__(
        self,
        hclass: HypothesisClass,
        N: Optional[float],
        loss: LossKind,
        *,
        T: Optional[int] = None,
        K: int = 1,
        autok_n: Optional[int] = None,
        weighting: str = CUMULATIVE,
    ):
        super().__init__(hclass, loss, weighting)
        self.T = T
        self.K = K
        self.autok_n = autok_n
        if N is None or autok_n is not None:
            if T is None:
                raise ValueError("automatic N needs the horizon T")
            N = auto_threshold(T, hclass.vc, self.K)
        if N <= 0:
            raise ValueError("N must be positive")
        self.N = float(N)
        self.run_epochs = 0
        self.tracker = make_tracker(hclass)
        self.E = 0
        empty_v, empty_c = np.empty(0), np.empty(0, dtype=np.int64)
        self._open_epoch(empty_v, empty_c, self._initial_reps(), 1)

    def _initial_reps(self) -> RepresentativeSet:
        p = self.hclass.default_param()
        factors = [np.array([x]) for x in p] if isinstance(p, tuple) else [np.array([p])]
        return RepresentativeSet(self.hclass, factors)

    def _open_epoch(self, prefix_v, prefix_c, reps, t_s) -> None:
        self._begin_epoch(reps, t_s)
        self.tracker.start(prefix_v, prefix_c, reps)
        self.E = 0
        if self.autok_n is not None:
            if self.run_epochs + 1 > self.autok_n * self.K and self.epochs > 1:
                self.K *= 2
                self.N = auto_threshold(self.T, self.hclass.vc, self.K)
                self.restarts += 1
                self.run_epochs = 0
        self.run_epochs += 1

    def _after_update(self, value, coord, y) -> None:
        self.E = self.tracker.push(value, coord)
        if self.E <= self.N:
            return
        t = len(self._vals)
        prefix_v, prefix_c = self._history(t - 1)
        full_v, full_c = self._history(t)
        reps = self.hclass.representatives(full_v, full_c)
        self._open_epoch(prefix_v, prefix_c, reps, t)
        # Replay round t inside the new epoch; no second close on a replay.
        f, H = self.reps.predict(value, coord)
        self._train(f, H, y)
        self.E = self.tracker.push(value, coord)

    @property
    def state(self) -> EpochState:
        return EpochState(self.epochs - 1, self.t_s, self.reps, self.r, self.E, self.N, list(self.starts))

    # batch

    def segment(self, values: np.ndarray, coords: np.ndarray) -> list[int]:
        """1-indexed epoch starts for a full instance sequence.

        Leaves the learner positioned as if every round had been played.
        """
        for v, c in zip(values.tolist(), coords.tolist()):
            self.observe_instance(v, c)
        return list(self.starts)

    def observe_instance(self, value: float, coord: int = 0) -> int:
        """Advance the epoch bookkeeping by one unlabelled round; returns E.

        Epoch boundaries depend on the instances alone, so this is how
        processes probe the statistic without running the forecaster.
        """
        self._vals.append(float(value))
        self._coords.append(int(coord))
        self.E = self.tracker.push(value, coord)
        if self.E > self.N:
            t = len(self._vals)
            prefix_v, prefix_c = self._history(t - 1)
            full_v, full_c = self._history(t)
            self._open_epoch(prefix_v, prefix_c, self.hclass.representatives(full_v, full_c), t)
            self.E = self.tracker.push(value, coord)
        return self.E

    def run(self, values: np.ndarray, coords: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Predictions for a fixed label sequence (fresh learner only)."""
        if self._vals:
            raise RuntimeError("run() needs a fresh learner")
        values = np.asarray(values, dtype=float)
        coords = np.asarray(coords, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        T = len(values)
        starts = self.segment(values, coords)
        self._ys = ys.tolist()
        out = np.empty(T)
        bounds = [s - 1 for s in starts] + [T - 1]
        for k, s0 in enumerate(bounds[:-1]):
            end = bounds[k + 1] if k + 1 < len(starts) else T - 1
            if k == 0:
                reps = self._initial_reps()
                first = 0
            else:
                reps = self.hclass.representatives(values[: s0 + 1], coords[: s0 + 1])
                first = s0 + 1
            self._batch_epoch(reps, values, coords, ys, s0, end, first, out)
        return out


class FixedEpochEWA(_EpochEWA):
    """EWA restarted at rounds 1, 2, 4, 8, ... over the past dichotomies."""

    name = "fixed-epoch"

    def __init__(self, hclass: HypothesisClass, loss: LossKind, weighting: str = CUMULATIVE):
        super().__init__(hclass, loss, weighting)
        self.E = 0

    @staticmethod
    def epoch_starts(T: int) -> list[int]:
        out, t = [], 1
        while t <= T:
            out.append(t)
            t *= 2
        return out

    def _before_predict(self) -> None:
        t = len(self._vals) + 1
        if t & (t - 1) == 0:
            v, c = self._history(t - 1)
            self._begin_epoch(self.hclass.representatives(v, c), t)

    def run(self, values, coords, ys) -> np.ndarray:
        if self._vals:
            raise RuntimeError("run() needs a fresh learner")
        values = np.asarray(values, dtype=float)
        coords = np.asarray(coords, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        T = len(values)
        out = np.empty(T)
        for t in self.epoch_starts(T):
            s0 = t - 1
            end = min(2 * t - 1, T) - 1
            reps = self.hclass.representatives(values[:s0], coords[:s0])
            self._begin_epoch(reps, t)
            self._batch_epoch(reps, values, coords, ys, s0, end, s0, out)
        self._vals, self._coords, self._ys = values.tolist(), coords.tolist(), ys.tolist()
        return out


def adaptive_epoch_ewa_autok(hclass, loss, T, n: int = 8, **kw) -> AdaptiveEpochEWA:
    """Adaptive epoch-EWA that learns K by doubling."""
    return AdaptiveEpochEWA(hclass, None, loss, T=T, K=1, autok_n=n, **kw)
