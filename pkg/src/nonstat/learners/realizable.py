"""Realizable predictors: ERM follower and the one-inclusion graph predictor."""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from ..hypotheses import HypothesisClass, ProductThresholds, Thresholds1D


class NotRealizable(ValueError):
    """Labels are not consistent with any member of the class."""


def _is_threshold_family(hclass: HypothesisClass) -> bool:
    return isinstance(hclass, (Thresholds1D, ProductThresholds))


class ERMFollower:
    """Predicts with the ERM of the history, ties to the canonical order.

    For thresholds the ERM on a realizable history is the smallest positive
    point seen so far (1.0 before any positive), so the prediction is kept
    incrementally; as soon as the history stops being realizable the
    learner falls back to exact ERM recomputation.
    """

    name = "erm"

    def __init__(self, hclass: HypothesisClass):
        self.hclass = hclass
        self._vals: list[float] = []
        self._coords: list[int] = []
        self._ys: list[int] = []
        self._fast = _is_threshold_family(hclass)
        nb = hclass.n_blocks
        self._minpos = [1.0] * nb
        self._maxneg = [-math.inf] * nb
        self._realizable = True
        self._pending = None
        self.epochs = 1
        self.restarts = 0

    def _block(self, coord: int) -> int:
        return coord if self.hclass.n_blocks > 1 else 0

    def predict(self, value: float, coord: int = 0) -> float:
        self._pending = (value, coord)
        if self._fast and self._realizable:
            return float(value >= self._minpos[self._block(coord)])
        param, _ = self.hclass.min_mistakes(
            np.array(self._vals), np.array(self._coords, dtype=np.int64), np.array(self._ys, dtype=np.int64)
        )
        return float(self.hclass.evaluate_encoded(param, value, coord))

    def update(self, y: int) -> None:
        value, coord = self._pending
        self._vals.append(float(value))
        self._coords.append(int(coord))
        self._ys.append(int(y))
        if self._fast:
            b = self._block(coord)
            if y == 1:
                self._minpos[b] = min(self._minpos[b], value)
            else:
                self._maxneg[b] = max(self._maxneg[b], value)
            # 1.0 is positive under every threshold.
            if self._maxneg[b] >= self._minpos[b] or self._maxneg[b] >= 1.0:
                self._realizable = False


    def run(self, values, coords, ys) -> np.ndarray:
        """Predictions for a fixed label sequence (fresh learner only)."""
        return _run_realizable(self, values, coords, ys, _erm_block)


def _erm_block(v: np.ndarray, y: np.ndarray) -> np.ndarray:
    pos = np.where(y == 1, v, np.inf)
    before = np.concatenate(([1.0], np.minimum.accumulate(np.minimum(pos, 1.0))[:-1]))
    return (v >= before).astype(float)


def _oneinc_block(v: np.ndarray, y: np.ndarray) -> np.ndarray:
    neg = np.where(y == 0, v, -np.inf)
    before = np.concatenate(([-np.inf], np.maximum.accumulate(neg)[:-1]))
    return (v > before).astype(float)


def _block_realizable(v: np.ndarray, y: np.ndarray) -> bool:
    maxneg = v[y == 0].max(initial=-math.inf)
    return maxneg < v[y == 1].min(initial=math.inf) and maxneg < 1.0


def _run_realizable(learner, values, coords, ys, block_fn) -> np.ndarray:
    if learner._vals:
        raise RuntimeError("run() needs a fresh learner")
    values = np.asarray(values, dtype=float)
    coords = np.asarray(coords, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    nb = learner.hclass.n_blocks
    sels = [np.flatnonzero(coords == b) if nb > 1 else np.arange(len(values)) for b in range(nb)]
    if learner._fast and all(_block_realizable(values[s], ys[s]) for s in sels):
        out = np.empty(len(values))
        for s in sels:
            out[s] = block_fn(values[s], ys[s])
        return out
    out = np.empty(len(values))
    for t, (v, c, y) in enumerate(zip(values.tolist(), coords.tolist(), ys.tolist())):
        out[t] = learner.predict(v, c)
        learner.update(y)
    return out


def erm_follower_mistakes(values: np.ndarray, coords: np.ndarray, ys: np.ndarray, n_blocks: int = 1) -> int:
    """Mistakes of the ERM follower on a realizable threshold stream.

    A round is a mistake exactly when it is positive and lies strictly
    below every earlier positive of its block (and below 1).
    """
    values = np.asarray(values, dtype=float)
    coords = np.asarray(coords)
    ys = np.asarray(ys)
    total = 0
    for b in range(n_blocks):
        sel = coords == b if n_blocks > 1 else slice(None)
        v, y = values[sel], ys[sel]
        pos = np.where(y == 1, v, np.inf)
        before = np.concatenate(([1.0], np.minimum.accumulate(np.minimum(pos, 1.0))[:-1]))
        total += int(((y == 1) & (v < before)).sum())
    return total


def one_inclusion_predict(hclass: HypothesisClass, values, coords, ys_prev) -> int:
    """One-inclusion graph prediction at the last point of ``values``.

    The graph has the dichotomies of the full sample as vertices and an edge
    between dichotomies that differ in one point. Points are sorted
    canonically first, edges start oriented from the lexicographically
    smaller to the larger endpoint, and paths are reversed from a vertex of
    maximal out-degree to one of out-degree below vc until the maximal
    out-degree is at most vc. The prediction is the label given to the last
    point by the consistent dichotomy, or by the head of the edge joining
    the two consistent dichotomies.
    """
    values = np.asarray(values, dtype=float)
    coords = np.asarray(coords, dtype=np.int64)
    ys_prev = [int(y) for y in ys_prev]
    t = len(values)
    if len(ys_prev) != t - 1:
        raise ValueError("need labels for all but the last point")
    order = np.lexsort((np.arange(t), values, coords))
    pos_new = int(np.flatnonzero(order == t - 1)[0])
    verts = [bits for bits, _ in hclass.project_encoded(values[order], coords[order])]
    index = {v: k for k, v in enumerate(verts)}
    out_adj = _orient(verts, index, hclass.vc)
    rank = np.empty(t, dtype=np.int64)
    rank[order] = np.arange(t)
    known = [(int(rank[i]), ys_prev[i]) for i in range(t - 1)]
    consistent = [k for k, v in enumerate(verts) if all(v[p] == y for p, y in known)]
    if not consistent:
        raise NotRealizable("labels are not realizable by the class")
    if len(consistent) == 1:
        return int(verts[consistent[0]][pos_new])
    a, b = consistent
    head = b if b in out_adj[a] else a
    return int(verts[head][pos_new])


def _orient(verts: list, index: dict, vc: int) -> list[set]:
    out_adj: list[set] = [set() for _ in verts]
    for k, v in enumerate(verts):
        for p in range(len(v)):
            if v[p] == 0:
                u = v[:p] + (1,) + v[p + 1 :]
                j = index.get(u)
                if j is not None:
                    # v < u lexicographically: orient v -> u.
                    out_adj[k].add(j)
    while True:
        deg = [len(s) for s in out_adj]
        src = int(np.argmax(deg))
        if deg[src] <= vc:
            return out_adj
        # Breadth-first search for a vertex with spare out-degree.
        parent = {src: None}
        queue = deque([src])
        target = None
        while queue:
            u = queue.popleft()
            if u != src and deg[u] < vc:
                target = u
                break
            for w in out_adj[u]:
                if w not in parent:
                    parent[w] = u
                    queue.append(w)
        if target is None:
            raise RuntimeError("no orientation with out-degree <= vc found")
        w = target
        while parent[w] is not None:
            u = parent[w]
            out_adj[u].discard(w)
            out_adj[w].add(u)
            w = u


class OneInclusion:
    """Online one-inclusion predictor.

    For thresholds and product thresholds the oriented graph is a path (a
    product of paths) whose lexicographic orientation already has
    out-degree at most vc, and every edge points to the dichotomy that
    labels the ambiguous point 1. The prediction is therefore the forced
    label when the history pins it down and 1 otherwise. Other classes use
    the explicit graph.
    """

    name = "oneinc"

    def __init__(self, hclass: HypothesisClass):
        self.hclass = hclass
        self._fast = _is_threshold_family(hclass)
        nb = hclass.n_blocks
        self._minpos = [math.inf] * nb
        self._maxneg = [-math.inf] * nb
        self._vals: list[float] = []
        self._coords: list[int] = []
        self._ys: list[int] = []
        self._pending = None
        self.epochs = 1
        self.restarts = 0

    def _block(self, coord: int) -> int:
        return coord if self.hclass.n_blocks > 1 else 0

    def predict(self, value: float, coord: int = 0) -> float:
        self._pending = (value, coord)
        if self._fast:
            b = self._block(coord)
            if self._maxneg[b] >= self._minpos[b]:
                raise NotRealizable("labels are not realizable by the class")
            return 0.0 if value <= self._maxneg[b] else 1.0
        vals = np.array(self._vals + [value])
        cds = np.array(self._coords + [coord], dtype=np.int64)
        return float(one_inclusion_predict(self.hclass, vals, cds, self._ys))

    def update(self, y: int) -> None:
        value, coord = self._pending
        self._vals.append(float(value))
        self._coords.append(int(coord))
        self._ys.append(int(y))
        if self._fast:
            b = self._block(coord)
            if y == 1:
                self._minpos[b] = min(self._minpos[b], value)
            else:
                self._maxneg[b] = max(self._maxneg[b], value)

    def run(self, values, coords, ys) -> np.ndarray:
        """Predictions for a fixed label sequence (fresh learner only)."""
        return _run_realizable(self, values, coords, ys, _oneinc_block)


def one_inclusion_errors(values, coords, ys, n_blocks: int = 1) -> np.ndarray:
    """Per-round 0/1 errors of the one-inclusion predictor on a realizable
    threshold stream: a round errs when it is negative and lies strictly
    above every earlier negative of its block."""
    values = np.asarray(values, dtype=float)
    coords = np.asarray(coords)
    ys = np.asarray(ys)
    err = np.zeros(len(values), dtype=np.int8)
    for b in range(n_blocks):
        sel = np.flatnonzero(coords == b) if n_blocks > 1 else np.arange(len(values))
        v, y = values[sel], ys[sel]
        neg = np.where(y == 0, v, -np.inf)
        before = np.concatenate(([-np.inf], np.maximum.accumulate(neg)[:-1]))
        err[sel] = (y == 0) & (v > before)
    return err
