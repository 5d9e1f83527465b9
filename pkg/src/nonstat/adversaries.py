"""Label strategies and hard instances for the lower bounds.

A strategy plays one trial. Strategies that own the instance stream
(``owns_path``) also emit the points; ``adaptive`` strategies need the
learner's prediction before choosing the label, the others can hand over
whole label sequences so learners may run in batch mode.
"""

from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hypotheses import FiniteTable, HypothesisClass, min_cumulative_loss
from .learners.epochs import loss_table
from .losses import LossKind, eval_loss
from .processes import STREAM_LABELS, STREAM_PATH, ProductTypeK, UniformFinite, make_rng

# Orientation: the child followed after label 0 (majority of zeros, or a
# prediction >= 1/2 in the log-loss game) is the "left" child.
LEFT_LABEL = 0
MAX_TREE_DEPTH = 52


@dataclass
class LittlestoneTree:
    """Complete binary tree in heap order: node n has children 2n (after
    label 0) and 2n + 1 (after label 1); the root is node 1."""

    depth: int
    values: np.ndarray  # values[n] for n = 1 .. 2^depth - 1; values[0] unused

    def value(self, node: int) -> float:
        return float(self.values[node])

    def child(self, node: int, label: int) -> int:
        if self.is_leaf(node):
            raise ValueError("leaf nodes have no children")
        return 2 * node + (0 if label == LEFT_LABEL else 1)

    def is_leaf(self, node: int) -> bool:
        return node >= 2 ** (self.depth - 1)

    def node_depth(self, node: int) -> int:
        return node.bit_length() - 1

    def paths(self):
        """Every root-to-leaf path as a list of (node, label) pairs; the
        leaf's label is free, so each leaf yields two paths."""
        for labels in itertools.product((0, 1), repeat=self.depth):
            node, path = 1, []
            for k, y in enumerate(labels):
                path.append((node, y))
                if k + 1 < self.depth:
                    node = self.child(node, y)
            yield path


def build_threshold_littlestone_tree(depth: int) -> LittlestoneTree:
    """Binary-search tree of midpoints: after label 0 at v the thresholds
    left are above v, so the child carries the upper midpoint."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if depth > MAX_TREE_DEPTH:
        raise ValueError(f"depth {depth} exceeds float resolution ({MAX_TREE_DEPTH})")
    n = 2**depth
    values = np.zeros(n)
    lo = np.zeros(n)
    hi = np.ones(n)
    for node in range(1, n):
        v = (lo[node] + hi[node]) / 2
        values[node] = v
        if 2 * node < n:
            lo[2 * node], hi[2 * node] = v, hi[node]
            lo[2 * node + 1], hi[2 * node + 1] = lo[node], v
    return LittlestoneTree(depth, values)


def path_is_threshold_realizable(tree: LittlestoneTree, path, grid: Optional[np.ndarray] = None) -> bool:
    """Some h_a(x) = 1{x >= a} gives every node on the path its label.

    With ``grid`` the check scans those thresholds; otherwise it intersects
    the constraints a <= v (label 1) and a > v (label 0) exactly.
    """
    if grid is not None:
        ok = np.ones(len(grid), dtype=bool)
        for node, y in path:
            ok &= (tree.value(node) >= grid) == bool(y)
        return bool(ok.any())
    lo, hi = -math.inf, 1.0
    for node, y in path:
        v = tree.value(node)
        if y == 1:
            hi = min(hi, v)
        else:
            lo = max(lo, v)
    return lo < hi


@dataclass
class LittlestoneForest:
    trees: list[LittlestoneTree]
    pointers: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.pointers:
            self.pointers = [1] * len(self.trees)

    @classmethod
    def thresholds(cls, depth: int, d: int) -> "LittlestoneForest":
        tree = build_threshold_littlestone_tree(depth)
        return cls([tree] * d)

    def atoms(self) -> list[tuple[float, int]]:
        """Current (V(I_b), b) pairs with 1-based b."""
        return [(t.value(p), b + 1) for b, (t, p) in enumerate(zip(self.trees, self.pointers))]

    def move(self, b: int, label: int) -> None:
        self.pointers[b] = self.trees[b].child(self.pointers[b], label)


# Strategies ------------------------------------------------------------------


class LabelStrategy:
    """Base protocol.

    ``prepare(T, path)`` is called once per trial. Non-adaptive strategies
    expose ``labels()``; adaptive ones answer ``label(t, prediction)`` for
    t = 0..T-1 after ``instance(t)``.
    """

    name = "strategy"
    owns_path = False
    adaptive = False
    is_exhaustive = False

    def prepare(self, T: int, path=None) -> None:
        self.T = T
        self.path = path

    def instance(self, t: int) -> tuple[float, int]:
        return float(self.path.values[t]), int(self.path.coords[t])

    def labels(self) -> np.ndarray:
        raise NotImplementedError

    def label(self, t: int, prediction: float) -> int:
        return int(self._labels[t])

    def instances(self) -> tuple[np.ndarray, np.ndarray]:
        return self.path.values, self.path.coords


class UniformRandom(LabelStrategy):
    """Independent fair coin labels."""

    name = "random"

    def __init__(self, seed: int):
        self.seed = seed

    def prepare(self, T, path=None):
        super().prepare(T, path)
        self._labels = make_rng(self.seed, STREAM_LABELS).integers(0, 2, T)

    def labels(self):
        return self._labels


class RealizableLabels(LabelStrategy):
    """Labels given by one fixed hypothesis of the class."""

    name = "realizable"

    def __init__(self, hclass: HypothesisClass, param):
        self.hclass = hclass
        self.param = param

    def prepare(self, T, path=None):
        super().prepare(T, path)
        self._labels = self.hclass.evaluate_many(self.param, path.values, path.coords).astype(np.int64)

    def labels(self):
        return self._labels


class Exhaustive(LabelStrategy):
    """Marker for the exact inner supremum (T <= 20)."""

    name = "exhaustive"
    is_exhaustive = True


class _PathOwner(LabelStrategy):
    owns_path = True

    def instance(self, t):
        return float(self._values[t]), int(self._coords[t])

    def instances(self):
        return self._values, self._coords


class ForestMajority(_PathOwner):
    """Forest lower bound: K epochs, uniform labels, pointers follow each
    epoch's label majority (ties to the label-0 child)."""

    name = "forest"

    def __init__(self, K: int, d: int, seed: int):
        self.K, self.d, self.seed = K, d, seed

    def prepare(self, T, path=None):
        self.T = T
        spec, values, coords, ys, trail = _forest_game(self.K, self.d, T, self.seed)
        self.spec = spec
        self._values, self._coords, self._labels = values, coords, ys
        self.pointer_trail = trail

    def labels(self):
        return self._labels


def check_forest_constraint(K: int, d: int, T: int) -> None:
    if 8 * K * d * math.log(2 * K * d) > T:
        raise ValueError(f"need 8Kd ln(2Kd) <= T, got K={K}, d={d}, T={T}")


def epoch_lengths(T: int, K: int) -> list[int]:
    """K epochs of length T // K, the remainder going to the last one."""
    base = T // K
    return [base] * (K - 1) + [T - base * (K - 1)]


def _forest_game(K: int, d: int, T: int, seed: int):
    check_forest_constraint(K, d, T)
    forest = LittlestoneForest.thresholds(K, d)
    lengths = epoch_lengths(T, K)
    rng = make_rng(seed, STREAM_PATH)
    ys = make_rng(seed, STREAM_LABELS).integers(0, 2, T)
    values = np.empty(T)
    coords = np.empty(T, dtype=np.int64)
    marginals = []
    assignment = []
    trail = [list(forest.pointers)]
    t0 = 0
    for k, n in enumerate(lengths):
        atoms = forest.atoms()
        marginals.append(UniformFinite(atoms))
        assignment.extend([k + 1] * n)
        # Same draw as UniformFinite.sample so the spec replays this path.
        idx = rng.integers(0, d, n)
        values[t0 : t0 + n] = np.array([a[0] for a in atoms])[idx]
        coords[t0 : t0 + n] = idx
        if k + 1 < K:
            y = ys[t0 : t0 + n]
            for b in range(d):
                sel = y[idx == b]
                ones = int(sel.sum())
                zeros = len(sel) - ones
                forest.move(b, 0 if zeros >= ones else 1)
            trail.append(list(forest.pointers))
        t0 += n
    spec = ProductTypeK(marginals, assignment, T, seed)
    return spec, values, coords, ys, trail


def forest_lower_bound_process(K: int, d: int, T: int, seed: int) -> tuple[ProductTypeK, ForestMajority]:
    """The forest process (one marginal per epoch) and its label strategy."""
    strategy = ForestMajority(K, d, seed)
    strategy.prepare(T)
    return strategy.spec, strategy


class ForestPrediction(_PathOwner):
    """Log-loss forest game.

    Epoch k draws from the uniform law on the current atoms until every atom
    has appeared. On the first appearance of atom b the label is 0 when the
    prediction is >= 1/2 and 1 otherwise, later appearances repeat it, and
    at the end of the epoch pointer b moves to the child of that label. After
    the K-th epoch the last law keeps generating points with the same labels.
    """

    name = "forest-log"
    adaptive = True

    def __init__(self, K: int, d: int, seed: int):
        self.K, self.d, self.seed = K, d, seed

    def prepare(self, T, path=None):
        check_logloss_constraint(self.K, self.d, T)
        self.T = T
        self.forest = LittlestoneForest.thresholds(self.K, self.d)
        self._idx = make_rng(self.seed, STREAM_PATH).integers(0, self.d, T)
        self._values = np.empty(T)
        self._coords = self._idx.astype(np.int64)
        self._labels = np.zeros(T, dtype=np.int64)
        self.epoch = 0
        self.epoch_ends: list[int] = []
        self._epoch_labels: dict[int, int] = {}
        self.marginal_ids = np.zeros(T, dtype=np.int64)

    def instance(self, t):
        b = int(self._idx[t])
        self._values[t] = self.forest.trees[b].value(self.forest.pointers[b])
        self.marginal_ids[t] = self.epoch + 1
        return float(self._values[t]), b

    def label(self, t, prediction):
        b = int(self._idx[t])
        if b not in self._epoch_labels:
            self._epoch_labels[b] = 0 if prediction >= 0.5 else 1
        y = self._epoch_labels[b]
        self._labels[t] = y
        if len(self._epoch_labels) == self.d and self.epoch + 1 < self.K:
            for bb, yy in self._epoch_labels.items():
                self.forest.move(bb, yy)
            self._epoch_labels = {}
            self.epoch += 1
            self.epoch_ends.append(t + 1)
        return y

    def labels(self):
        return self._labels


def check_logloss_constraint(K: int, d: int, T: int) -> None:
    if 8 * K * d * (1.0 + math.log(d)) > T:
        raise ValueError(f"need 8Kd(1 + ln d) <= T, got K={K}, d={d}, T={T}")


def logloss_lower_bound_process(K: int, d: int, T: int, seed: int = 0) -> ForestPrediction:
    """The interactive coupon-collector game; the strategy emits the points
    too, since each law depends on the learner's earlier predictions."""
    strategy = ForestPrediction(K, d, seed)
    strategy.prepare(T)
    return strategy


# Anti-epoch family -----------------------------------------------------------

X1, X2 = "x1", "x2"


def anti_epoch_class() -> FiniteTable:
    """h1, h2 agree on x1 (both 1) and differ on x2 (0 vs 1)."""
    return FiniteTable([X1, X2], [[1, 0], [1, 1]])


def _majority_side(lengths: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Random labels per epoch, then epochs whose majority disagrees with
    the heavier side get that side's constant label."""
    T = int(sum(lengths))
    ys = rng.integers(0, 2, T)
    weight = [0.0, 0.0]
    majority = []
    t0 = 0
    for n in lengths:
        ones = int(ys[t0 : t0 + n].sum())
        side = 1 if 2 * ones > n else 0
        majority.append(side)
        weight[side] += math.sqrt(n)
        t0 += n
    side = 1 if weight[1] > weight[0] else 0
    t0 = 0
    for n, m in zip(lengths, majority):
        if m != side:
            ys[t0 : t0 + n] = side
        t0 += n
    return ys


class AntiEpoch(_PathOwner):
    """Two-case strategy against a learner with predefined epochs.

    With M = T^(2/3): if some epoch is longer than M, x1 is shown before the
    longest epoch and x2 from its start on, labelled against the learner's
    first prediction on x2 (the learner holds one expert there). Otherwise
    only x2 is shown, each epoch gets random labels and the epochs whose
    majority disagrees with the side of larger total sqrt(length) are
    relabelled with that side's constant.
    """

    name = "anti-epoch"

    def __init__(self, lengths: Sequence[int], seed: int):
        self.lengths = [int(n) for n in lengths]
        self.seed = seed

    def prepare(self, T, path=None):
        if sum(self.lengths) < T:
            raise ValueError("epoch lengths do not cover the horizon")
        self.T = T
        lengths = _clip_lengths(self.lengths, T)
        M = T ** (2.0 / 3.0)
        self.long_case = max(lengths) > M
        self._coords = np.zeros(T, dtype=np.int64)
        if self.long_case:
            k = int(np.argmax(lengths))
            self.switch = int(sum(lengths[:k]))
            self._values = np.where(np.arange(T) < self.switch, 0.0, 1.0)
            self._labels = np.ones(T, dtype=np.int64)
            self.adaptive = True
            # The only round whose label depends on the learner.
            self.decisive_round = self.switch
        else:
            self.switch = 0
            self._values = np.ones(T)
            self._labels = _majority_side(lengths, make_rng(self.seed, STREAM_LABELS))
            self.adaptive = False
            self.decisive_round = None

    def label(self, t, prediction):
        if self.long_case and t == self.switch:
            self._labels[t:] = 1 if prediction < 0.5 else 0
        return int(self._labels[t])

    def labels(self):
        return self._labels


def _clip_lengths(lengths: Sequence[int], T: int) -> list[int]:
    out, total = [], 0
    for n in lengths:
        if total >= T:
            break
        out.append(min(n, T - total))
        total += out[-1]
    return out


def anti_epoch_labels(lengths: Sequence[int], predictor_trace: Sequence[float], seed: int = 0) -> np.ndarray:
    """Offline form of ``AntiEpoch``: labels for a recorded prediction trace."""
    T = len(predictor_trace)
    strat = AntiEpoch(lengths, seed)
    strat.prepare(T)
    for t in range(T):
        strat.label(t, float(predictor_trace[t]))
    return strat.labels().copy()


# Exact inner supremum --------------------------------------------------------

MAX_EXHAUSTIVE_T = 20


def exhaustive_worst_labels(
    predictor,
    hclass: HypothesisClass,
    values,
    coords,
    loss: LossKind,
) -> tuple[np.ndarray, float]:
    """Worst label sequence for a deterministic online predictor.

    Depth-first over label prefixes, copying the predictor state at each
    branch. Returns the first sequence (in lexicographic order) achieving
    the maximal regret.
    """
    values = np.asarray(values, dtype=float)
    coords = np.asarray(coords, dtype=np.int64)
    T = len(values)
    if T > MAX_EXHAUSTIVE_T:
        raise ValueError(f"exhaustive search needs T <= {MAX_EXHAUSTIVE_T}, got {T}")
    lt = loss_table(loss)
    best = [-math.inf, None]
    ys = np.zeros(T, dtype=np.int64)

    def visit(t: int, pred, acc: float) -> None:
        if t == T:
            regret = acc - min_cumulative_loss(hclass, values, coords, ys, lt)
            if regret > best[0] + 1e-12:
                best[0], best[1] = regret, ys.copy()
            return
        p = float(pred.predict(values[t], int(coords[t])))
        for y in (0, 1):
            nxt = copy.deepcopy(pred) if y == 0 else pred
            nxt.update(y)
            ys[t] = y
            visit(t + 1, nxt, acc + float(eval_loss(loss, p, y)))

    visit(0, predictor, 0.0)
    return best[1], float(best[0])


STRATEGIES = ("random", "forest", "forest-log", "anti-epoch", "exhaustive")
