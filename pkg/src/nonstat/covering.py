"""Stochastic sequential covers and the realization tree for thresholds.

A cover is a set of sequential functions g(x^t) -> {0, 1}. It covers a path
x^T when every dichotomy of the class on x^T is reproduced exactly by some
member on all T steps. Three constructions are provided:

* ``EpsilonCover``: thresholds at quantiles of a reference measure;
* ``FlipSetCover``: a realizable predictor run on its own outputs, with the
  outputs flipped on a set of at most B rounds;
* ``TreeCover``: thresholds indexed by a set W of size 2^E that is halved at
  every split of the realization tree.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .hypotheses import Hypothesis, HypothesisClass, ProductThresholds, Thresholds1D
from .learners.realizable import ERMFollower, NotRealizable, OneInclusion
from .processes import (
    Marginal,
    UniformInterval,
    derive_seed,
    sample_path,
    with_seed,
)

# Epsilon covers --------------------------------------------------------------


class EpsilonCover:
    """Threshold members at the upper quantiles Q(j eps), j = 0..floor(1/eps).

    Q(q) = inf{x : mu([0, x]) > q}, capped at 1. Members are stored lazily
    for uniform references, so tiny eps costs nothing.
    """

    def __init__(self, epsilon: float, reference: Marginal, members: Optional[np.ndarray] = None, grid=None):
        self.epsilon = float(epsilon)
        self.reference = reference
        self._members = members
        self._grid = grid  # (lo, step, n_arith, top_is_one)

    @property
    def size(self) -> int:
        if self._grid is not None:
            _, _, n, top = self._grid
            return n + int(top)
        return len(self._members)

    def _arith_upto(self, x: float) -> int:
        """Number of arithmetic members <= x."""
        lo, step, n, _ = self._grid
        if x < lo:
            return 0
        k = min(int(math.floor((x - lo) / step)), n - 1)
        while k + 1 < n and lo + (k + 1) * step <= x:
            k += 1
        while k >= 0 and lo + k * step > x:
            k -= 1
        return k + 1

    def count_upto(self, x: float) -> int:
        if self._grid is None:
            return int(np.searchsorted(self._members, x, side="right"))
        top = int(self._grid[3] and x >= 1.0)
        return self._arith_upto(x) + top

    def count_in(self, lo: float, hi: float) -> int:
        """Number of members a with lo < a <= hi."""
        if hi <= lo:
            return 0
        return self.count_upto(hi) - self.count_upto(lo)

    @property
    def members(self) -> np.ndarray:
        if self._grid is None:
            return self._members
        if self.size > 10**7:
            raise MemoryError(f"cover has {self.size} members; use count_in")
        lo, step, n, top = self._grid
        arith = lo + np.arange(n) * step
        return np.concatenate((arith, [1.0])) if top else arith

    def hypotheses(self, hclass: HypothesisClass) -> list[Hypothesis]:
        return [hclass.hypothesis(float(a)) for a in self.members]


def epsilon_cover_thresholds(reference: Marginal, epsilon: float) -> EpsilonCover:
    """Quantile cover of the thresholds with respect to ``reference``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    J = math.floor(1.0 / epsilon)
    if isinstance(reference, UniformInterval):
        step = epsilon * (reference.hi - reference.lo)
        # Level J * eps reaches 1 exactly when 1/eps is an integer.
        top = J * epsilon >= 1.0
        n = J if top else J + 1
        return EpsilonCover(epsilon, reference, grid=(reference.lo, step, n, top))
    xs, w = reference.atoms()
    cum = np.cumsum(w)
    prev = np.concatenate(([0.0], cum[:-1]))
    # Atom k is a member when some level j*eps (j <= J) lies in [prev_k, cum_k).
    j_first = np.ceil(prev / epsilon)
    hit = (j_first <= J) & (j_first * epsilon < cum)
    members = xs[hit]
    # Levels at or beyond the total mass have Q = +inf, capped at 1.
    if J * epsilon >= cum[-1] * (1.0 - 1e-12):
        members = np.concatenate((members, [1.0]))
    members = np.unique(np.minimum(members, 1.0))
    return EpsilonCover(epsilon, reference, members=members)


def _mass_closed_open(reference: Marginal, a: float, b: float) -> float:
    """reference([a, b)) on the value axis."""
    if b <= a:
        return 0.0
    if isinstance(reference, UniformInterval):
        lo, hi = reference.lo, reference.hi
        return max(0.0, min(b, hi) - max(a, lo)) / (hi - lo)
    xs, w = reference.atoms()
    return float(w[(xs >= a) & (xs < b)].sum())


def covering_distance(cover: EpsilonCover, thresholds: np.ndarray) -> float:
    """max over the given thresholds a of min over members f of the
    reference mass where h_a and h_f disagree."""
    members = cover.members
    worst = 0.0
    for a in np.asarray(thresholds, dtype=float).tolist():
        k = int(np.searchsorted(members, a))
        best = math.inf
        for j in (k - 1, k):
            if 0 <= j < len(members):
                f = float(members[j])
                best = min(best, _mass_closed_open(cover.reference, min(a, f), max(a, f)))
        worst = max(worst, best)
    return worst


# Sequential covers -----------------------------------------------------------


class SequentialCover:
    """Interface: exact ``size``, ``log_size`` and a per-path coverage test."""

    size: int

    @property
    def log_size(self) -> float:
        return math.log(self.size) if self.size > 0 else -math.inf

    def fails_on(self, hclass: HypothesisClass, values: np.ndarray, coords: np.ndarray) -> bool:
        """True when some dichotomy of the path is reproduced by no member."""
        raise NotImplementedError

    def trajectories(self, values: np.ndarray, coords: np.ndarray) -> set[tuple]:
        """Outputs of every member along the path (small covers only)."""
        raise NotImplementedError

    def fails_on_explicit(self, hclass: HypothesisClass, values: np.ndarray, coords: np.ndarray) -> bool:
        """Enumeration oracle: list all members and all dichotomies."""
        covered = self.trajectories(values, coords)
        return any(bits not in covered for bits, _ in hclass.project_encoded(values, coords))


class ExplicitCover(SequentialCover):
    """A finite list of hypotheses used as (history-free) sequential functions."""

    def __init__(self, hclass: HypothesisClass, members: Sequence):
        self.hclass = hclass
        self.members = [m.param if isinstance(m, Hypothesis) else m for m in members]
        self.size = len(self.members)

    def trajectories(self, values, coords):
        return {tuple(self.hclass.evaluate_many(p, values, coords).astype(int).tolist()) for p in self.members}

    def fails_on(self, hclass, values, coords):
        return self.fails_on_explicit(hclass, values, coords)


BASES = {"erm": ERMFollower, "oneinc": OneInclusion}


def flip_cover_size(T: int, budget: int) -> int:
    """sum_{i <= B} C(T, i), exact."""
    return sum(math.comb(T, i) for i in range(min(budget, T) + 1))


class FlipSetCover(SequentialCover):
    """Members g_I, |I| <= B: the base predictor fed its own outputs, with
    the output flipped at the rounds in I.

    When the labels follow a hypothesis h, the member whose flip set is the
    base predictor's mistake set on h reproduces h, so a path is covered
    exactly when the base predictor makes at most B mistakes on every
    dichotomy of the path.
    """

    def __init__(self, base: str, budget: int, hclass: HypothesisClass, T: int):
        if base not in BASES:
            raise ValueError(f"unknown base predictor {base!r}")
        if budget < 0:
            raise ValueError("flip budget must be >= 0")
        self.base = base
        self.budget = int(budget)
        self.hclass = hclass
        self.T = int(T)
        self.size = flip_cover_size(self.T, self.budget)

    @property
    def log_size(self) -> float:
        return math.log(self.size)

    def member(self, flips: Sequence[int], values, coords) -> tuple:
        """Outputs of g_I along the path; I holds 1-indexed rounds."""
        I = set(int(i) for i in flips)
        pred = BASES[self.base](self.hclass)
        out = []
        for t, (v, c) in enumerate(zip(np.asarray(values).tolist(), np.asarray(coords).tolist()), start=1):
            try:
                p = int(pred.predict(v, c))
            except NotRealizable:
                # Such a member never reproduces a hypothesis; any output works.
                p = 0
            if t in I:
                p = 1 - p
            pred.update(p)
            out.append(p)
        return tuple(out)

    def trajectories(self, values, coords):
        T = len(values)
        out = set()
        for k in range(min(self.budget, T) + 1):
            for I in itertools.combinations(range(1, T + 1), k):
                out.add(self.member(I, values, coords))
        return out

    def max_mistakes(self, values, coords) -> int:
        """Largest number of base-predictor mistakes over all dichotomies."""
        values = np.asarray(values, dtype=float)
        coords = np.asarray(coords, dtype=np.int64)
        if isinstance(self.hclass, (Thresholds1D, ProductThresholds)):
            return threshold_max_mistakes(self.base, values, coords, self.hclass.n_blocks)
        best = 0
        for bits, _ in self.hclass.project_encoded(values, coords):
            best = max(best, _online_mistakes(BASES[self.base](self.hclass), values, coords, bits))
        return best

    def fails_on(self, hclass, values, coords):
        return self.max_mistakes(values, coords) > self.budget


def _online_mistakes(pred, values, coords, ys) -> int:
    m = 0
    for v, c, y in zip(np.asarray(values).tolist(), np.asarray(coords).tolist(), ys):
        m += int(int(pred.predict(v, c)) != int(y))
        pred.update(int(y))
    return m


def _max_interval_coverage(lo: np.ndarray, hi: np.ndarray) -> int:
    """max over a of #{k : lo_k < a <= hi_k}."""
    keep = lo < hi
    lo, hi = np.sort(lo[keep]), np.sort(hi[keep])
    if len(hi) == 0:
        return 0
    # The maximum is attained at some right end a = hi_k.
    started = np.searchsorted(lo, hi, side="left")
    ended = np.searchsorted(hi, hi, side="left")
    return int((started - ended).max())


def threshold_max_mistakes(base: str, values: np.ndarray, coords: np.ndarray, n_blocks: int = 1) -> int:
    """Worst-case mistakes of the ERM follower or the one-inclusion
    predictor over every threshold labelling of the path.

    For the ERM follower, round t errs under h_a exactly when a lies in
    (p_t, x_t] with p_t the largest earlier point <= x_t (and x_t < 1). For
    the one-inclusion predictor it errs exactly when a lies in (x_t, q_t]
    with q_t the smallest earlier point >= x_t (capped at 1). Blocks are
    independent, so the product maximum is the sum of block maxima.
    """
    total = 0
    for b in range(n_blocks):
        v = values[coords == b] if n_blocks > 1 else values
        seen: list[float] = []
        lo = np.empty(len(v))
        hi = np.empty(len(v))
        for t, x in enumerate(v.tolist()):
            k = bisect.bisect_right(seen, x)
            if base == "erm":
                lo[t] = seen[k - 1] if k > 0 else -math.inf
                hi[t] = x if x < 1.0 else -math.inf
            else:
                j = bisect.bisect_left(seen, x)
                lo[t] = x
                hi[t] = min(seen[j], 1.0) if j < len(seen) else 1.0
            bisect.insort(seen, x)
        total += _max_interval_coverage(lo, hi)
    return total


def cover_from_predictor(base: str, budget: int, hclass: HypothesisClass, T: int) -> FlipSetCover:
    return FlipSetCover(base, budget, hclass, T)


def flip_budget_recipe(K: int, vc: int, T: int, beta: float) -> int:
    """B = ceil(K (vc ln^2 T + ln T ln(K / beta)))."""
    lt = math.log(T)
    return math.ceil(K * (vc * lt * lt + lt * math.log(K / beta)))


# Realization tree ------------------------------------------------------------


@dataclass
class TreeNode:
    lo: float
    hi: float
    depth: int
    parent: Optional[int]
    mass: Optional[object] = None
    children: Optional[tuple[int, int]] = None
    split_time: Optional[int] = None
    ratio: Optional[object] = None


@dataclass
class RealizationTree:
    """Cells (lo, hi] of threshold parameters, split by arriving points.

    A point x strictly inside a cell splits it into (lo, x] (thresholds
    labelling x as 1) and (x, hi] (labelling x as 0). The root is
    (-inf, 1]. Masses are reference masses of the parameter cells.
    """

    nodes: list[TreeNode]
    splits: list[tuple[int, int, object]] = field(default_factory=list)

    @property
    def ratios(self) -> list:
        return [lam for _, _, lam in self.splits]

    @property
    def max_depth(self) -> int:
        return max(n.depth for n in self.nodes)

    def leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.children is None]

    def chain(self, leaf: int) -> list[int]:
        """Node indices from the root down to ``leaf``."""
        out = []
        i: Optional[int] = leaf
        while i is not None:
            out.append(i)
            i = self.nodes[i].parent
        return out[::-1]


def _mass_function(reference: Optional[Marginal], exact: bool) -> Optional[Callable[[float], object]]:
    """F(x) = reference([0, x]) with F(-inf) = 0; exact rationals for atoms."""
    if reference is None:
        return None
    if isinstance(reference, UniformInterval):
        lo, hi = reference.lo, reference.hi

        def F(x: float) -> float:
            if x == -math.inf:
                return 0.0
            return min(max((x - lo) / (hi - lo), 0.0), 1.0)

        return F
    xs, w = reference.atoms()
    xs_l = xs.tolist()
    if exact:
        cum = [Fraction(0)]
        for wi in w.tolist():
            cum.append(cum[-1] + Fraction(wi))
        cum = [c / cum[-1] for c in cum]
    else:
        cum = [0.0] + np.cumsum(w).tolist()

    def F(x: float):
        if x == -math.inf:
            return cum[0]
        return cum[bisect.bisect_right(xs_l, x)]

    return F


def realization_tree_run(stream, reference: Optional[Marginal] = None, exact: bool = True) -> RealizationTree:
    """Grow the realization tree over a stream of points in [0, 1].

    An arrival equal to the upper end of its cell does not split it. With a
    reference measure each node carries its mass and each split its ratio
    lambda = max child mass / parent mass (1 when the parent is null).
    """
    F = _mass_function(reference, exact)
    root = TreeNode(-math.inf, 1.0, 0, None)
    if F is not None:
        root.mass = F(1.0) - F(-math.inf)
    nodes = [root]
    tree = RealizationTree(nodes)
    bounds = [1.0]
    leaf_of = [0]
    for t, x in enumerate(np.asarray(stream, dtype=float).tolist(), start=1):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"stream value {x} outside [0, 1]")
        i = bisect.bisect_left(bounds, x)
        if bounds[i] == x:
            continue
        pid = leaf_of[i]
        parent = nodes[pid]
        low = TreeNode(parent.lo, x, parent.depth + 1, pid)
        high = TreeNode(x, parent.hi, parent.depth + 1, pid)
        if F is not None:
            fx = F(x)
            low.mass = fx - F(parent.lo)
            high.mass = F(parent.hi) - fx
            tot = parent.mass
            parent.ratio = max(low.mass, high.mass) / tot if tot > 0 else 1
        parent.children = (len(nodes), len(nodes) + 1)
        parent.split_time = t
        nodes.extend((low, high))
        tree.splits.append((t, pid, parent.ratio))
        bounds.insert(i, x)
        leaf_of[i : i + 1] = [parent.children[0], parent.children[1]]
    return tree


def tree_max_depth(stream) -> int:
    """Max depth of the realization tree without building node objects."""
    bounds = [1.0]
    depth = [0]
    best = 0
    for x in np.asarray(stream, dtype=float).tolist():
        i = bisect.bisect_left(bounds, x)
        if bounds[i] == x:
            continue
        d = depth[i] + 1
        bounds.insert(i, x)
        depth[i : i + 1] = [d, d]
        best = max(best, d)
    return best


def depth_recipe(K: int, T: int, beta: float) -> float:
    """sqrt(15 K T ln(2 K T^2 / beta))."""
    return math.sqrt(15.0 * K * T * math.log(2.0 * K * T * T / beta))


class TreeCover(SequentialCover):
    """Threshold cover indexed by W = {0, ..., 2^E - 1}.

    Every cell of the realization tree owns a contiguous block of W. On a
    split the label-0 child (the upper cell) takes the first half and the
    label-1 child the rest. Member w outputs the label its cell gives to
    the arriving point. A cell whose block is empty is uncovered, which
    happens exactly when a cell with at most one index splits.
    """

    def __init__(self, exponent: int):
        if exponent < 1:
            raise ValueError("tree budget exponent must be >= 1")
        self.exponent = int(exponent)
        self.size = 2**self.exponent

    @property
    def log_size(self) -> float:
        return self.exponent * math.log(2.0)

    def fails_on(self, hclass, values, coords=None) -> bool:
        if not isinstance(hclass, Thresholds1D):
            raise TypeError("the tree cover is defined for one-dimensional thresholds")
        return tree_max_depth(values) > self.exponent

    def trajectories(self, values, coords=None):
        if self.exponent > 16:
            raise MemoryError("explicit enumeration limited to exponent <= 16")
        bounds = [1.0]
        blocks = [(0, self.size)]
        n = self.size
        outs = np.zeros((n, len(values)), dtype=np.int8)
        for t, x in enumerate(np.asarray(values, dtype=float).tolist()):
            i = bisect.bisect_left(bounds, x)
            if bounds[i] != x:
                s, e = blocks[i]
                half = (e - s) // 2
                bounds.insert(i, x)
                # blocks follow bounds: (lo, x] then (x, hi]
                blocks[i : i + 1] = [(s + half, e), (s, s + half)]
            for k, (s, e) in enumerate(blocks):
                if bounds[k] <= x:
                    outs[s:e, t] = 1
        return {tuple(row.tolist()) for row in outs}


def threshold_cover_from_tree(exponent: int) -> TreeCover:
    return TreeCover(exponent)


# Validation ------------------------------------------------------------------


def cover_failures(cover: SequentialCover, hclass: HypothesisClass, spec, n_trials: int, explicit: bool = False) -> list[bool]:
    """Per-path failure flags on ``n_trials`` paths of ``spec``.

    Trial i uses the path seed derived from (spec.seed, i).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    out = []
    for i in range(n_trials):
        path = sample_path(with_seed(spec, derive_seed(spec.seed, i)))
        check = cover.fails_on_explicit if explicit else cover.fails_on
        out.append(bool(check(hclass, path.values, path.coords)))
    return out


def validate_cover(cover: SequentialCover, hclass: HypothesisClass, spec, n_trials: int, explicit: bool = False) -> float:
    """Empirical failure rate: fraction of paths with an uncovered dichotomy."""
    flags = cover_failures(cover, hclass, spec, n_trials, explicit)
    return sum(flags) / len(flags)
