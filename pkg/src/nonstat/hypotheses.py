"""Binary hypothesis classes, projection to dichotomies, ERM and the
agreed-mismatch statistic.

Instances are carried internally as a pair ``(value, coord)``: the real
coordinate and a zero-based block index. ``UnitPoint(x)`` maps to
``(x, 0)``, ``ProductPoint(x, b)`` to ``(x, b - 1)`` and ``FinitePoint(id)``
to ``(position of id in the table, 0)``.
"""

from __future__ import annotations

import bisect
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class UnitPoint:
    x: float


@dataclass(frozen=True)
class ProductPoint:
    x: float
    b: int


@dataclass(frozen=True)
class FinitePoint:
    id: Any


Instance = Union[UnitPoint, ProductPoint, FinitePoint]


class DomainError(ValueError):
    """An instance or parameter lies outside the class domain."""


@dataclass(frozen=True)
class Hypothesis:
    """A member of a class, identified by its parameter."""

    hclass: "HypothesisClass"
    param: Any

    def __call__(self, x: Instance) -> int:
        value, coord = self.hclass.encode(x)
        return self.hclass.evaluate_encoded(self.param, value, coord)


@dataclass(frozen=True)
class Dichotomy:
    bits: tuple
    witness: Hypothesis


class RepresentativeSet:
    """One witness per dichotomy of a prefix, stored per coordinate block.

    Product classes factorize: a joint representative is one choice of
    witness per block, so the joint set has ``prod(len(f))`` members while
    every instance only reads the factor of its own block.
    """

    def __init__(self, hclass: "HypothesisClass", factors: list[np.ndarray]):
        self.hclass = hclass
        self.factors = factors

    @property
    def size(self) -> int:
        return int(np.prod([len(f) for f in self.factors]))

    def factor_of(self, coord: int) -> int:
        return coord if len(self.factors) > 1 else 0

    def predict(self, value: float, coord: int) -> tuple[int, np.ndarray]:
        """Return the factor index and the 0/1 outputs of its members."""
        f = self.factor_of(coord)
        return f, self.hclass.factor_outputs(self.factors[f], value, coord)

    def hypotheses(self) -> list[Hypothesis]:
        """Materialize the joint representatives (small sets only)."""
        if len(self.factors) == 1:
            return [self.hclass.hypothesis(p) for p in self.factors[0].tolist()]
        combos = itertools.product(*[f.tolist() for f in self.factors])
        return [self.hclass.hypothesis(tuple(c)) for c in combos]


class HypothesisClass:
    """Common interface; concrete classes override the encoded primitives."""

    vc: int = 1
    n_blocks: int = 1

    def hypothesis(self, param: Any) -> Hypothesis:
        self.check_param(param)
        return Hypothesis(self, param)

    def check_param(self, param: Any) -> None:
        pass

    def encode(self, x: Instance) -> tuple[float, int]:
        raise NotImplementedError

    def decode(self, value: float, coord: int) -> Instance:
        raise NotImplementedError

    def encode_many(self, xs: Sequence[Instance]) -> tuple[np.ndarray, np.ndarray]:
        pairs = [self.encode(x) for x in xs]
        values = np.array([p[0] for p in pairs], dtype=float)
        coords = np.array([p[1] for p in pairs], dtype=np.int64)
        return values, coords

    def evaluate_encoded(self, param: Any, value: float, coord: int) -> int:
        raise NotImplementedError

    def evaluate_many(self, param: Any, values: np.ndarray, coords: np.ndarray) -> np.ndarray:
        return np.array(
            [self.evaluate_encoded(param, v, c) for v, c in zip(values.tolist(), coords.tolist())],
            dtype=np.int8,
        )

    def default_param(self) -> Any:
        """Witness of the unique dichotomy of the empty sample."""
        raise NotImplementedError

    def project_encoded(self, values: np.ndarray, coords: np.ndarray) -> list[tuple[tuple, Any]]:
        """All distinct dichotomies as (bits, witness param), sorted by bits."""
        raise NotImplementedError

    def representatives(self, values: np.ndarray, coords: np.ndarray) -> RepresentativeSet:
        raise NotImplementedError

    def factor_outputs(self, factor: np.ndarray, value: float, coord: int) -> np.ndarray:
        raise NotImplementedError

    def factor_outputs_many(self, factor: np.ndarray, values: np.ndarray, coords: np.ndarray) -> np.ndarray:
        """Outputs of the factor members (columns) at many points (rows)."""
        return (values[:, None] >= factor[None, :]).astype(np.int8)

    def min_mistakes(self, values: np.ndarray, coords: np.ndarray, ys: np.ndarray) -> tuple[Any, int]:
        """ERM witness and its mistake count, ties to the first canonical dichotomy."""
        return _erm_by_projection(self, values, coords, ys)

    def descriptor(self) -> str:
        raise NotImplementedError


def _threshold_cuts(values: np.ndarray) -> np.ndarray:
    """Canonical threshold witnesses on a sample, in descending order.

    The witness of a dichotomy is its smallest positive point, or 1.0 for the
    dichotomy with no positive point below 1. Descending witnesses give
    lexicographically increasing bit vectors.
    """
    u = np.unique(values)
    u = u[u < 1.0]
    return np.concatenate(([1.0], u[::-1]))


def _threshold_erm(values: np.ndarray, ys: np.ndarray) -> tuple[float, int]:
    """Exact threshold ERM; ties go to the largest witness."""
    if len(values) == 0:
        return 1.0, 0
    order = np.argsort(values, kind="stable")
    xv = values[order]
    yv = np.asarray(ys)[order].astype(np.int64)
    u, start = np.unique(xv, return_index=True)
    # mistakes(a = u_i) = ones strictly below u_i + zeros at or above u_i
    ones_below = np.concatenate(([0], np.cumsum(yv)))[start]
    zeros_total = int(len(yv) - yv.sum())
    zeros_below = start - ones_below
    mist = ones_below + (zeros_total - zeros_below)
    keep = u < 1.0
    cand_a = np.concatenate((u[keep], [1.0]))
    # a = 1.0 labels only points equal to 1 as positive
    at_one = xv >= 1.0
    mist_one = int(yv[~at_one].sum() + (1 - yv[at_one]).sum())
    cand_m = np.concatenate((mist[keep], [mist_one]))
    best = int(cand_m.min())
    idx = int(np.flatnonzero(cand_m == best)[-1])
    return float(cand_a[idx]), best


class Thresholds1D(HypothesisClass):
    """h_a(x) = 1{x >= a} on [0, 1], with a in [0, 1]."""

    vc = 1
    n_blocks = 1

    def check_param(self, param: Any) -> None:
        if not 0.0 <= float(param) <= 1.0:
            raise DomainError(f"threshold {param} outside [0, 1]")

    def encode(self, x: Instance) -> tuple[float, int]:
        if isinstance(x, UnitPoint):
            v = float(x.x)
        elif isinstance(x, (int, float, np.floating)):
            v = float(x)
        else:
            raise DomainError(f"{x!r} is not a point of [0, 1]")
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{v} outside [0, 1]")
        return v, 0

    def decode(self, value: float, coord: int) -> Instance:
        return UnitPoint(float(value))

    def evaluate_encoded(self, param: Any, value: float, coord: int) -> int:
        return int(value >= param)

    def evaluate_many(self, param, values, coords):
        return (values >= param).astype(np.int8)

    def default_param(self) -> float:
        return 1.0

    def project_encoded(self, values, coords):
        return [(tuple((values >= a).astype(int).tolist()), float(a)) for a in _threshold_cuts(values)]

    def representatives(self, values, coords) -> RepresentativeSet:
        return RepresentativeSet(self, [_threshold_cuts(values)[::-1].copy()])

    def factor_outputs(self, factor, value, coord):
        return (value >= factor).astype(np.int8)

    def min_mistakes(self, values, coords, ys):
        return _threshold_erm(np.asarray(values, float), np.asarray(ys))

    def descriptor(self) -> str:
        return "threshold"


class ProductThresholds(HypothesisClass):
    """h_a(x, b) = 1{x >= a_b} on [0, 1] x {1, ..., d}."""

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("d must be >= 1")
        self.d = int(d)
        self.vc = self.d
        self.n_blocks = self.d

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ProductThresholds) and other.d == self.d

    def __hash__(self) -> int:
        return hash(("product", self.d))

    def check_param(self, param: Any) -> None:
        a = tuple(param)
        if len(a) != self.d or not all(0.0 <= float(v) <= 1.0 for v in a):
            raise DomainError(f"parameter {param} outside [0, 1]^{self.d}")

    def encode(self, x: Instance) -> tuple[float, int]:
        if isinstance(x, ProductPoint):
            v, b = float(x.x), int(x.b)
        elif isinstance(x, tuple) and len(x) == 2:
            v, b = float(x[0]), int(x[1])
        elif isinstance(x, UnitPoint) and self.d == 1:
            v, b = float(x.x), 1
        else:
            raise DomainError(f"{x!r} is not a point of [0, 1] x [{self.d}]")
        if not (0.0 <= v <= 1.0 and 1 <= b <= self.d):
            raise DomainError(f"{x!r} outside [0, 1] x [{self.d}]")
        return v, b - 1

    def decode(self, value: float, coord: int) -> Instance:
        return ProductPoint(float(value), int(coord) + 1)

    def evaluate_encoded(self, param, value, coord):
        return int(value >= param[coord])

    def evaluate_many(self, param, values, coords):
        a = np.asarray(param, dtype=float)
        return (values >= a[coords]).astype(np.int8)

    def default_param(self) -> tuple:
        return (1.0,) * self.d

    def project_encoded(self, values, coords):
        cuts = [_threshold_cuts(values[coords == b]) for b in range(self.d)]
        out = []
        for combo in itertools.product(*cuts):
            a = np.array(combo)
            bits = tuple((values >= a[coords]).astype(int).tolist())
            out.append((bits, tuple(float(c) for c in combo)))
        out.sort(key=lambda p: p[0])
        return out

    def representatives(self, values, coords) -> RepresentativeSet:
        return RepresentativeSet(
            self, [_threshold_cuts(values[coords == b])[::-1].copy() for b in range(self.d)]
        )

    def factor_outputs(self, factor, value, coord):
        return (value >= factor).astype(np.int8)

    def min_mistakes(self, values, coords, ys):
        values = np.asarray(values, float)
        coords = np.asarray(coords)
        ys = np.asarray(ys)
        params, total = [], 0
        for b in range(self.d):
            m = coords == b
            a, k = _threshold_erm(values[m], ys[m])
            params.append(a)
            total += k
        return tuple(params), total

    def descriptor(self) -> str:
        return f"product:{self.d}"


class FiniteTable(HypothesisClass):
    """A finite class given by its truth table over a finite instance set."""

    MAX_EXACT_VC = 20

    def __init__(self, instances: Sequence[Any], rows: Sequence[Sequence[int]], vc: int | None = None):
        self.instances = list(instances)
        self.rows = np.asarray(rows, dtype=np.int8)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.instances):
            raise ValueError("rows must be a 2-d table with one column per instance")
        if not np.isin(self.rows, (0, 1)).all():
            raise ValueError("rows must be binary")
        self._index = {iid: k for k, iid in enumerate(self.instances)}
        if len(self._index) != len(self.instances):
            raise ValueError("instance ids must be distinct")
        if vc is None:
            if len(self.instances) > self.MAX_EXACT_VC:
                raise ValueError("tables with more than 20 instances must declare vc")
            vc = shattering_dimension(self.rows)
        self.vc = max(int(vc), 1)
        self.n_blocks = 1
        self.source: str | None = None

    @classmethod
    def from_json(cls, path: str | Path) -> "FiniteTable":
        data = json.loads(Path(path).read_text())
        table = cls(data["instances"], data["rows"], data.get("vc"))
        table.source = str(path)
        return table

    def check_param(self, param):
        if not 0 <= int(param) < len(self.rows):
            raise DomainError(f"row {param} outside table")

    def encode(self, x: Instance) -> tuple[float, int]:
        key = x.id if isinstance(x, FinitePoint) else x
        try:
            return float(self._index[key]), 0
        except (KeyError, TypeError):
            raise DomainError(f"{x!r} is not an instance of the table") from None

    def decode(self, value, coord):
        return FinitePoint(self.instances[int(value)])

    def evaluate_encoded(self, param, value, coord):
        return int(self.rows[int(param), int(value)])

    def evaluate_many(self, param, values, coords):
        return self.rows[int(param), values.astype(np.int64)]

    def default_param(self) -> int:
        return 0

    def project_encoded(self, values, coords):
        cols = values.astype(np.int64)
        seen: dict[tuple, int] = {}
        for r in range(len(self.rows)):
            bits = tuple(self.rows[r, cols].astype(int).tolist())
            seen.setdefault(bits, r)
        return sorted(seen.items())

    def representatives(self, values, coords) -> RepresentativeSet:
        params = np.array([p for _, p in self.project_encoded(values, coords)], dtype=np.int64)
        return RepresentativeSet(self, [params])

    def factor_outputs(self, factor, value, coord):
        return self.rows[factor, int(value)]

    def factor_outputs_many(self, factor, values, coords):
        return self.rows[np.ix_(factor, values.astype(np.int64))].T

    def descriptor(self) -> str:
        return f"table:{self.source}" if self.source else "table"


def shattering_dimension(rows: np.ndarray) -> int:
    """Exact VC dimension of a binary table by exhaustive search."""
    rows = np.asarray(rows, dtype=np.int8)
    n = rows.shape[1]
    best = 0
    for k in range(1, n + 1):
        found = False
        for cols in itertools.combinations(range(n), k):
            patterns = {tuple(r) for r in rows[:, cols].tolist()}
            if len(patterns) == 2**k:
                found = True
                break
        if not found:
            break
        best = k
    return best


def parse_class(descriptor: str) -> HypothesisClass:
    """Build a class from ``threshold``, ``product:<d>`` or ``table:<file>``."""
    if descriptor == "threshold":
        return Thresholds1D()
    if descriptor.startswith("product:"):
        return ProductThresholds(int(descriptor.split(":", 1)[1]))
    if descriptor.startswith("table:"):
        return FiniteTable.from_json(descriptor.split(":", 1)[1])
    raise ValueError(f"unknown class descriptor {descriptor!r}")


def _erm_by_projection(hclass, values, coords, ys):
    ys = tuple(int(y) for y in np.asarray(ys).tolist())
    best, best_param = None, hclass.default_param()
    for bits, param in hclass.project_encoded(values, coords):
        k = sum(b != y for b, y in zip(bits, ys))
        if best is None or k < best:
            best, best_param = k, param
    return best_param, (0 if best is None else best)


# Public operations on decoded instances.

def evaluate(h: Hypothesis, x: Instance) -> int:
    return h(x)


def project(hclass: HypothesisClass, xs: Sequence[Instance]) -> list[Dichotomy]:
    values, coords = hclass.encode_many(xs)
    return [Dichotomy(bits, Hypothesis(hclass, p)) for bits, p in hclass.project_encoded(values, coords)]


def erm(hclass: HypothesisClass, xs: Sequence[Instance], ys: Sequence[int]) -> tuple[Hypothesis, int]:
    if len(xs) != len(ys):
        raise ValueError("xs and ys differ in length")
    values, coords = hclass.encode_many(xs)
    param, k = hclass.min_mistakes(values, coords, np.asarray(ys, dtype=np.int64))
    return Hypothesis(hclass, param), int(k)


def _threshold_min_loss(values: np.ndarray, ys: np.ndarray, lt: np.ndarray) -> float:
    """min over a in [0, 1] of sum_t lt[1{x_t >= a}, y_t]."""
    if len(values) == 0:
        return 0.0
    order = np.argsort(values, kind="stable")
    xv = values[order]
    l0 = lt[0, ys[order]]
    l1 = lt[1, ys[order]]
    u, start = np.unique(xv, return_index=True)
    below0 = np.concatenate(([0.0], np.cumsum(l0)))
    above1 = np.concatenate((np.cumsum(l1[::-1])[::-1], [0.0]))
    # a = u_i: points below u_i get 0, the rest get 1.
    cand = below0[start] + above1[start]
    keep = u < 1.0
    # a = 1.0: only points equal to 1 get 1.
    k1 = int(np.searchsorted(xv, 1.0, side="left"))
    at_one = below0[k1] + above1[k1]
    return float(min(cand[keep].min(initial=np.inf), at_one))


def min_cumulative_loss(hclass: HypothesisClass, values, coords, ys, lt: np.ndarray) -> float:
    """Exact inf over the class of sum_t lt[h(x_t), y_t].

    ``lt[h, y]`` is the loss of output h on label y. Thresholds use sorted
    prefix sums, product thresholds add up per-block minima, tables scan
    their rows.
    """
    values = np.asarray(values, dtype=float)
    coords = np.asarray(coords, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    lt = np.asarray(lt, dtype=float)
    if isinstance(hclass, Thresholds1D):
        return _threshold_min_loss(values, ys, lt)
    if isinstance(hclass, ProductThresholds):
        return float(sum(_threshold_min_loss(values[coords == b], ys[coords == b], lt) for b in range(hclass.d)))
    if isinstance(hclass, FiniteTable):
        out = hclass.rows[:, values.astype(np.int64)]
        return float(lt[out, ys[None, :]].sum(axis=1).min())
    return float(min(lt[np.array(bits, dtype=np.int64), ys].sum() for bits, _ in hclass.project_encoded(values, coords)))


def _max_window_disagreement(groups: dict, window: slice) -> int:
    best = 0
    for members in groups.values():
        arr = np.array(members, dtype=np.int8)[:, window]
        if len(arr) < 2:
            continue
        diff = (arr[:, None, :] != arr[None, :, :]).sum(axis=2)
        best = max(best, int(diff.max()))
    return best


def agreed_mismatch(hclass: HypothesisClass, xs: Sequence[Instance], i: int, j: int) -> int:
    """Agreed-mismatch number on the 1-indexed window [i, j].

    Maximum over pairs agreeing on x_1..x_{i-1} of their disagreements on
    x_i..x_j, computed over the dichotomies of x_1..x_j.
    """
    if not 1 <= i <= j <= len(xs):
        raise IndexError(f"need 1 <= i <= j <= {len(xs)}, got i={i}, j={j}")
    values, coords = hclass.encode_many(xs[:j])
    groups: dict[tuple, list] = {}
    for bits, _ in hclass.project_encoded(values, coords):
        groups.setdefault(bits[: i - 1], []).append(bits)
    return _max_window_disagreement(groups, slice(i - 1, j))


def restricted_agreed_mismatch(
    hclass: HypothesisClass,
    representatives: Sequence[Hypothesis],
    xs: Sequence[Instance],
    t_s: int,
    r: int,
) -> int:
    """The epoch statistic E over the window x_{t_s}..x_{t_s+r-1}.

    Maximum over h in the class and representatives h^s agreeing with h on
    x_1..x_{t_s-1} of their disagreements on the window. ``r = 0`` is the
    empty window.
    """
    if t_s < 1 or r < 0 or t_s - 1 + r > len(xs):
        raise IndexError("window outside the sample")
    if r == 0:
        return 0
    end = t_s - 1 + r
    values, coords = hclass.encode_many(xs[:end])
    prefix = slice(0, t_s - 1)
    window = slice(t_s - 1, end)
    rep_bits = [tuple(hclass.evaluate_many(h.param, values, coords).astype(int).tolist()) for h in representatives]
    best = 0
    for bits, _ in hclass.project_encoded(values, coords):
        b = np.array(bits)
        for rb in rep_bits:
            rb_arr = np.array(rb)
            if np.array_equal(b[prefix], rb_arr[prefix]):
                best = max(best, int((b[window] != rb_arr[window]).sum()))
    return best


class MismatchTracker:
    """Incremental epoch statistic for canonical representatives.

    Base implementation for finite tables: keeps, for every (row,
    representative) pair that agrees on the prefix, its disagreement count
    over the current window.
    """

    def __init__(self, hclass: HypothesisClass):
        self.hclass = hclass
        self.E = 0

    def start(self, prefix_values: np.ndarray, prefix_coords: np.ndarray, reps: RepresentativeSet) -> None:
        rows = self.hclass.rows
        cols = prefix_values.astype(np.int64)
        rep_rows = rows[reps.factors[0]]
        agree = (rows[:, None, :][:, :, cols] == rep_rows[None, :, :][:, :, cols]).all(axis=2)
        self._rep_idx = reps.factors[0]
        self._mask = agree
        self._counts = np.zeros(agree.shape, dtype=np.int64)
        self.E = 0

    def push(self, value: float, coord: int) -> int:
        rows = self.hclass.rows
        col = int(value)
        diff = rows[:, col][:, None] != rows[self._rep_idx, col][None, :]
        self._counts += diff
        self.E = int(self._counts[self._mask].max()) if self._mask.any() else 0
        return self.E


class ThresholdTracker(MismatchTracker):
    """Epoch statistic for thresholds and product thresholds.

    With one representative per prefix dichotomy, the statistic is, per
    block, the largest number of window points falling strictly inside one
    gap of the prefix (points equal to a prefix point or to 1 never
    separate a pair), summed over blocks.
    """

    def __init__(self, hclass: HypothesisClass):
        super().__init__(hclass)
        self.n_blocks = hclass.n_blocks

    def start(self, prefix_values, prefix_coords, reps=None) -> None:
        self._sorted = []
        self._members = []
        for b in range(self.n_blocks):
            v = prefix_values[prefix_coords == b] if self.n_blocks > 1 else prefix_values
            u = np.unique(v).tolist()
            self._sorted.append(u)
            self._members.append(set(u))
        self._gaps = [dict() for _ in range(self.n_blocks)]
        self._block_max = [0] * self.n_blocks
        self.E = 0

    def push(self, value: float, coord: int) -> int:
        b = coord if self.n_blocks > 1 else 0
        if value >= 1.0 or value in self._members[b]:
            return self.E
        g = bisect.bisect_left(self._sorted[b], value)
        gaps = self._gaps[b]
        c = gaps.get(g, 0) + 1
        gaps[g] = c
        if c > self._block_max[b]:
            self._block_max[b] = c
            self.E += 1
        return self.E


def make_tracker(hclass: HypothesisClass) -> MismatchTracker:
    if isinstance(hclass, (Thresholds1D, ProductThresholds)):
        return ThresholdTracker(hclass)
    return MismatchTracker(hclass)


def auto_threshold(T: int, vc: int, K: int) -> float:
    """Epoch threshold N = sqrt(T * vc * ln T / K)."""
    return math.sqrt(T * vc * math.log(T) / K)


def sauer_bound(n: int, vc: int) -> int:
    return sum(math.comb(n, i) for i in range(vc + 1))
