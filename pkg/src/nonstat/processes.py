"""Seed-deterministic generators for non-stationary feature processes.

Points are produced in the encoded form used by :mod:`nonstat.hypotheses`:
a real ``value`` and a zero-based block index ``coord``. For finite tables
the value is the position of the instance in the table.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

GRID_BINS = 2**12

# Stream identifiers for derived random generators.
STREAM_PATH = 0
STREAM_EXTEND = 1
STREAM_COUPLING = 2
STREAM_LABELS = 3
STREAM_LEARNER = 4


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator keyed by a master seed and stream indices."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


# Marginals -------------------------------------------------------------------

@dataclass(frozen=True)
class PointMass:
    x: float
    b: int = 1

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        return np.full(n, float(self.x)), np.full(n, self.b - 1, dtype=np.int64)

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([float(self.x)]), np.array([1.0])


@dataclass(frozen=True)
class UniformInterval:
    """Uniform on [lo, hi]; with ``blocks > 1`` the block is uniform too."""

    lo: float = 0.0
    hi: float = 1.0
    blocks: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ValueError("need 0 <= lo < hi <= 1")

    def sample(self, rng, n):
        x = self.lo + (self.hi - self.lo) * rng.random(n)
        if self.blocks == 1:
            return x, np.zeros(n, dtype=np.int64)
        return x, rng.integers(0, self.blocks, n)

    def atoms(self):
        return None


@dataclass(frozen=True)
class UniformFinite:
    """Uniform over atoms given as reals or (x, b) pairs with 1-based b."""

    atoms_list: tuple

    def __init__(self, atoms: Sequence[Any]):
        norm = []
        for a in atoms:
            if isinstance(a, (tuple, list)):
                norm.append((float(a[0]), int(a[1])))
            else:
                norm.append((float(a), 1))
        if not norm:
            raise ValueError("UniformFinite needs at least one atom")
        object.__setattr__(self, "atoms_list", tuple(norm))

    def sample(self, rng, n):
        idx = rng.integers(0, len(self.atoms_list), n)
        xs = np.array([a[0] for a in self.atoms_list])[idx]
        bs = np.array([a[1] - 1 for a in self.atoms_list], dtype=np.int64)[idx]
        return xs, bs

    def atoms(self):
        xs = np.array([a[0] for a in self.atoms_list])
        u, inv = np.unique(xs, return_inverse=True)
        w = np.bincount(inv, minlength=len(u)) / len(xs)
        return u, w


@dataclass(frozen=True)
class Quantized:
    """Atoms at the bin centers of a uniform grid on [0, 1]."""

    weights: tuple

    def __init__(self, weights: Optional[Sequence[float]] = None, bins: int = GRID_BINS):
        w = np.ones(bins) if weights is None else np.asarray(weights, dtype=float)
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        object.__setattr__(self, "weights", tuple((w / w.sum()).tolist()))

    @property
    def bins(self) -> int:
        return len(self.weights)

    def centers(self) -> np.ndarray:
        return (np.arange(self.bins) + 0.5) / self.bins

    def sample(self, rng, n):
        j = rng.choice(self.bins, size=n, p=np.asarray(self.weights))
        return self.centers()[j], np.zeros(n, dtype=np.int64)

    def atoms(self):
        w = np.asarray(self.weights)
        keep = w > 0
        return self.centers()[keep], w[keep]


Marginal = Union[PointMass, UniformInterval, UniformFinite, Quantized]


def cdf(mu: Marginal, x: float) -> float:
    """mu([0, x]) on the value axis."""
    if isinstance(mu, UniformInterval):
        return float(min(max((x - mu.lo) / (mu.hi - mu.lo), 0.0), 1.0))
    xs, w = mu.atoms()
    k = bisect.bisect_right(xs.tolist(), x)
    return float(w[:k].sum())


def mass(mu: Marginal, lo: float, hi: float) -> float:
    """mu((lo, hi]) on the value axis."""
    if hi <= lo:
        return 0.0
    return cdf(mu, hi) - cdf(mu, lo)


def upper_quantile(mu: Marginal, q: float) -> float:
    """inf{x : mu([0, x]) > q}, or +inf when no such x exists."""
    if isinstance(mu, UniformInterval):
        if q >= 1.0:
            return float("inf")
        return mu.lo + max(q, 0.0) * (mu.hi - mu.lo)
    xs, w = mu.atoms()
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, q, side="right"))
    return float(xs[k]) if k < len(xs) else float("inf")


def grid_masses(mu: Marginal, bins: int = GRID_BINS) -> np.ndarray:
    """Mass of each grid bin [j/bins, (j+1)/bins) under mu."""
    if isinstance(mu, UniformInterval):
        edges = np.linspace(0.0, 1.0, bins + 1)
        lo = np.clip(edges[:-1], mu.lo, mu.hi)
        hi = np.clip(edges[1:], mu.lo, mu.hi)
        return (hi - lo) / (mu.hi - mu.lo)
    xs, w = mu.atoms()
    j = np.minimum((xs * bins).astype(np.int64), bins - 1)
    return np.bincount(j, weights=w, minlength=bins)


# Smooth densities ------------------------------------------------------------

def clip_renormalize(raw: np.ndarray, bin_mass: np.ndarray, sigma: float) -> np.ndarray:
    """Project a nonnegative profile onto densities bounded by 1/sigma.

    Returns v = min(c * raw, 1/sigma) with c chosen so that the density
    integrates to one against the bin masses (water filling).
    """
    raw = np.asarray(raw, dtype=float)
    cap = 1.0 / sigma
    support = (raw > 0) & (bin_mass > 0)
    if bin_mass[support].sum() * cap < 1.0 - 1e-12:
        raise ValueError("profile support is too small for a sigma-smooth density")
    r = raw[support]
    m = bin_mass[support]
    # Saturation level of each bin, ascending.
    with np.errstate(over="ignore"):
        tau = cap / r
    order = np.argsort(tau)
    tau_s, r_s, m_s = tau[order], r[order], m[order]
    sat_mass = np.concatenate(([0.0], np.cumsum(m_s))) * cap
    free = np.concatenate(([0.0], np.cumsum((m_s * r_s)[::-1])))[::-1]
    c = None
    for k in range(len(tau_s) + 1):
        # k bins saturated, the rest scale linearly.
        if free[k] > 0:
            ck = (1.0 - sat_mass[k]) / free[k]
            lo = tau_s[k - 1] if k > 0 else 0.0
            hi = tau_s[k] if k < len(tau_s) else np.inf
            if lo - 1e-15 <= ck <= hi + 1e-15:
                c = ck
                break
    if c is None:
        c = tau_s[-1]
    v = np.zeros_like(raw)
    v[support] = np.minimum(c * r, cap)
    return v


@dataclass
class Density:
    """Piecewise-constant density on the bin grid relative to mu."""

    values: np.ndarray
    sigma: float

    def is_smooth(self) -> bool:
        return bool((self.values <= 1.0 / self.sigma).all())


class DensityPolicy:
    """Adaptive rule returning the density for the next round."""

    def density(self, history: np.ndarray, bin_mass: np.ndarray, sigma: float) -> Density:
        raise NotImplementedError

    @property
    def adaptive(self) -> bool:
        return True


class UniformPolicy(DensityPolicy):
    def density(self, history, bin_mass, sigma):
        return Density(np.ones(len(bin_mass)), sigma)

    @property
    def adaptive(self) -> bool:
        return False


def window_profile(center: float, bin_mass: np.ndarray, sigma: float) -> np.ndarray:
    """Indicator of a contiguous bin window holding mu-mass at least sigma."""
    bins = len(bin_mass)
    j = min(int(center * bins), bins - 1)
    lo, hi = j, j + 1
    total = bin_mass[j]
    while total < sigma - 1e-12 and (lo > 0 or hi < bins):
        if lo > 0 and (hi >= bins or j - lo <= hi - 1 - j):
            lo -= 1
            total += bin_mass[lo]
        else:
            total += bin_mass[hi]
            hi += 1
    raw = np.zeros(bins)
    raw[lo:hi] = 1.0
    return raw


@dataclass
class ConcentratePolicy(DensityPolicy):
    """Puts the maximal density 1/sigma on a window around ``center``."""

    center: float

    def density(self, history, bin_mass, sigma):
        raw = window_profile(self.center, bin_mass, sigma)
        return Density(clip_renormalize(raw, bin_mass, sigma), sigma)

    @property
    def adaptive(self) -> bool:
        return False


@dataclass
class ChaseLastPolicy(DensityPolicy):
    """Concentrates on a window around the previous sample."""

    start: float = 0.5

    def density(self, history, bin_mass, sigma):
        c = float(history[-1]) if len(history) else self.start
        raw = window_profile(c, bin_mass, sigma)
        return Density(clip_renormalize(raw, bin_mass, sigma), sigma)


def sample_from_density(rng, density: Density, bin_mass: np.ndarray, mu: Marginal, n: int) -> np.ndarray:
    p = density.values * bin_mass
    p = p / p.sum()
    j = rng.choice(len(p), size=n, p=p)
    return values_in_bins(rng, j, mu, len(p))


def values_in_bins(rng, j: np.ndarray, mu: Marginal, bins: int) -> np.ndarray:
    """Draw mu conditioned on each bin index in ``j``."""
    if isinstance(mu, UniformInterval):
        lo = np.maximum(j / bins, mu.lo)
        hi = np.minimum((j + 1) / bins, mu.hi)
        return lo + (hi - lo) * rng.random(len(j))
    xs, w = mu.atoms()
    atom_bin = np.minimum((xs * bins).astype(np.int64), bins - 1)
    out = np.empty(len(j))
    for k, jj in enumerate(np.asarray(j).tolist()):
        sel = np.flatnonzero(atom_bin == jj)
        ww = w[sel] / w[sel].sum()
        out[k] = xs[sel[rng.choice(len(sel), p=ww)]] if len(sel) > 1 else xs[sel[0]]
    return out


def density_at(density: Density, x: np.ndarray) -> np.ndarray:
    bins = len(density.values)
    j = np.minimum((np.asarray(x) * bins).astype(np.int64), bins - 1)
    return density.values[j]


# Schedules -------------------------------------------------------------------

@dataclass(frozen=True)
class RoundRobin:
    block: int = 1

    def assignment(self, T: int, K: int) -> np.ndarray:
        return (np.arange(T) // self.block) % K


@dataclass(frozen=True)
class Epochs:
    lengths: tuple

    def __init__(self, lengths: Sequence[int]):
        object.__setattr__(self, "lengths", tuple(int(n) for n in lengths))

    def assignment(self, T: int, K: int) -> np.ndarray:
        out = np.empty(T, dtype=np.int64)
        t = 0
        for k, n in enumerate(self.lengths):
            out[t : t + n] = min(k, K - 1)
            t += n
            if t >= T:
                break
        if t < T:
            out[t:] = min(len(self.lengths) - 1, K - 1)
        return out


@dataclass(frozen=True)
class AdversarialSwitch:
    """Switch to the next marginal when the probe reaches ``threshold``.

    The probe receives each emitted point and returns a scalar, typically a
    learner statistic. Without a probe the time since the last switch is
    used, so a path without a learner switches every ``threshold`` steps.
    """

    threshold: float
    cyclic: bool = True


SchedulePolicy = Union[RoundRobin, Epochs, AdversarialSwitch]


# Selectors for K-selection ---------------------------------------------------

class Selector:
    """Deterministic choice among the K fresh draws of a round."""

    def reset(self, mu: Marginal) -> None:
        self.mu = mu

    def choose(self, candidates: np.ndarray) -> int:
        raise NotImplementedError

    def observe(self, x: float) -> None:
        pass


class FirstSelector(Selector):
    def choose(self, candidates):
        return 0


class MaxSelector(Selector):
    def choose(self, candidates):
        return int(np.argmax(candidates))


class EdgeSelector(Selector):
    """Picks the draw that splits its current cell most unevenly.

    Cells are the threshold classes (lo, hi] induced by the points emitted so
    far; a candidate equal to its cell's upper end does not split and is only
    chosen when no candidate splits.
    """

    def reset(self, mu):
        self.mu = mu
        self.bounds = [1.0]
        self.cdf_bounds = [1.0]
        self.F = _cdf_function(mu)

    def choose(self, candidates):
        best, best_score = 0, -1.0
        for k, v in enumerate(candidates.tolist()):
            i = bisect.bisect_left(self.bounds, v)
            if i >= len(self.bounds) or self.bounds[i] == v:
                score = -0.5
            else:
                lo_c = self.cdf_bounds[i - 1] if i > 0 else 0.0
                hi_c = self.cdf_bounds[i]
                fv = self.F(v)
                tot = hi_c - lo_c
                score = max(fv - lo_c, hi_c - fv) / tot if tot > 0 else 1.0
            if score > best_score:
                best, best_score = k, score
        return best

    def observe(self, x):
        i = bisect.bisect_left(self.bounds, x)
        if i < len(self.bounds) and self.bounds[i] == x:
            return
        self.bounds.insert(i, x)
        self.cdf_bounds.insert(i, self.F(x))


SELECTORS = {"first": FirstSelector, "max": MaxSelector, "edge": EdgeSelector}


def _cdf_function(mu: Marginal) -> Callable[[float], float]:
    if isinstance(mu, UniformInterval):
        lo, hi = mu.lo, mu.hi
        return lambda x: min(max((x - lo) / (hi - lo), 0.0), 1.0)
    xs, w = mu.atoms()
    xl = xs.tolist()
    cum = np.concatenate(([0.0], np.cumsum(w))).tolist()
    return lambda x: cum[bisect.bisect_right(xl, x)]


# Process specs ---------------------------------------------------------------

@dataclass
class DynamicChanging:
    marginals: list
    schedule: SchedulePolicy
    T: int
    seed: int = 0

    @property
    def K(self) -> int:
        return len(self.marginals)


@dataclass
class ProductTypeK:
    marginals: list
    assignment: list
    T: int
    seed: int = 0

    @property
    def K(self) -> int:
        return len(self.marginals)


@dataclass
class SmoothAdversary:
    mu: Marginal
    sigma: float
    density_policy: DensityPolicy
    T: int
    seed: int = 0
    K: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.sigma <= 1.0:
            raise ValueError("sigma must lie in (0, 1]")


@dataclass
class KSelection:
    mu: Marginal
    K: int
    selector: str
    T: int
    seed: int = 0


ProcessSpec = Union[DynamicChanging, ProductTypeK, SmoothAdversary, KSelection]


@dataclass
class SamplePath:
    values: np.ndarray
    coords: np.ndarray
    marginal_ids: np.ndarray
    draws: Optional[np.ndarray] = None
    success: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.values)

    def instances(self, hclass) -> list:
        return [hclass.decode(v, c) for v, c in zip(self.values.tolist(), self.coords.tolist())]


def with_seed(spec: ProcessSpec, seed: int) -> ProcessSpec:
    import dataclasses

    return dataclasses.replace(spec, seed=int(seed))


def with_horizon(spec: ProcessSpec, T: int) -> ProcessSpec:
    import dataclasses

    return dataclasses.replace(spec, T=int(T))


def sample_path(spec: ProcessSpec, probe: Optional[Callable[[float, int], float]] = None) -> SamplePath:
    """Draw a path from the declared process; deterministic in ``spec.seed``."""
    if spec.T < 1:
        raise ValueError("T must be >= 1")
    rng = make_rng(spec.seed, STREAM_PATH)
    if isinstance(spec, DynamicChanging):
        return _sample_dynamic(spec, rng, probe)
    if isinstance(spec, ProductTypeK):
        if len(spec.assignment) < spec.T:
            raise ValueError("assignment shorter than T")
        ids = np.asarray(spec.assignment[: spec.T], dtype=np.int64) - 1
        return _sample_by_assignment(spec.marginals, ids, rng)
    if isinstance(spec, SmoothAdversary):
        path, _, _ = _smooth_path(spec, rng, None)
        return path
    if isinstance(spec, KSelection):
        return k_selection_path(spec)
    raise TypeError(f"unknown process spec {type(spec).__name__}")


def _sample_by_assignment(marginals, ids: np.ndarray, rng) -> SamplePath:
    if ids.min() < 0 or ids.max() >= len(marginals):
        raise ValueError("assignment references a missing marginal")
    T = len(ids)
    values = np.empty(T)
    coords = np.empty(T, dtype=np.int64)
    # One block of draws per marginal keeps streams independent of the order.
    for k, mu in enumerate(marginals):
        sel = np.flatnonzero(ids == k)
        if len(sel):
            v, c = mu.sample(rng, len(sel))
            values[sel], coords[sel] = v, c
    return SamplePath(values, coords, ids + 1)


def _sample_dynamic(spec: DynamicChanging, rng, probe) -> SamplePath:
    K = spec.K
    if isinstance(spec.schedule, (RoundRobin, Epochs)):
        return _sample_by_assignment(spec.marginals, spec.schedule.assignment(spec.T, K), rng)
    sched = spec.schedule
    values = np.empty(spec.T)
    coords = np.empty(spec.T, dtype=np.int64)
    ids = np.empty(spec.T, dtype=np.int64)
    k, since = 0, 0
    for t in range(spec.T):
        v, c = spec.marginals[k].sample(rng, 1)
        values[t], coords[t], ids[t] = v[0], c[0], k
        since += 1
        level = probe(float(v[0]), int(c[0])) if probe is not None else since
        if level >= sched.threshold:
            nxt = (k + 1) % K if sched.cyclic else min(k + 1, K - 1)
            if nxt != k:
                k, since = nxt, 0
    return SamplePath(values, coords, ids + 1)


def decouple_extend(path: SamplePath, spec: DynamicChanging) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Extend a path so that each marginal is used exactly T times.

    Returns the extended values, their marginal ids (1-based) and, for each
    marginal, the index subsequence of its draws in order of use.
    """
    T, K = path.T, spec.K
    rng = make_rng(spec.seed, STREAM_EXTEND)
    vals = [path.values]
    ids = [path.marginal_ids]
    for k in range(K):
        extra = T - int((path.marginal_ids == k + 1).sum())
        if extra:
            v, _ = spec.marginals[k].sample(rng, extra)
            vals.append(v)
            ids.append(np.full(extra, k + 1, dtype=np.int64))
    V = np.concatenate(vals)
    kid = np.concatenate(ids)
    subs = [np.flatnonzero(kid == k + 1) for k in range(K)]
    return V, kid, subs


def _smooth_path(spec: SmoothAdversary, rng, m: Optional[int]):
    mu = spec.mu
    bin_mass = grid_masses(mu)
    T = spec.T
    policy = spec.density_policy
    if m is None and not policy.adaptive:
        dens = policy.density(np.empty(0), bin_mass, spec.sigma)
        assert dens.is_smooth()
        values = sample_from_density(rng, dens, bin_mass, mu, T)
        return SamplePath(values, np.zeros(T, dtype=np.int64), np.ones(T, dtype=np.int64)), None, True
    values = np.empty(T)
    draws = None
    success = True
    if m is not None:
        vx, _ = mu.sample(rng, m * T)
        gate = rng.random(m * T)
        draws = vx
    for t in range(T):
        dens = policy.density(values[:t], bin_mass, spec.sigma)
        assert dens.is_smooth()
        if m is None:
            values[t] = sample_from_density(rng, dens, bin_mass, mu, 1)[0]
            continue
        block = slice(m * t, m * (t + 1))
        accept = spec.sigma * density_at(dens, vx[block]) >= gate[block]
        hit = np.flatnonzero(accept)
        if len(hit):
            values[t] = vx[block][hit[0]]
        else:
            success = False
            values[t] = sample_from_density(rng, dens, bin_mass, mu, 1)[0]
    path = SamplePath(values, np.zeros(T, dtype=np.int64), np.ones(T, dtype=np.int64), draws, success)
    return path, draws, success


def smooth_coupling_sample(spec: SmoothAdversary, m: int) -> tuple[SamplePath, np.ndarray, bool]:
    """Coupled draw of a smooth path from m fresh mu-draws per round.

    Each round accepts a block draw V with probability sigma * v_t(V) and
    emits the first accepted one; if none is accepted the round falls back
    to a fresh draw from the round density and ``success`` becomes False.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = make_rng(spec.seed, STREAM_COUPLING)
    return _smooth_path(spec, rng, m)


def k_selection_path(spec: KSelection) -> SamplePath:
    """Each X_t is chosen by the selector among K fresh draws of mu."""
    if spec.K < 1:
        raise ValueError("K must be >= 1")
    rng = make_rng(spec.seed, STREAM_PATH)
    draws, _ = spec.mu.sample(rng, spec.K * spec.T)
    blocks = draws.reshape(spec.T, spec.K)
    selector = SELECTORS[spec.selector]()
    selector.reset(spec.mu)
    values = np.empty(spec.T)
    for t in range(spec.T):
        k = selector.choose(blocks[t]) if spec.K > 1 else 0
        values[t] = blocks[t, k]
        selector.observe(values[t])
    T = spec.T
    return SamplePath(values, np.zeros(T, dtype=np.int64), np.ones(T, dtype=np.int64), draws)


# JSON ------------------------------------------------------------------------

def marginal_from_json(obj: dict) -> Marginal:
    kind = obj.get("kind")
    if kind == "point":
        return PointMass(float(obj["x"]), int(obj.get("b", 1)))
    if kind == "uniform":
        return UniformInterval(float(obj.get("lo", 0.0)), float(obj.get("hi", 1.0)), int(obj.get("blocks", 1)))
    if kind == "finite":
        return UniformFinite(obj["atoms"])
    if kind == "quantized":
        return Quantized(obj.get("weights"), int(obj.get("bins", GRID_BINS)))
    raise ValueError(f"unknown marginal kind {kind!r}")


def schedule_from_json(obj: dict) -> SchedulePolicy:
    kind = obj.get("kind")
    if kind == "round_robin":
        return RoundRobin(int(obj.get("block", 1)))
    if kind == "epochs":
        return Epochs(obj["lengths"])
    if kind == "adversarial_switch":
        return AdversarialSwitch(float(obj["threshold"]), bool(obj.get("cyclic", True)))
    raise ValueError(f"unknown schedule kind {kind!r}")


def policy_from_json(obj: dict) -> DensityPolicy:
    kind = obj.get("kind", "uniform")
    if kind == "uniform":
        return UniformPolicy()
    if kind == "concentrate":
        return ConcentratePolicy(float(obj["center"]))
    if kind == "chase":
        return ChaseLastPolicy(float(obj.get("start", 0.5)))
    raise ValueError(f"unknown density policy {kind!r}")


def process_from_json(obj: dict, T: int, seed: int) -> ProcessSpec:
    kind = obj.get("kind")
    if kind == "dynamic":
        margs = [marginal_from_json(m) for m in obj["marginals"]]
        sched = schedule_from_json(obj.get("schedule", {"kind": "round_robin", "block": 1}))
        return DynamicChanging(margs, sched, T, seed)
    if kind == "product_type":
        return ProductTypeK([marginal_from_json(m) for m in obj["marginals"]], list(obj["assignment"]), T, seed)
    if kind == "smooth":
        mu = marginal_from_json(obj.get("mu", {"kind": "uniform"}))
        return SmoothAdversary(mu, float(obj["sigma"]), policy_from_json(obj.get("density", {})), T, seed)
    if kind == "k_selection":
        mu = marginal_from_json(obj.get("mu", {"kind": "uniform"}))
        return KSelection(mu, int(obj["K"]), obj.get("selector", "first"), T, seed)
    raise ValueError(f"unknown process kind {kind!r}")
