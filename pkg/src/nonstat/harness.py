"""Monte-Carlo estimation of expected worst-case regret.

One trial draws a feature path, lets a label strategy play against a
learner, and records the learner's cumulative loss minus the best loss in
the class on the same data. Trial i uses the seed derived from (seed, i), so
records do not depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy.optimize import curve_fit

from . import adversaries as adv
from .covering import epsilon_cover_thresholds, tree_max_depth
from .hypotheses import (
    FiniteTable,
    HypothesisClass,
    ProductThresholds,
    Thresholds1D,
    min_cumulative_loss,
    parse_class,
)
from .learners import (
    AdaptiveEpochEWA,
    ERMFollower,
    FixedEpochEWA,
    OneInclusion,
    adaptive_epoch_ewa_autok,
    loss_table,
    make_mixture,
)
from .losses import LOG, LossKind, NotMixable, eval_loss, mixability_eta
from .processes import (
    AdversarialSwitch,
    DynamicChanging,
    KSelection,
    SmoothAdversary,
    UniformInterval,
    derive_seed,
    process_from_json,
    sample_path,
)

LEARNERS = ("ewa", "aee", "aee-autok", "fixed-epoch", "aa", "tbayes", "erm", "oneinc")
LABELS = ("random", "forest", "forest-log", "anti-epoch", "exhaustive", "realizable")
AXES = ("T", "K", "d", "sigma")
CSV_COLUMNS = (
    "experiment_id",
    "T",
    "K",
    "d",
    "sigma",
    "loss",
    "learner",
    "labels",
    "seed",
    "regret",
    "regret_is_lower_bound",
    "epochs",
    "restarts",
    "max_tree_depth",
    "runtime_ms",
)
BOOTSTRAP_RESAMPLES = 1000


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; serializable to JSON.

    ``process`` is a process description as accepted by
    ``process_from_json`` (ignored when the label strategy emits its own
    points). A dynamic process may give ``"marginals": "auto"`` for K
    uniform marginals on the K equal parts of [0, 1]. ``hclass`` is
    ``threshold``, ``product`` (uses ``d``), ``product:<d>`` or
    ``table:<file>``.
    """

    experiment_id: str = "experiment"
    process: Optional[dict] = None
    hclass: str = "threshold"
    learner: str = "aee"
    loss: str = "absolute"
    log_alpha: Optional[float] = None
    labels: str = "random"
    T: int = 1024
    K: int = 1
    d: int = 1
    sigma: float = 1.0
    beta: float = 0.05
    n_trials: int = 10
    seed: int = 0
    threshold_N: Union[str, float] = "auto"
    autok_n: int = 8
    epsilon: Optional[float] = None
    realizable_param: Any = None
    record_depth: bool = False
    sweep_axis: Optional[str] = None
    sweep_values: list = field(default_factory=list)

    def validate(self) -> None:
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.K < 1 or self.d < 1:
            raise ConfigError("K and d must be >= 1")
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}; expected one of {LEARNERS}")
        if self.labels not in LABELS:
            raise ConfigError(f"unknown labels {self.labels!r}; expected one of {LABELS}")
        if self.learner == "tbayes" and self.loss != LOG:
            raise ConfigError("truncated Bayes needs the log-loss")
        if self.learner == "aa":
            try:
                mixability_eta(self.make_loss())
            except NotMixable as exc:
                raise ConfigError(str(exc)) from None
        if self.labels == "exhaustive" and self.T > adv.MAX_EXHAUSTIVE_T:
            raise ConfigError(f"exhaustive labels need T <= {adv.MAX_EXHAUSTIVE_T}")
        if self.sweep_axis is not None:
            if self.sweep_axis not in AXES:
                raise ConfigError(f"sweep axis must be one of {AXES}")
            vals = list(self.sweep_values)
            if not vals or any(v <= 0 for v in vals) or vals != sorted(vals):
                raise ConfigError("sweep values must be positive and sorted")
        if self.threshold_N != "auto":
            try:
                if float(self.threshold_N) <= 0:
                    raise ConfigError("threshold_N must be positive")
            except (TypeError, ValueError):
                raise ConfigError(f"bad threshold_N {self.threshold_N!r}") from None
        needs_process = self.labels in ("random", "exhaustive", "realizable")
        if needs_process and self.process is None:
            raise ConfigError(f"labels {self.labels!r} need a process")
        try:
            self.make_loss()
            self.make_class()
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from None

    def make_loss(self) -> LossKind:
        alpha = self.log_alpha if self.log_alpha is not None else min(1.0 / self.T, 0.25)
        return LossKind(self.loss, alpha)

    def make_class(self) -> HypothesisClass:
        if self.labels == "anti-epoch":
            return adv.anti_epoch_class()
        if self.hclass == "product":
            return ProductThresholds(self.d)
        return parse_class(self.hclass)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError:
            raise
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"bad config file {path}: {exc}") from None

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def with_axis(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """The config with one sweep parameter replaced."""
    if axis not in AXES:
        raise ConfigError(f"sweep axis must be one of {AXES}")
    value = float(value) if axis == "sigma" else int(value)
    return dataclasses.replace(config, **{axis: value, "sweep_axis": None, "sweep_values": []})


@dataclass
class RegretRecord:
    experiment_id: str
    config_hash: str
    trial: int
    seed: int
    T: int
    K: int
    d: int
    sigma: float
    loss: str
    learner: str
    labels: str
    regret: float
    regret_is_lower_bound: bool
    epochs: int
    restarts: int
    max_tree_depth: Optional[int]
    runtime_ms: float
    learner_loss: float = 0.0
    best_loss: float = 0.0

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in CSV_COLUMNS}
        out["regret"] = repr(float(self.regret))
        out["sigma"] = repr(float(self.sigma))
        out["regret_is_lower_bound"] = int(self.regret_is_lower_bound)
        out["max_tree_depth"] = "" if self.max_tree_depth is None else self.max_tree_depth
        out["runtime_ms"] = f"{self.runtime_ms:.3f}"
        return out


@dataclass
class ScalingFit:
    axis: str
    exponent: float
    intercept: float
    r_squared: float


# Building blocks -------------------------------------------------------------


def _process_spec(config: ExperimentConfig, seed: int):
    obj = dict(config.process)
    kind = obj.get("kind")
    if kind == "dynamic" and obj.get("marginals") == "auto":
        K = config.K
        obj["marginals"] = [{"kind": "uniform", "lo": k / K, "hi": (k + 1) / K} for k in range(K)]
    if kind == "k_selection":
        obj["K"] = config.K
    if kind == "smooth":
        obj["sigma"] = config.sigma
    try:
        return process_from_json(obj, config.T, seed)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad process description: {exc}") from None


def reference_measure(spec) -> Any:
    """The known reference measure of a process, uniform when there is none."""
    if isinstance(spec, (SmoothAdversary, KSelection)):
        return spec.mu
    return UniformInterval()


def default_epsilon(T: int, sigma: float) -> float:
    """sigma^2 / (2 T^2 ln^2(T / beta)) with beta = 1/T."""
    return sigma * sigma / (2.0 * T * T * math.log(T * T) ** 2) if T > 1 else 0.25


def make_learner(config: ExperimentConfig, hclass: HypothesisClass, loss: LossKind, reference=None):
    name = config.learner
    N = None if config.threshold_N == "auto" else float(config.threshold_N)
    if name == "aee":
        return AdaptiveEpochEWA(hclass, N, loss, T=config.T, K=config.K)
    if name == "aee-autok":
        return adaptive_epoch_ewa_autok(hclass, loss, config.T, n=config.autok_n)
    if name == "fixed-epoch":
        return FixedEpochEWA(hclass, loss)
    if name in ("ewa", "aa", "tbayes"):
        if isinstance(hclass, FiniteTable):
            return make_mixture(hclass, name, loss)
        eps = config.epsilon if config.epsilon is not None else default_epsilon(config.T, config.sigma)
        ref = reference if reference is not None else UniformInterval()
        cover = epsilon_cover_thresholds(ref, eps)
        return make_mixture(hclass, name, loss, [cover] * hclass.n_blocks)
    if name == "erm":
        return ERMFollower(hclass)
    if name == "oneinc":
        return OneInclusion(hclass)
    raise ConfigError(f"unknown learner {name!r}")


def fixed_epoch_lengths(T: int) -> list[int]:
    starts = FixedEpochEWA.epoch_starts(T) + [T + 1]
    return [b - a for a, b in zip(starts[:-1], starts[1:])]


def make_strategy(config: ExperimentConfig, seed: int, hclass: HypothesisClass) -> adv.LabelStrategy:
    name = config.labels
    if name == "random":
        return adv.UniformRandom(seed)
    if name == "realizable":
        param = config.realizable_param
        if param is None:
            param = hclass.default_param()
        if isinstance(param, list):
            param = tuple(param)
        return adv.RealizableLabels(hclass, param)
    if name == "forest":
        return adv.ForestMajority(config.K, config.d, seed)
    if name == "forest-log":
        return adv.ForestPrediction(config.K, config.d, seed)
    if name == "anti-epoch":
        return adv.AntiEpoch(fixed_epoch_lengths(config.T), seed)
    if name == "exhaustive":
        return adv.Exhaustive()
    raise ConfigError(f"unknown labels {name!r}")


def best_in_class_loss(hclass: HypothesisClass, values, coords, ys, loss: LossKind) -> float:
    """Exact minimum cumulative loss over the class on (x^T, y^T)."""
    if len(values) != len(ys):
        raise ValueError("values and labels differ in length")
    return min_cumulative_loss(hclass, values, coords, ys, loss_table(loss))


# Trials ----------------------------------------------------------------------


def _play_online(learner, strategy, T: int):
    values = np.empty(T)
    coords = np.empty(T, dtype=np.int64)
    preds = np.empty(T)
    ys = np.empty(T, dtype=np.int64)
    for t in range(T):
        v, c = strategy.instance(t)
        values[t], coords[t] = v, c
        preds[t] = learner.predict(v, c)
        ys[t] = strategy.label(t, preds[t])
        learner.update(int(ys[t]))
    return values, coords, ys, preds


def _play_fixed(learner, values, coords, ys):
    if hasattr(learner, "run"):
        return learner.run(values, coords, ys)
    preds = np.empty(len(values))
    for t, (v, c, y) in enumerate(zip(values.tolist(), coords.tolist(), ys.tolist())):
        preds[t] = learner.predict(v, c)
        learner.update(y)
    return preds


def run_trial(config: ExperimentConfig, trial: int) -> RegretRecord:
    start = time.perf_counter()
    seed = derive_seed(config.seed, trial)
    hclass = config.make_class()
    loss = config.make_loss()
    strategy = make_strategy(config, seed, hclass)
    spec = None
    if not strategy.owns_path:
        spec = _process_spec(config, seed)
        probe = None
        if isinstance(spec, DynamicChanging) and isinstance(spec.schedule, AdversarialSwitch):
            if config.learner in ("aee", "aee-autok"):
                shadow = make_learner(config, hclass, loss)
                probe = shadow.observe_instance
        path = sample_path(spec, probe)
        if (path.coords >= hclass.n_blocks).any() or (
            isinstance(hclass, FiniteTable) and (path.values >= len(hclass.instances)).any()
        ):
            raise ConfigError("process emits points outside the class domain")
        strategy.prepare(config.T, path)
    else:
        strategy.prepare(config.T)
    learner = make_learner(config, hclass, loss, reference_measure(spec) if spec is not None else None)

    if strategy.is_exhaustive:
        values, coords = path.values, path.coords
        ys, _ = adv.exhaustive_worst_labels(learner, hclass, values, coords, loss)
        learner = make_learner(config, hclass, loss, reference_measure(spec))
        preds = _play_fixed(learner, values, coords, ys)
    elif strategy.adaptive and getattr(strategy, "decisive_round", None) is not None and hasattr(learner, "run"):
        # One adaptive round: its prediction depends on the earlier rounds
        # only, so a batch run of the prefix settles the label sequence.
        values, coords = strategy.instances()
        s = strategy.decisive_round
        head = make_learner(config, hclass, loss)
        p = head.run(values[: s + 1], coords[: s + 1], np.asarray(strategy.labels()[: s + 1]))[s]
        strategy.label(s, float(p))
        ys = np.asarray(strategy.labels(), dtype=np.int64)
        preds = _play_fixed(learner, values, coords, ys)
    elif strategy.adaptive:
        values, coords, ys, preds = _play_online(learner, strategy, config.T)
    else:
        values, coords = strategy.instances()
        ys = np.asarray(strategy.labels(), dtype=np.int64)
        preds = _play_fixed(learner, values, coords, ys)

    learner_loss = float(np.sum(eval_loss(loss, preds, ys)))
    best = best_in_class_loss(hclass, values, coords, ys, loss)
    depth = None
    if config.record_depth or isinstance(spec, KSelection):
        if isinstance(hclass, Thresholds1D):
            depth = tree_max_depth(values)
    return RegretRecord(
        experiment_id=config.experiment_id,
        config_hash=config.config_hash(),
        trial=trial,
        seed=seed,
        T=config.T,
        K=config.K,
        d=config.d,
        sigma=config.sigma,
        loss=config.loss,
        learner=config.learner,
        labels=config.labels,
        regret=learner_loss - best,
        regret_is_lower_bound=not strategy.is_exhaustive,
        epochs=int(getattr(learner, "epochs", 1)),
        restarts=int(getattr(learner, "restarts", 0)),
        max_tree_depth=depth,
        runtime_ms=(time.perf_counter() - start) * 1000.0,
        learner_loss=learner_loss,
        best_loss=best,
    )


def worker_count() -> int:
    cap = os.environ.get("NONSTAT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, int(cap))
        except ValueError:
            raise ConfigError(f"NONSTAT_THREADS must be an integer, got {cap!r}") from None
    return n


def _run_chunk(args):
    config, trials = args
    return [run_trial(config, i) for i in trials]


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> list[RegretRecord]:
    """All trials of one configuration, ordered by trial index."""
    config.validate()
    n = config.n_trials
    workers = min(workers if workers is not None else worker_count(), n)
    if workers <= 1:
        return [run_trial(config, i) for i in range(n)]
    chunks = [(config, list(range(w, n, workers))) for w in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, chunks))
    records = [r for part in parts for r in part]
    return sorted(records, key=lambda r: r.trial)


def run_sweep(config: ExperimentConfig, axis: Optional[str] = None, values: Optional[Sequence] = None, workers=None):
    """Records per sweep value, in sweep order."""
    axis = axis or config.sweep_axis
    values = list(values if values is not None else config.sweep_values)
    if axis is None or not values:
        raise ConfigError("a sweep needs an axis and values")
    probe = dataclasses.replace(config, sweep_axis=axis, sweep_values=values)
    probe.validate()
    return {v: run_experiment(with_axis(config, axis, v), workers) for v in values}


# Statistics ------------------------------------------------------------------


def bootstrap_se(x: Sequence[float], n_resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> float:
    """Standard error of the mean by resampling trials with replacement."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(x), size=(n_resamples, len(x)))
    return float(x[idx].mean(axis=1).std(ddof=1))


@dataclass
class Summary:
    mean: float
    se: float
    n: int


def summarize(records: Sequence[RegretRecord], seed: int = 0) -> Summary:
    r = [rec.regret for rec in records]
    return Summary(float(np.mean(r)), bootstrap_se(r, seed=seed), len(r))


def fit_scaling(xs: Sequence[float], means: Sequence[float], axis: str = "T") -> ScalingFit:
    """Least squares of ln(mean) on ln(x)."""
    xs = np.asarray(xs, dtype=float)
    means = np.asarray(means, dtype=float)
    if len(xs) < 3 or len(xs) != len(means):
        raise ValueError("a scaling fit needs at least 3 sweep points")
    if (means <= 0).any() or (xs <= 0).any():
        raise ValueError("scaling fit needs positive values")
    lx, ly = np.log(xs), np.log(means)
    slope, intercept = np.polyfit(lx, ly, 1)
    return ScalingFit(axis, float(slope), float(intercept), _r_squared(ly, slope * lx + intercept))


def fit_scaling_records(groups: dict, axis: str) -> ScalingFit:
    keys = sorted(groups)
    return fit_scaling(keys, [np.mean([r.regret for r in groups[k]]) for k in keys], axis)


def _r_squared(y: np.ndarray, yhat: np.ndarray) -> float:
    ss_res = float(((y - yhat) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot <= 1e-300:
        return 1.0 if ss_res <= 1e-18 else 0.0
    return float(min(max(1.0 - ss_res / ss_tot, 0.0), 1.0))


@dataclass
class ModelFit:
    name: str
    params: tuple
    r_squared: float
    aic: float


def _aic(rss: float, n: int, k: int) -> float:
    return n * math.log(max(rss, 1e-300) / n) + 2 * k


def fit_log_model(u: Sequence[float], y: Sequence[float]) -> ModelFit:
    """y = a + b u, with u a logarithm such as ln(T / sigma)."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    b, a = np.polyfit(u, y, 1)
    yhat = a + b * u
    return ModelFit("log", (float(a), float(b)), _r_squared(y, yhat), _aic(float(((y - yhat) ** 2).sum()), len(y), 2))


def fit_power_model(x: Sequence[float], y: Sequence[float]) -> ModelFit:
    """y = c x^p by nonlinear least squares in the original scale."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p0, c0 = 0.5, float(np.mean(y) / np.mean(np.sqrt(x)))
    if (y > 0).all():
        p0, lc = np.polyfit(np.log(x), np.log(y), 1)
        c0 = math.exp(lc)
    (c, p), _ = curve_fit(lambda x, c, p: c * np.power(x, p), x, y, p0=(c0, p0), maxfev=20000)
    yhat = c * np.power(x, p)
    return ModelFit("power", (float(c), float(p)), _r_squared(y, yhat), _aic(float(((y - yhat) ** 2).sum()), len(y), 2))


# Output ----------------------------------------------------------------------


def records_csv(records: Sequence[RegretRecord], include_runtime: bool = True) -> str:
    cols = CSV_COLUMNS if include_runtime else tuple(c for c in CSV_COLUMNS if c != "runtime_ms")
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def write_csv(records: Sequence[RegretRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(records_csv(records))
    return path


def write_json(obj, path: Union[str, Path]) -> Path:
    """JSON mirror of records, fits or summaries."""
    path = Path(path)

    def conv(o):
        if dataclasses.is_dataclass(o):
            return dataclasses.asdict(o)
        if isinstance(o, (np.integer, np.floating)):
            return o.item()
        raise TypeError(f"cannot serialize {type(o).__name__}")

    items = [dataclasses.asdict(o) if dataclasses.is_dataclass(o) else o for o in obj] if isinstance(obj, list) else obj
    path.write_text(json.dumps(items, indent=2, default=conv, sort_keys=True))
    return path


def read_csv(path: Union[str, Path]) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def svg_plot(
    xs: Sequence[float],
    means: Sequence[float],
    ses: Sequence[float],
    fit: Optional[ScalingFit] = None,
    xlabel: str = "T",
    ylabel: str = "regret",
    width: int = 480,
    height: int = 360,
) -> str:
    """Log-log plot with one marker and error bar per point and the fitted line."""
    xs = np.asarray(xs, dtype=float)
    means = np.asarray(means, dtype=float)
    ses = np.asarray(ses, dtype=float)
    pad = 50
    lo_y = np.maximum(means - 2 * ses, means * 0.05)
    hi_y = means + 2 * ses
    lx = np.log10(xs)
    x0, x1 = lx.min(), lx.max()
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = np.log10(lo_y.min()), np.log10(hi_y.max())
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return pad + (math.log10(v) - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (math.log10(v) - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line class="axis" x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line class="axis" x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="13">{xlabel} (log)</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{ylabel} (log)</text>',
    ]
    for x, m, lo, hi in zip(xs, means, lo_y, hi_y):
        parts.append(
            f'<line class="errorbar" x1="{px(x):.2f}" y1="{py(lo):.2f}" x2="{px(x):.2f}" y2="{py(hi):.2f}" stroke="gray"/>'
        )
        parts.append(f'<circle class="point" cx="{px(x):.2f}" cy="{py(m):.2f}" r="4" fill="steelblue"/>')
    if fit is not None:
        a, b = xs.min(), xs.max()
        fa = math.exp(fit.intercept) * a**fit.exponent
        fb = math.exp(fit.intercept) * b**fit.exponent
        parts.append(
            f'<line class="fit" x1="{px(a):.2f}" y1="{py(fa):.2f}" x2="{px(b):.2f}" y2="{py(fb):.2f}" '
            f'stroke="firebrick" stroke-dasharray="5,3"/>'
        )
        parts.append(
            f'<text x="{width - pad}" y="{pad - 10}" text-anchor="end" font-size="12">'
            f"slope {fit.exponent:.3f}, r2 {fit.r_squared:.3f}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def group_rows(rows: Sequence[dict], axis: str) -> dict:
    groups: dict = {}
    for row in rows:
        groups.setdefault(float(row[axis]), []).append(float(row["regret"]))
    return groups


def plot_rows(rows: Sequence[dict], axis: Optional[str] = None) -> tuple[str, Optional[ScalingFit]]:
    """SVG for CSV rows grouped by the axis that varies (or the given one)."""
    if axis is None:
        varying = [a for a in AXES if len({row[a] for row in rows}) > 1]
        axis = varying[0] if varying else "T"
    groups = group_rows(rows, axis)
    xs = sorted(groups)
    means = [float(np.mean(groups[x])) for x in xs]
    ses = [bootstrap_se(groups[x]) for x in xs]
    fit = None
    if len(xs) >= 3 and min(means) > 0:
        fit = fit_scaling(xs, means, axis)
    return svg_plot(xs, means, ses, fit, xlabel=axis), fit


def emit(records: Sequence[RegretRecord], out_dir: Union[str, Path], stem: str = "results", fits=None) -> dict:
    """Write CSV, JSON and (for sweeps) SVG outputs; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": write_csv(records, out_dir / f"{stem}.csv"),
        "json": write_json(list(records), out_dir / f"{stem}.json"),
    }
    if fits:
        paths["fits"] = write_json(list(fits), out_dir / f"{stem}_fits.json")
    rows = [{k: str(v) for k, v in r.row().items()} for r in records]
    if rows and any(len({row[a] for row in rows}) > 1 for a in AXES):
        svg, _ = plot_rows(rows)
        paths["svg"] = out_dir / f"{stem}.svg"
        paths["svg"].write_text(svg)
    return paths
