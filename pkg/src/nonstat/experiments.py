"""Acceptance experiments, one builder per criterion.

Every builder takes a master seed and returns a :class:`CriterionResult`
holding the measured values, the pass flag and a CSV table (runtime
excluded) that must be byte-identical when the builder is rerun with the
same seed. ``python3 -m nonstat.experiments`` runs them all.
"""

from __future__ import annotations

import csv
import io
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import adversaries as adv
from .covering import (
    FlipSetCover,
    TreeCover,
    cover_failures,
    depth_recipe,
    flip_budget_recipe,
    tree_max_depth,
)
from .harness import (
    ExperimentConfig,
    fit_log_model,
    fit_power_model,
    fit_scaling,
    records_csv,
    run_experiment,
    summarize,
)
from .hypotheses import ProductThresholds, Thresholds1D, auto_threshold
from .learners import AdaptiveEpochEWA, AggregatingForecaster, ExpertForecaster, OneInclusion, ewa_regret_bound
from .losses import LossKind, eval_loss
from .processes import (
    AdversarialSwitch,
    DynamicChanging,
    Epochs,
    KSelection,
    RoundRobin,
    UniformInterval,
    derive_seed,
    sample_path,
)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    csv: str
    values: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} [{status}] {self.title}: {self.summary} ({self.runtime_s:.1f}s)"


def table_csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# 1 and 2: explicit experts ---------------------------------------------------

EXPERT_M = (2, 8, 64)
EXPERT_T = (64, 256, 1024)


def _expert_regrets(m: int, T: int, n: int, adversarial: bool, make, loss: LossKind, rng) -> np.ndarray:
    """Regret of a batched forecaster on n sequences.

    Random sequences draw expert predictions and labels uniformly.
    Adversarial ones label every round against the forecaster (1 when it
    predicts below one half); half of them use constant 0/1 experts and
    half random binary experts.
    """
    fc = make(m, loss, (n,))
    learner = np.zeros(n)
    experts = np.zeros((n, m))
    const = np.tile(np.arange(m) % 2, (n, 1)).astype(float)
    for _ in range(T):
        if adversarial:
            preds = rng.integers(0, 2, size=(n, m)).astype(float)
            preds[: n // 2] = const[: n // 2]
        else:
            preds = rng.random((n, m))
        p = fc.predict(preds)
        y = (p < 0.5).astype(np.int64) if adversarial else rng.integers(0, 2, size=n)
        learner += eval_loss(loss, p, y)
        experts += eval_loss(loss, preds, y[:, None])
        fc.update(preds, y)
    return learner - experts.min(axis=1)


def _expert_grid(number, title, seed, make, loss, bound, n_random, n_adv) -> CriterionResult:
    rows, violations, worst = [], 0, -math.inf
    for i, m in enumerate(EXPERT_M):
        for j, T in enumerate(EXPERT_T):
            b = bound(T, m)
            for kind, n in (("random", n_random), ("adversarial", n_adv)):
                rng = np.random.default_rng(derive_seed(seed, number, i, j, kind == "adversarial"))
                reg = _expert_regrets(m, T, n, kind == "adversarial", make, loss, rng)
                v = int((reg > b).sum())
                violations += v
                worst = max(worst, float((reg / b).max()))
                rows.append((m, T, kind, n, float(reg.max()), float(reg.mean()), b, v))
    cols = ("m", "T", "sequences", "n", "max_regret", "mean_regret", "bound", "violations")
    summary = f"{violations} violations, max regret/bound {worst:.3f}"
    return CriterionResult(number, title, violations == 0, summary, table_csv(cols, rows),
                           {"violations": violations, "max_ratio": worst})


def criterion_1(seed: int = 0) -> CriterionResult:
    return _expert_grid(
        1, "EWA deterministic bound", seed, ExpertForecaster, LossKind("absolute"), ewa_regret_bound, 1000, 100
    )


def criterion_2(seed: int = 0) -> CriterionResult:
    def make(m, loss, batch):
        return AggregatingForecaster(m, loss, batch)

    return _expert_grid(
        2, "aggregating algorithm log-loss bound", seed, make, LossKind("log", 0.01),
        lambda T, m: math.log(m) + 1e-9, 1000, 100,
    )


# 3 and 4: forest process -----------------------------------------------------


def _sweep(base: ExperimentConfig, axis: str, values, workers) -> dict:
    import dataclasses

    return {v: run_experiment(dataclasses.replace(base, **{axis: v}), workers) for v in values}


def criterion_3(seed: int = 0, workers: Optional[int] = None) -> CriterionResult:
    base = ExperimentConfig("c3_T", labels="forest", hclass="product", learner="aee", K=2, d=1, n_trials=200, seed=seed)
    Ts = [2**k for k in range(10, 17)]
    by_T = _sweep(base, "T", Ts, workers)
    fit_T = fit_scaling(Ts, [summarize(by_T[T]).mean for T in Ts], "T")
    base_K = ExperimentConfig("c3_K", labels="forest", hclass="product", learner="aee", T=2**14, d=1, n_trials=200,
                              seed=seed)
    Ks = [1, 2, 4, 8]
    by_K = _sweep(base_K, "K", Ks, workers)
    fit_K = fit_scaling(Ks, [summarize(by_K[K]).mean for K in Ks], "K")
    ok = 0.40 <= fit_T.exponent <= 0.60 and 0.35 <= fit_K.exponent <= 0.65
    recs = [r for v in Ts for r in by_T[v]] + [r for v in Ks for r in by_K[v]]
    summary = (f"T-exponent {fit_T.exponent:.3f} (r2 {fit_T.r_squared:.3f}), "
               f"K-exponent {fit_K.exponent:.3f} (r2 {fit_K.r_squared:.3f})")
    return CriterionResult(3, "adaptive epoch-EWA sqrt scaling", ok, summary, records_csv(recs, False),
                           {"fit_T": fit_T, "fit_K": fit_K})


def criterion_4(seed: int = 0, workers: Optional[int] = None) -> CriterionResult:
    T = 2**12
    recs, rows, ok, worst = [], [], True, math.inf
    for learner in ("ewa", "aee"):
        for K in (1, 2, 4):
            for d in (1, 2, 4):
                adv.check_forest_constraint(K, d, T)
                cfg = ExperimentConfig("c4", labels="forest", hclass="product", learner=learner, K=K, d=d, T=T,
                                       n_trials=500, seed=seed)
                r = run_experiment(cfg, workers)
                s = summarize(r)
                target = math.sqrt(K * d * T) / 8.0
                good = s.mean - 2 * s.se >= target
                ok &= good
                worst = min(worst, (s.mean - 2 * s.se) / target)
                rows.append((learner, K, d, s.mean, s.se, target, int(good)))
                recs.extend(r)
    summary = f"min (mean - 2 SE) / target = {worst:.2f} over 18 configurations"
    return CriterionResult(4, "forest lower bound", ok, summary, records_csv(recs, False),
                           {"rows": rows, "min_ratio": worst})


# 5: epoch counts -------------------------------------------------------------


def _auto_marginals(K: int) -> list:
    return [UniformInterval(k / K, (k + 1) / K) for k in range(K)]


def epoch_count(K: int, T: int, schedule, seed: int) -> int:
    """Epochs of adaptive epoch-EWA on one U_K^1 path.

    Epoch boundaries depend on the instances only, so the segmentation is
    all that is run. For the adversarial switch the learner itself is the
    probe the process reacts to.
    """
    hclass = Thresholds1D()
    learner = AdaptiveEpochEWA(hclass, None, LossKind("absolute"), T=T, K=K)
    spec = DynamicChanging(_auto_marginals(K), schedule, T, seed)
    if isinstance(schedule, AdversarialSwitch):
        sample_path(spec, learner.observe_instance)
    else:
        path = sample_path(spec)
        learner.segment(path.values, path.coords)
    return learner.epochs


def criterion_5(seed: int = 0, n_trials: int = 200) -> CriterionResult:
    T = 2**14
    rows, fractions, ok = [], {}, True
    for K in (1, 2, 4):
        N = auto_threshold(T, 1, K)
        schedules = {
            "round_robin": RoundRobin(1),
            "epochs": Epochs([T // K] * K),
            "adversarial_switch": AdversarialSwitch(N / 2, True),
        }
        for name, sched in schedules.items():
            counts = []
            for i in range(n_trials):
                s = derive_seed(seed, 5, K, i)
                e = epoch_count(K, T, sched, s)
                counts.append(e)
                rows.append((K, name, i, s, e))
            frac = float(np.mean(np.array(counts) <= 8 * K))
            fractions[(K, name)] = (frac, max(counts))
            ok &= frac >= 0.95
    worst = min(f for f, _ in fractions.values())
    most = max(m / K for (K, _), (_, m) in fractions.items())
    summary = f"min fraction within 8K = {worst:.3f}, max epochs / K = {most:.2f}"
    return CriterionResult(5, "epoch count", ok, summary, table_csv(("K", "schedule", "trial", "seed", "epochs"), rows),
                           {"fractions": fractions})


# 6: anti-epoch ---------------------------------------------------------------


def criterion_6(seed: int = 0, workers: Optional[int] = None) -> CriterionResult:
    T = 2**14
    out = {}
    recs = []
    for learner in ("fixed-epoch", "aee"):
        r = run_experiment(ExperimentConfig("c6", labels="anti-epoch", learner=learner, T=T, n_trials=200, seed=seed),
                           workers)
        out[learner] = summarize(r)
        recs.extend(r)
    lo = 0.1 * T ** (2 / 3)
    hi = 3 * math.sqrt(T * math.log(T))
    f, a = out["fixed-epoch"], out["aee"]
    ok = f.mean - 2 * f.se >= lo and a.mean + 2 * a.se <= hi
    summary = f"fixed-epoch {f.mean:.1f} (>= {lo:.1f}), adaptive {a.mean:.1f} (<= {hi:.1f})"
    return CriterionResult(6, "anti-epoch family", ok, summary, records_csv(recs, False),
                           {"fixed": f, "adaptive": a})


# 7: one-inclusion ------------------------------------------------------------


def criterion_7(seed: int = 0, n: int = 2000) -> CriterionResult:
    T = 1024
    ts = [2**k for k in range(4, 11)]
    classes = [("threshold", Thresholds1D())] + [(f"product:{d}", ProductThresholds(d)) for d in (1, 2, 3)]
    rows, ok, worst = [], True, -math.inf
    for ci, (name, H) in enumerate(classes):
        nb = H.n_blocks
        errs = np.zeros(T)
        for i in range(n):
            rng = np.random.default_rng(derive_seed(seed, 7, ci, i))
            v = rng.random(T)
            c = rng.integers(0, nb, T) if nb > 1 else np.zeros(T, dtype=np.int64)
            a = rng.random(nb)
            y = (v >= a[c]).astype(np.int64)
            errs += OneInclusion(H).run(v, c, y) != y
        rate = errs / n
        for t in ts:
            bound = H.vc / t + 3 * math.sqrt(H.vc / (t * n))
            good = rate[t - 1] <= bound
            ok &= bool(good)
            worst = max(worst, rate[t - 1] / bound)
            rows.append((name, t, rate[t - 1], bound, int(good)))
    summary = f"max error/bound {worst:.3f} over {len(rows)} (class, t) pairs"
    return CriterionResult(7, "one-inclusion error rate", ok, summary,
                           table_csv(("class", "t", "error_rate", "bound", "ok"), rows), {"max_ratio": worst})


# 8: ERM follower -------------------------------------------------------------

STAIRCASE_THRESHOLD = 0.25


def staircase_process(K: int, T: int) -> dict:
    """K uniform marginals on disjoint intervals stepping down towards the
    threshold 1/4, visited in K equal epochs: every new marginal starts
    below all earlier positives, so ERM mistakes restart in each epoch."""
    a = STAIRCASE_THRESHOLD
    margs = [{"kind": "uniform", "lo": a + (1 - a) * 2.0 ** -(k + 1), "hi": a + (1 - a) * 2.0**-k} for k in range(K)]
    return {"kind": "dynamic", "marginals": margs, "schedule": {"kind": "epochs", "lengths": [T // K] * K}}


def criterion_8(seed: int = 0, workers: Optional[int] = None) -> CriterionResult:
    Ks = (1, 2, 4)
    Ts = [2**k for k in range(10, 15)]
    means, recs = {}, []
    for K in Ks:
        for T in Ts:
            cfg = ExperimentConfig("c8", process=staircase_process(K, T), labels="realizable",
                                   realizable_param=STAIRCASE_THRESHOLD, learner="erm", K=K, T=T, n_trials=200,
                                   seed=seed)
            r = run_experiment(cfg, workers)
            means[(K, T)] = summarize(r).mean
            recs.extend(r)
    exps = {K: fit_scaling(Ts, [means[(K, T)] for T in Ts], "T").exponent for K in Ks}
    spreads = {}
    for T in Ts:
        per_k = [means[(K, T)] / K for K in Ks]
        spreads[T] = max(per_k) / min(per_k)
    ok = max(exps.values()) <= 0.25 and max(spreads.values()) <= 2.0
    summary = (f"max T-exponent {max(exps.values()):.3f}, max spread of mistakes/K {max(spreads.values()):.2f}")
    return CriterionResult(8, "ERM follower mistakes", ok, summary, records_csv(recs, False),
                           {"exponents": exps, "spreads": spreads, "means": means})


# 9: realization-tree depth ---------------------------------------------------


def criterion_9(seed: int = 0, n_trials: int = 400, beta: float = 0.05) -> CriterionResult:
    rows, ok, worst, deepest = [], True, 0.0, 0
    for K in (2, 4):
        for T in (2**10, 2**12):
            bound = depth_recipe(K, T, beta)
            fails = 0
            for i in range(n_trials):
                s = derive_seed(seed, 9, K, T, i)
                depth = tree_max_depth(sample_path(KSelection(UniformInterval(), K, "edge", T, s)).values)
                fails += depth > bound
                deepest = max(deepest, depth / bound)
                rows.append((K, T, i, s, depth, bound))
            rate = fails / n_trials
            worst = max(worst, rate)
            ok &= rate <= beta
    summary = f"max failure rate {worst:.4f} (beta {beta}), max depth/bound {deepest:.3f}"
    return CriterionResult(9, "realization-tree depth", ok, summary,
                           table_csv(("K", "T", "trial", "seed", "max_depth", "bound"), rows),
                           {"failure_rate": worst, "max_depth_ratio": deepest})


# 10: smooth truncated Bayes --------------------------------------------------


def criterion_10(seed: int = 0, n_trials: int = 50, workers: Optional[int] = None) -> CriterionResult:
    sigmas = (1.0, 0.5, 0.1)
    Ts = [2**k for k in range(10, 15)]
    u, x, y, recs = [], [], [], []
    for s in sigmas:
        for T in Ts:
            cfg = ExperimentConfig("c10", process={"kind": "smooth", "density": {"kind": "concentrate", "center": 0.5}},
                                   sigma=s, T=T, labels="realizable", realizable_param=0.5, learner="tbayes",
                                   loss="log", n_trials=n_trials, seed=seed)
            r = run_experiment(cfg, workers)
            recs.extend(r)
            u.append(math.log(T / s))
            x.append(T / s)
            y.append(summarize(r).mean)
    log_fit = fit_log_model(u, y)
    pow_fit = fit_power_model(x, y)
    ok = log_fit.r_squared >= 0.8 and log_fit.aic < pow_fit.aic
    summary = (f"log model slope {log_fit.params[1]:.3f} r2 {log_fit.r_squared:.3f} AIC {log_fit.aic:.2f}; "
               f"power AIC {pow_fit.aic:.2f}")
    return CriterionResult(10, "smooth truncated Bayes log scaling", ok, summary, records_csv(recs, False),
                           {"log": log_fit, "power": pow_fit})


# 11: coupon-collector log-loss -----------------------------------------------


def criterion_11(seed: int = 0, workers: Optional[int] = None) -> CriterionResult:
    T = 2**12
    rows, recs, ok, worst = [], [], True, math.inf
    for K in (2, 4):
        for d in (2, 4):
            adv.check_logloss_constraint(K, d, T)
            cfg = ExperimentConfig("c11", labels="forest-log", hclass="product", learner="tbayes", loss="log", K=K,
                                   d=d, T=T, n_trials=200, seed=seed)
            r = run_experiment(cfg, workers)
            s = summarize(r)
            target = 0.3 * K * d
            good = s.mean - 2 * s.se >= target
            ok &= good
            worst = min(worst, (s.mean - 2 * s.se) / target)
            rows.append((K, d, s.mean, s.se, target))
            recs.extend(r)
    summary = f"min (mean - 2 SE) / (0.3 K d) = {worst:.2f}"
    return CriterionResult(11, "log-loss lower bound", ok, summary, records_csv(recs, False),
                           {"rows": rows, "min_ratio": worst})


# 12: covers ------------------------------------------------------------------


def closed_form_flip_size(T: int, B: int) -> int:
    """sum_{i <= B} C(T, i) by the Pascal recurrence on binomials."""
    total, c = 0, 1
    for i in range(min(B, T) + 1):
        total += c
        c = c * (T - i) // (i + 1)
    return total


def criterion_12(seed: int = 0, n_paths: int = 400, beta: float = 0.025) -> CriterionResult:
    T, K = 1024, 2
    H = Thresholds1D()
    B = flip_budget_recipe(K, H.vc, T, beta)
    flip = FlipSetCover("erm", B, H, T)
    flip_spec = DynamicChanging(_auto_marginals(K), RoundRobin(1), T, derive_seed(seed, 12, 0))
    flip_flags = cover_failures(flip, H, flip_spec, n_paths)
    E = math.ceil(depth_recipe(K, T, beta))
    tree = TreeCover(E)
    tree_spec = KSelection(UniformInterval(), K, "edge", T, derive_seed(seed, 12, 1))
    tree_flags = cover_failures(tree, H, tree_spec, n_paths)
    b_flip = sum(flip_flags) / n_paths
    b_tree = sum(tree_flags) / n_paths
    sizes_ok = flip.size == closed_form_flip_size(T, B) and tree.size == 2**E
    ok = b_flip <= 2 * beta and b_tree <= 2 * beta and sizes_ok
    rows = [("flip", i, int(f)) for i, f in enumerate(flip_flags)] + [("tree", i, int(f)) for i, f in
                                                                      enumerate(tree_flags)]
    summary = (f"flip B={B} beta_hat {b_flip:.4f}, tree E={E} beta_hat {b_tree:.4f}, "
               f"sizes {'exact' if sizes_ok else 'MISMATCH'}")
    return CriterionResult(12, "cover validity", ok, summary, table_csv(("cover", "trial", "failed"), rows),
                           {"flip_beta": b_flip, "tree_beta": b_tree, "sizes_ok": sizes_ok, "B": B, "E": E})


BUILDERS: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
}


def run_criterion(number: int, seed: int = 0) -> CriterionResult:
    start = time.perf_counter()
    res = BUILDERS[number](seed)
    res.runtime_s = time.perf_counter() - start
    return res


def determinism(first: dict[int, CriterionResult], seed: int = 0) -> CriterionResult:
    """Rerun every criterion and compare CSV bytes with the first run."""
    start = time.perf_counter()
    rows, same = [], True
    for k in sorted(first):
        again = BUILDERS[k](seed)
        eq = again.csv == first[k].csv
        same &= eq
        rows.append((k, len(first[k].csv.encode()), int(eq)))
    res = CriterionResult(13, "determinism", same, f"{sum(r[2] for r in rows)}/{len(rows)} CSVs byte-identical",
                          table_csv(("criterion", "bytes", "identical"), rows))
    res.runtime_s = time.perf_counter() - start
    return res


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    numbers = [int(a) for a in args] or sorted(BUILDERS)
    results = {}
    for k in numbers:
        results[k] = run_criterion(k)
        print(results[k].line(), flush=True)
    if not args:
        print(determinism(results).line(), flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
