"""Command line interface.

Exit codes: 0 on success, 2 on a configuration error, 3 on an I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import adversaries as adv
from .covering import (
    FlipSetCover,
    TreeCover,
    cover_failures,
    depth_recipe,
    epsilon_cover_thresholds,
    flip_budget_recipe,
    tree_max_depth,
)
from .harness import (
    AXES,
    LABELS,
    LEARNERS,
    ConfigError,
    ExperimentConfig,
    default_epsilon,
    emit,
    fit_scaling_records,
    plot_rows,
    read_csv,
    run_experiment,
    run_sweep,
    summarize,
)
from .hypotheses import Thresholds1D
from .processes import DynamicChanging, KSelection, RoundRobin, UniformInterval, derive_seed, sample_path

EXIT_CONFIG = 2
EXIT_IO = 3


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    overrides = {
        "learner": args.learner,
        "loss": args.loss,
        "log_alpha": args.log_alpha,
        "labels": args.labels,
        "threshold_N": args.threshold_N,
        "n_trials": args.trials,
        "seed": args.seed,
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg


def _threshold_n(text: str):
    return text if text == "auto" else float(text)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment configuration (JSON)")
    p.add_argument("--learner", choices=LEARNERS)
    p.add_argument("--loss", choices=("absolute", "log", "brier"))
    p.add_argument("--log-alpha", type=float, dest="log_alpha", help="log-loss truncation level")
    p.add_argument("--labels", choices=LABELS)
    p.add_argument("--threshold-N", type=_threshold_n, dest="threshold_N", help="epoch threshold or 'auto'")
    p.add_argument("--trials", type=int, help="override n_trials")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--workers", type=int, help="worker processes (default: NONSTAT_THREADS or all cores)")
    p.add_argument("--out", default="results", help="output directory")


def _summary_json(records) -> dict:
    s = summarize(records)
    return {"n": s.n, "mean_regret": s.mean, "se": s.se}


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    records = run_experiment(cfg, args.workers)
    paths = emit(records, args.out, cfg.experiment_id)
    out = _summary_json(records)
    out["files"] = {k: str(v) for k, v in paths.items()}
    print(json.dumps(out))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = [float(v) if args.axis == "sigma" else int(v) for v in args.values.split(",") if v]
    groups = run_sweep(cfg, args.axis, values, args.workers)
    records = [r for v in values for r in groups[v]]
    fit = fit_scaling_records(groups, args.axis) if len(values) >= 3 else None
    paths = emit(records, args.out, cfg.experiment_id, [fit] if fit else None)
    out = {"axis": args.axis, "points": {str(v): _summary_json(groups[v]) for v in values}}
    if fit is not None:
        out["fit"] = dataclasses.asdict(fit)
    out["files"] = {k: str(v) for k, v in paths.items()}
    print(json.dumps(out))
    return 0


def lower_bound_target(cfg: ExperimentConfig) -> Optional[float]:
    """Regret the construction is meant to force, when it has one."""
    if cfg.labels == "forest":
        return math.sqrt(cfg.K * cfg.d * cfg.T) / 8.0
    if cfg.labels == "forest-log":
        return 0.3 * cfg.K * cfg.d
    if cfg.labels == "anti-epoch":
        return 0.1 * cfg.T ** (2.0 / 3.0)
    return None


def cmd_lowerbound(args) -> int:
    cfg = _load_config(args)
    if cfg.labels not in ("forest", "forest-log", "anti-epoch", "exhaustive"):
        cfg = dataclasses.replace(cfg, labels="forest")
        cfg.validate()
    try:
        if cfg.labels == "forest":
            adv.check_forest_constraint(cfg.K, cfg.d, cfg.T)
        elif cfg.labels == "forest-log":
            adv.check_logloss_constraint(cfg.K, cfg.d, cfg.T)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    records = run_experiment(cfg, args.workers)
    paths = emit(records, args.out, cfg.experiment_id)
    out = _summary_json(records)
    out["labels"] = cfg.labels
    target = lower_bound_target(cfg)
    out["target"] = target
    if target is not None:
        out["holds_at_2se"] = out["mean_regret"] - 2 * out["se"] >= target
    out["files"] = {k: str(v) for k, v in paths.items()}
    print(json.dumps(out))
    return 0


def cmd_cover(args) -> int:
    H = Thresholds1D()
    T, K, beta = args.T, args.K, args.beta
    if T < 2 or K < 1 or not 0.0 < beta < 1.0:
        raise ConfigError("need T >= 2, K >= 1 and beta in (0, 1)")
    out = {"construction": args.construction, "T": T, "K": K, "beta": beta}
    if args.construction == "eps":
        eps = args.epsilon if args.epsilon is not None else default_epsilon(T, args.sigma)
        cover = epsilon_cover_thresholds(UniformInterval(), eps)
        out.update(size=cover.size, log_size=math.log(cover.size), empirical_beta=None, max_depth=None, epsilon=eps)
    elif args.construction == "flip":
        B = args.budget if args.budget is not None else flip_budget_recipe(K, H.vc, T, beta)
        cover = FlipSetCover(args.base, B, H, T)
        spec = DynamicChanging([UniformInterval(k / K, (k + 1) / K) for k in range(K)], RoundRobin(1), T, args.seed)
        flags = cover_failures(cover, H, spec, args.trials)
        out.update(size=cover.size, log_size=cover.log_size, empirical_beta=sum(flags) / len(flags), max_depth=None,
                   budget=B)
    else:
        E = args.budget if args.budget is not None else math.ceil(depth_recipe(K, T, beta))
        cover = TreeCover(E)
        spec = KSelection(UniformInterval(), K, "edge", T, args.seed)
        flags = cover_failures(cover, H, spec, args.trials)
        depth = max(
            tree_max_depth(sample_path(KSelection(UniformInterval(), K, "edge", T, derive_seed(args.seed, i))).values)
            for i in range(args.trials)
        )
        out.update(size=cover.size, log_size=cover.log_size, empirical_beta=sum(flags) / len(flags), max_depth=depth,
                   budget=E)
    print(json.dumps(out))
    return 0


def cmd_plot(args) -> int:
    rows = read_csv(args.inp)
    if not rows:
        raise ConfigError(f"{args.inp} has no data rows")
    svg, fit = plot_rows(rows, args.axis)
    Path(args.out).write_text(svg)
    print(json.dumps({"out": args.out, "fit": dataclasses.asdict(fit) if fit else None}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonstat", description="Regret experiments for non-stationary online learning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment configuration")
    _add_run_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a configuration over one axis and fit the scaling exponent")
    _add_run_options(p)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True, help="comma separated, increasing")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("lowerbound", help="run a lower-bound construction against a learner")
    _add_run_options(p)
    p.set_defaults(func=cmd_lowerbound)

    p = sub.add_parser("cover", help="build a threshold cover and estimate its failure rate")
    p.add_argument("--construction", required=True, choices=("eps", "flip", "tree"))
    p.add_argument("--T", type=int, default=1024)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--beta", type=float, default=0.025)
    p.add_argument("--budget", type=int, help="flip budget B or tree exponent E (default: the recipe)")
    p.add_argument("--base", choices=("erm", "oneinc"), default="erm", help="base predictor of the flip cover")
    p.add_argument("--epsilon", type=float, help="scale of the eps-cover")
    p.add_argument("--sigma", type=float, default=1.0, help="smoothness used for the default epsilon")
    p.add_argument("--trials", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("plot", help="log-log SVG of a results CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", choices=AXES)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
