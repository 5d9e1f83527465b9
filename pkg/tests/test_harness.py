import csv
import io
import json
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonstat.harness import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    best_in_class_loss,
    bootstrap_se,
    emit,
    fit_log_model,
    fit_power_model,
    fit_scaling,
    read_csv,
    records_csv,
    run_experiment,
    run_sweep,
    run_trial,
    svg_plot,
    worker_count,
)
from nonstat.hypotheses import Thresholds1D
from nonstat.losses import LossKind, eval_loss

DYNAMIC = {"kind": "dynamic", "marginals": "auto", "schedule": {"kind": "round_robin"}}


def config(**kw):
    base = dict(experiment_id="t", process=DYNAMIC, learner="aee", T=128, K=2, n_trials=4, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"n_trials": 0},
            {"learner": "svm"},
            {"labels": "coin"},
            {"learner": "tbayes", "loss": "absolute"},
            {"learner": "aa", "loss": "absolute"},
            {"labels": "exhaustive", "T": 21},
            {"threshold_N": -1.0},
            {"threshold_N": "many"},
            {"process": None},
            {"hclass": "circles"},
            {"sweep_axis": "T", "sweep_values": [256, 128]},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            config(**kw).validate()

    def test_json_roundtrip(self, tmp_path):
        cfg = config(loss="log", learner="tbayes")
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.from_json(p) == cfg
        assert ExperimentConfig.from_json(p).config_hash() == cfg.config_hash()

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"horizon": 5})

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            ExperimentConfig.from_json(tmp_path / "nope.json")

    def test_default_log_alpha(self):
        assert config(loss="log", T=200).make_loss().truncation_alpha == pytest.approx(1 / 200)


class TestTrials:
    def test_regret_identity(self):
        rec = run_trial(config(), 0)
        assert rec.regret == pytest.approx(rec.learner_loss - rec.best_loss)
        assert rec.regret_is_lower_bound and rec.epochs >= 1

    def test_deterministic(self):
        a = run_experiment(config(), workers=1)
        b = run_experiment(config(), workers=1)
        assert records_csv(a, include_runtime=False) == records_csv(b, include_runtime=False)
        c = run_experiment(config(seed=4), workers=1)
        assert records_csv(a, include_runtime=False) != records_csv(c, include_runtime=False)

    def test_parallel_matches_serial(self, monkeypatch):
        monkeypatch.setenv("NONSTAT_THREADS", "2")
        assert worker_count() == 2
        cfg = config(n_trials=5)
        par = run_experiment(cfg)
        ser = run_experiment(cfg, workers=1)
        assert [r.trial for r in par] == list(range(5))
        assert records_csv(par, include_runtime=False) == records_csv(ser, include_runtime=False)

    def test_bad_thread_env(self, monkeypatch):
        monkeypatch.setenv("NONSTAT_THREADS", "lots")
        with pytest.raises(ConfigError):
            worker_count()

    def test_exhaustive_dominates_random(self):
        base = dict(T=10, K=1, n_trials=3, learner="erm", process={"kind": "dynamic", "marginals": [{"kind": "uniform"}]})
        ex = run_experiment(config(labels="exhaustive", **base), workers=1)
        rnd = run_experiment(config(labels="random", **base), workers=1)
        assert not ex[0].regret_is_lower_bound
        for e, r in zip(ex, rnd):
            assert e.regret >= r.regret - 1e-12

    @pytest.mark.parametrize("learner", ["ewa", "aee", "aee-autok", "fixed-epoch", "erm", "oneinc"])
    def test_learners_run(self, learner):
        labels = "realizable" if learner in ("erm", "oneinc") else "random"
        recs = run_experiment(config(learner=learner, labels=labels, n_trials=2), workers=1)
        assert len(recs) == 2
        if labels == "realizable":
            assert all(r.best_loss == 0 for r in recs)

    @pytest.mark.parametrize("learner,loss", [("tbayes", "log"), ("aa", "brier"), ("aa", "log")])
    def test_mixable_learners(self, learner, loss):
        recs = run_experiment(config(learner=learner, loss=loss, n_trials=2), workers=1)
        for r in recs:
            assert r.regret <= math.log(1e7) * 20

    def test_lower_bound_labels(self):
        for labels, kw in [("forest", dict(T=256, K=2)), ("forest-log", dict(T=256, K=2)), ("anti-epoch", dict(T=64))]:
            recs = run_experiment(config(labels=labels, process=None, n_trials=2, **kw), workers=1)
            assert len(recs) == 2

    def test_k_selection_records_depth(self):
        cfg = config(process={"kind": "k_selection", "K": 2, "selector": "edge"}, learner="erm", labels="realizable",
                     realizable_param=0.5, n_trials=2)
        assert all(r.max_tree_depth is not None and r.max_tree_depth >= 1 for r in run_experiment(cfg, workers=1))

    def test_sweep(self):
        groups = run_sweep(config(n_trials=2), "T", [64, 128, 256], workers=1)
        assert list(groups) == [64, 128, 256]
        assert all(r.T == 256 for r in groups[256])


class TestBestInClass:
    def test_example(self):
        H = Thresholds1D()
        assert best_in_class_loss(H, [0.2, 0.8], [0, 0], [1, 0], LossKind("absolute")) == 1.0

    def test_log_example(self):
        H = Thresholds1D()
        kind = LossKind("log", 0.1)
        # One wrong and one right round, both at the clamped level.
        expected = float(eval_loss(kind, 1.0, 0) + eval_loss(kind, 1.0, 1))
        assert best_in_class_loss(H, [0.2, 0.8], [0, 0], [1, 0], kind) == pytest.approx(expected)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            best_in_class_loss(Thresholds1D(), [0.1], [0], [1, 0], LossKind("absolute"))


class TestStatistics:
    def test_fit_scaling_exact(self):
        xs = np.array([64, 256, 1024, 4096])
        fit = fit_scaling(xs, 3 * np.sqrt(xs))
        assert fit.exponent == pytest.approx(0.5)
        assert fit.intercept == pytest.approx(math.log(3))
        assert fit.r_squared == pytest.approx(1.0)

    def test_fit_scaling_errors(self):
        with pytest.raises(ValueError):
            fit_scaling([1, 2], [1, 2])
        with pytest.raises(ValueError):
            fit_scaling([1, 2, 3], [1, 0, 2])

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-1, 2), st.floats(0.1, 10))
    def test_fit_scaling_recovers(self, p, c):
        xs = np.array([2.0, 8.0, 32.0, 128.0])
        assert fit_scaling(xs, c * xs**p).exponent == pytest.approx(p, abs=1e-9)

    def test_bootstrap_se(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=400)
        assert bootstrap_se(x) == pytest.approx(x.std(ddof=1) / 20, rel=0.15)
        assert bootstrap_se([1.0]) == 0.0
        assert bootstrap_se(x, seed=1) == bootstrap_se(x, seed=1)

    def test_log_vs_power(self):
        x = np.array([2.0**k for k in range(6, 16)])
        y = 2 + 3 * np.log(x)
        log_fit = fit_log_model(np.log(x), y)
        pow_fit = fit_power_model(x, y)
        assert log_fit.params == pytest.approx((2, 3))
        assert log_fit.aic < pow_fit.aic
        y2 = 0.5 * x**0.6
        assert fit_power_model(x, y2).aic < fit_log_model(np.log(x), y2).aic


class TestOutput:
    def test_csv_schema(self):
        recs = run_experiment(config(n_trials=2), workers=1)
        text = records_csv(recs)
        rows = list(csv.DictReader(io.StringIO(text)))
        assert tuple(rows[0].keys()) == CSV_COLUMNS
        assert float(rows[0]["regret"]) == recs[0].regret
        assert "runtime_ms" not in records_csv(recs, include_runtime=False)

    def test_empty_csv_header_only(self):
        assert records_csv([]) == ",".join(CSV_COLUMNS) + "\n"

    def test_svg_structure(self):
        xs = [64, 128, 256, 512, 1024]
        means = [3 * math.sqrt(x) for x in xs]
        svg = svg_plot(xs, means, [1.0] * 5, fit_scaling(xs, means))
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert len(re.findall(r'class="point"', svg)) == 5
        assert len(re.findall(r'class="errorbar"', svg)) == 5
        assert len(re.findall(r'class="fit"', svg)) == 1

    def test_emit(self, tmp_path):
        groups = run_sweep(config(n_trials=2), "T", [64, 128, 256], workers=1)
        recs = [r for v in groups for r in groups[v]]
        paths = emit(recs, tmp_path, "s")
        assert set(paths) == {"csv", "json", "svg"}
        assert len(read_csv(paths["csv"])) == 6
        assert len(json.loads(paths["json"].read_text())) == 6
