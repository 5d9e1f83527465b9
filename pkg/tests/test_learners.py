import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonstat.adversaries import anti_epoch_class
from nonstat.covering import epsilon_cover_thresholds
from nonstat.hypotheses import FiniteTable, ProductThresholds, Thresholds1D, auto_threshold
from nonstat.learners import (
    AdaptiveEpochEWA,
    AggregatingForecaster,
    ERMFollower,
    ExpertForecaster,
    FixedEpochEWA,
    NotRealizable,
    OneInclusion,
    TableMixture,
    adaptive_epoch_ewa_autok,
    aggregating_predict,
    erm_follower_mistakes,
    ewa_predict,
    ewa_regret_bound,
    ewa_update,
    learning_rate,
    make_mixture,
    one_inclusion_errors,
    one_inclusion_predict,
    truncated_bayes_predict,
)
from nonstat.learners.ewa import cumulative_weights
from nonstat.losses import LossKind, brier, eval_loss
from nonstat.processes import UniformInterval

ABS = LossKind("absolute")


def online(learner, values, coords, ys):
    out = np.empty(len(values))
    for t, (v, c, y) in enumerate(zip(values.tolist(), coords.tolist(), ys.tolist())):
        out[t] = learner.predict(v, c)
        learner.update(y)
    return out


def random_stream(seed, T, d=1, shift=True):
    rng = np.random.default_rng(seed)
    v = rng.random(T)
    if shift:
        v[T // 2 :] = 0.5 + 0.5 * v[T // 2 :]
        v[: T // 2] *= 0.5
    c = rng.integers(0, d, T) if d > 1 else np.zeros(T, dtype=np.int64)
    y = rng.integers(0, 2, T)
    return v, c, y


def hclass_for(d):
    return Thresholds1D() if d == 1 else ProductThresholds(d)


class TestEwaPrimitives:
    def test_learning_rate(self):
        assert learning_rate(2, 1) == pytest.approx(math.sqrt(8 * math.log(2)))
        assert learning_rate(1, 5) == 0.0
        np.testing.assert_allclose(learning_rate(4, np.array([1, 4])), [math.sqrt(8 * math.log(4)), math.sqrt(2 * math.log(4))])

    def test_predict_uniform(self):
        assert ewa_predict([0.5, 0.5], [0.0, 1.0]) == 0.5
        with pytest.raises(ValueError):
            ewa_predict(np.empty(0), np.empty(0))

    def test_update_example(self):
        np.testing.assert_allclose(ewa_update([0.5, 0.5], [0.0, 1.0], 1.0), [1 / (1 + math.exp(-1)), 1 / (1 + math.e)])

    def test_update_extreme_losses_finite(self):
        w = ewa_update([0.5, 0.5], [0.0, 1e6], 10.0)
        assert np.isfinite(w).all() and w.sum() == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.floats(0.01, 5))
    def test_cumulative_matches_chained_constant_rate(self, losses, eta):
        L = np.array(losses)
        chained = ewa_update(ewa_update(np.full(len(L), 1 / len(L)), L, eta), L / 2, eta)
        np.testing.assert_allclose(chained, cumulative_weights(1.5 * L, eta), rtol=1e-9)

    def test_bound_formula(self):
        assert ewa_regret_bound(100, 2) == pytest.approx(math.sqrt(200 * math.log(2)) + math.sqrt(math.log(2) / 8))


class TestExpertForecaster:
    def _regret(self, weighting, ys, E):
        f = ExpertForecaster(len(E), ABS, weighting=weighting)
        loss, cum = 0.0, np.zeros(len(E))
        for y in ys:
            loss += abs(f.predict(E) - y)
            f.update(E, y)
            cum += np.abs(E - y)
        return loss - cum.min()

    def test_literal_form_counterexample(self):
        # One switch after 100 rounds: the chained decreasing-rate update
        # breaks the bound, the cumulative form respects it.
        T = 1024
        ys = np.r_[np.zeros(100), np.ones(T - 100)].astype(int)
        E = np.array([0.0, 1.0])
        bound = ewa_regret_bound(T, 2)
        assert self._regret("multiplicative", ys, E) > bound
        assert self._regret("cumulative", ys, E) <= bound

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(1, 200))
    def test_bound_random(self, seed, m, T):
        rng = np.random.default_rng(seed)
        f = ExpertForecaster(m, ABS)
        loss, cum = 0.0, np.zeros(m)
        for _ in range(T):
            E = rng.random(m)
            y = int(rng.integers(0, 2))
            loss += abs(f.predict(E) - y)
            f.update(E, y)
            cum += np.abs(E - y)
        assert loss - cum.min() <= ewa_regret_bound(T, m) + 1e-9

    def test_batched_matches_single(self):
        rng = np.random.default_rng(0)
        E = rng.random((30, 3, 4))
        ys = rng.integers(0, 2, (30, 3))
        batch = ExpertForecaster(4, ABS, batch=(3,))
        singles = [ExpertForecaster(4, ABS) for _ in range(3)]
        for t in range(30):
            pb = batch.predict(E[t])
            for i, f in enumerate(singles):
                assert pb[i] == pytest.approx(f.predict(E[t, i]))
                f.update(E[t, i], ys[t, i])
            batch.update(E[t], ys[t])


class TestAggregating:
    def test_log_is_bayes(self):
        assert aggregating_predict([0.25, 0.75], [0.2, 0.6], LossKind("log", 0.01)) == pytest.approx(0.5)

    def test_brier_two_experts(self):
        # Equal weights on 0 and 1 predict 1/2 by symmetry.
        assert aggregating_predict([0.5, 0.5], [0.0, 1.0], brier()) == pytest.approx(0.5)

    def test_brier_mixability_inequality(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            w = rng.dirichlet(np.ones(3))
            p = rng.random(3)
            yhat = aggregating_predict(w, p, brier())
            for y in (0, 1):
                mix = -math.log((w * np.exp(-2 * (p - y) ** 2)).sum()) / 2
                assert (yhat - y) ** 2 <= mix + 1e-12

    def test_truncated_bayes(self):
        assert truncated_bayes_predict([1.0, 0.0], [0.0, 1.0], 0.1) == pytest.approx(0.1)
        with pytest.raises(ValueError):
            truncated_bayes_predict([1.0], [0.5], 0.6)

    def test_log_regret_at_most_ln_m(self):
        rng = np.random.default_rng(2)
        m, T = 8, 300
        kind = LossKind("log", 0.01)
        f = AggregatingForecaster(m, kind)
        loss, cum = 0.0, np.zeros(m)
        for _ in range(T):
            E = rng.random(m)
            y = int(rng.integers(0, 2))
            loss += eval_loss(kind, f.predict(E), y)
            f.update(E, y)
            cum += eval_loss(kind, np.clip(E, 0.01, 0.99), y)
        assert loss - cum.min() <= math.log(m) + 1e-9


class TestAdaptiveEpoch:
    @pytest.mark.parametrize("d", [1, 2])
    @pytest.mark.parametrize("N", [2.0, 6.0, None])
    def test_online_matches_batch(self, d, N):
        v, c, y = random_stream(d, 300, d)
        H = hclass_for(d)
        a = AdaptiveEpochEWA(H, N, ABS, T=300)
        b = AdaptiveEpochEWA(H, N, ABS, T=300)
        np.testing.assert_allclose(online(a, v, c, y), b.run(v, c, y), atol=1e-9)
        assert a.starts == b.starts

    def test_segment_is_label_free(self):
        v, c, y = random_stream(5, 400)
        H = Thresholds1D()
        s1 = AdaptiveEpochEWA(H, 3.0, ABS).segment(v, c)
        online_learner = AdaptiveEpochEWA(H, 3.0, ABS)
        online(online_learner, v, c, 1 - y)
        assert s1 == online_learner.starts
        assert s1[0] == 1 and s1 == sorted(s1) and len(s1) > 1

    def test_replay_restarts_count(self):
        # After a close on round t the statistic restarts from t's point
        # only, so it never exceeds N right after a boundary.
        H = Thresholds1D()
        learner = AdaptiveEpochEWA(H, 1.0, ABS)
        v, c, _ = random_stream(7, 200)
        for x in v.tolist():
            E = learner.observe_instance(x)
            assert E <= learner.N
        st_ = learner.state
        assert st_.s == learner.epochs - 1 and st_.trace == learner.starts

    def test_run_needs_fresh(self):
        learner = AdaptiveEpochEWA(Thresholds1D(), 2.0, ABS)
        learner.predict(0.5)
        learner.update(1)
        with pytest.raises(RuntimeError):
            learner.run(np.array([0.1]), np.zeros(1, dtype=np.int64), np.array([0]))

    def test_parameter_errors(self):
        with pytest.raises(ValueError):
            AdaptiveEpochEWA(Thresholds1D(), None, ABS)
        with pytest.raises(ValueError):
            AdaptiveEpochEWA(Thresholds1D(), -1.0, ABS)
        with pytest.raises(ValueError):
            AdaptiveEpochEWA(Thresholds1D(), 1.0, ABS, weighting="odd")

    def test_auto_threshold(self):
        learner = AdaptiveEpochEWA(Thresholds1D(), None, ABS, T=65536, K=4)
        assert learner.N == pytest.approx(auto_threshold(65536, 1, 4))

    def test_table_class(self):
        H = anti_epoch_class()
        v = np.array([0, 0, 1, 1, 1, 0], dtype=float)
        c = np.zeros(6, dtype=np.int64)
        y = np.array([1, 1, 0, 0, 1, 1])
        a = AdaptiveEpochEWA(H, 0.5, ABS)
        b = AdaptiveEpochEWA(H, 0.5, ABS)
        np.testing.assert_allclose(online(a, v, c, y), b.run(v, c, y))

    def test_autok_doubles(self):
        T = 4096
        learner = adaptive_epoch_ewa_autok(Thresholds1D(), ABS, T, n=2)
        rng = np.random.default_rng(3)
        # Many shifting blocks force many epochs.
        v = (rng.random(T) + np.repeat(np.arange(64) % 8, T // 64)) / 8
        learner.segment(v, np.zeros(T, dtype=np.int64))
        assert learner.K > 1 and learner.restarts >= 1
        assert learner.N == pytest.approx(auto_threshold(T, 1, learner.K))

    def test_regret_small_on_stationary(self):
        T = 2048
        rng = np.random.default_rng(4)
        v = rng.random(T)
        y = (v >= 0.3).astype(int)
        y[rng.random(T) < 0.1] ^= 1
        p = AdaptiveEpochEWA(Thresholds1D(), None, ABS, T=T).run(v, np.zeros(T, dtype=np.int64), y)
        best = min(np.abs((v >= a).astype(int) - y).sum() for a in np.linspace(0, 1, 201))
        assert np.abs(p - y).sum() - best <= 3 * math.sqrt(T * math.log(T))


class TestFixedEpoch:
    def test_starts(self):
        assert FixedEpochEWA.epoch_starts(10) == [1, 2, 4, 8]
        assert FixedEpochEWA.epoch_starts(1) == [1]

    @pytest.mark.parametrize("d", [1, 2])
    def test_online_matches_batch(self, d):
        v, c, y = random_stream(11 + d, 200, d)
        H = hclass_for(d)
        a, b = FixedEpochEWA(H, ABS), FixedEpochEWA(H, ABS)
        np.testing.assert_allclose(online(a, v, c, y), b.run(v, c, y), atol=1e-9)
        assert a.starts == b.starts == [1, 2, 4, 8, 16, 32, 64, 128]


def mixture(mode, loss, d=1, eps=0.01):
    H = hclass_for(d)
    cover = epsilon_cover_thresholds(UniformInterval(), eps)
    return make_mixture(H, mode, loss, [cover] * H.n_blocks)


class TestMixtures:
    CASES = [("ewa", ABS), ("tbayes", LossKind("log", 0.01)), ("aa", brier()), ("aa", LossKind("log", 0.01))]

    @pytest.mark.parametrize("mode,loss", CASES)
    @pytest.mark.parametrize("d", [1, 2])
    def test_online_matches_batch(self, mode, loss, d):
        v, c, y = random_stream(20 + d, 300, d)
        v = np.round(v, 3)
        a, b = mixture(mode, loss, d), mixture(mode, loss, d)
        np.testing.assert_allclose(online(a, v, c, y), b.run(v, c, y), atol=1e-9)

    @pytest.mark.parametrize("mode,loss", CASES[1:])
    def test_fixed_rate_fine_cover(self, mode, loss):
        v, c, y = random_stream(30, 400)
        a, b = mixture(mode, loss, eps=1e-11), mixture(mode, loss, eps=1e-11)
        np.testing.assert_allclose(online(a, v, c, y), b.run(v, c, y), atol=1e-9)

    def test_cover_mixture_matches_explicit_experts(self):
        # With a coarse cover the lazy cells must equal plain EWA over members.
        v, c, y = random_stream(31, 120)
        cover = epsilon_cover_thresholds(UniformInterval(), 0.125)
        members = cover.members
        mix = make_mixture(Thresholds1D(), "ewa", ABS, [cover])
        f = ExpertForecaster(len(members), ABS)
        for x, yy in zip(v.tolist(), y.tolist()):
            E = (x >= members).astype(float)
            assert mix.predict(x) == pytest.approx(float(f.predict(E)))
            mix.update(yy)
            f.update(E, yy)

    def test_tbayes_regret(self):
        T = 256
        kind = LossKind("log", 1 / T)
        v, c, _ = random_stream(32, T, shift=False)
        y = (v >= 0.4).astype(int)
        p = mixture("tbayes", kind, eps=1 / 64).run(v, c, y)
        lt = eval_loss(kind, p, y).sum()
        best = eval_loss(kind, (v >= 0.40625).astype(float), y).sum()
        assert lt - best <= math.log(65) + 1e-9

    def test_table_mixture_aa_log_is_tbayes(self):
        H = anti_epoch_class()
        kind = LossKind("log", 0.05)
        a, b = TableMixture(H, "aa", kind), TableMixture(H, "tbayes", kind)
        for x, yy in [(0, 1), (1, 0), (1, 1), (0, 0)]:
            assert a.predict(x) == pytest.approx(b.predict(x))
            a.update(yy)
            b.update(yy)

    def test_mode_errors(self):
        with pytest.raises(ValueError):
            mixture("tbayes", ABS)
        with pytest.raises(ValueError):
            mixture("odd", ABS)
        with pytest.raises(ValueError):
            make_mixture(Thresholds1D(), "ewa", ABS)


def realizable_stream(seed, T, d=1):
    rng = np.random.default_rng(seed)
    v = rng.random(T)
    c = rng.integers(0, d, T) if d > 1 else np.zeros(T, dtype=np.int64)
    a = rng.random(d)
    y = (v >= a[c]).astype(int)
    return v, c, y


class TestRealizable:
    @pytest.mark.parametrize("cls", [ERMFollower, OneInclusion])
    @pytest.mark.parametrize("d", [1, 3])
    def test_run_matches_loop(self, cls, d):
        v, c, y = realizable_stream(d, 500, d)
        H = hclass_for(d)
        np.testing.assert_array_equal(online(cls(H), v, c, y), cls(H).run(v, c, y))

    def test_erm_nonrealizable_falls_back(self):
        v = np.array([0.2, 0.8, 0.5, 0.9, 0.1])
        c = np.zeros(5, dtype=np.int64)
        y = np.array([1, 0, 1, 0, 0])
        H = Thresholds1D()
        np.testing.assert_array_equal(online(ERMFollower(H), v, c, y), ERMFollower(H).run(v, c, y))

    def test_oneinc_nonrealizable_raises(self):
        v = np.array([0.2, 0.8, 0.5])
        c = np.zeros(3, dtype=np.int64)
        y = np.array([1, 0, 1])
        with pytest.raises(NotRealizable):
            OneInclusion(Thresholds1D()).run(v, c, y)
        with pytest.raises(NotRealizable):
            online(OneInclusion(Thresholds1D()), v, c, y)

    def test_erm_mistake_count(self):
        for seed in range(5):
            v, c, y = realizable_stream(seed, 300)
            p = ERMFollower(Thresholds1D()).run(v, c, y)
            assert int((p != y).sum()) == erm_follower_mistakes(v, c, y)

    def test_oneinc_error_count(self):
        for seed in range(5):
            v, c, y = realizable_stream(seed, 300, 2)
            p = OneInclusion(ProductThresholds(2)).run(v, c, y)
            np.testing.assert_array_equal((p != y).astype(np.int8), one_inclusion_errors(v, c, y, 2))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 9))
    def test_fast_oneinc_matches_graph(self, seed, T):
        v, c, y = realizable_stream(seed, T)
        v = np.round(v, 1)
        y = (v >= np.round(np.random.default_rng(seed).random(), 1)).astype(int)
        H = Thresholds1D()
        fast = OneInclusion(H)
        for t in range(T):
            expected = one_inclusion_predict(H, v[: t + 1], c[: t + 1], y[:t])
            assert fast.predict(float(v[t])) == expected
            fast.update(int(y[t]))

    def test_generic_oneinc_table(self):
        # Two rows that differ on one point: the edge is oriented by the
        # lexicographic rule, so the ambiguous point is labelled 1.
        H = FiniteTable(["a", "b"], [[1, 0], [1, 1]])
        assert one_inclusion_predict(H, np.array([1.0]), np.zeros(1, dtype=np.int64), []) == 1

    def test_fast_erm_matches_min_mistakes(self):
        v, c, y = realizable_stream(9, 60)
        H = Thresholds1D()
        learner = ERMFollower(H)
        for t in range(60):
            param, _ = H.min_mistakes(v[:t], c[:t], y[:t])
            assert learner.predict(float(v[t])) == H.evaluate_encoded(param, float(v[t]), 0)
            learner.update(int(y[t]))
