import itertools
import math

import numpy as np
import pytest

from nonstat.adversaries import (
    MAX_TREE_DEPTH,
    AntiEpoch,
    LittlestoneForest,
    anti_epoch_class,
    anti_epoch_labels,
    build_threshold_littlestone_tree,
    check_forest_constraint,
    check_logloss_constraint,
    epoch_lengths,
    exhaustive_worst_labels,
    forest_lower_bound_process,
    logloss_lower_bound_process,
    path_is_threshold_realizable,
)
from nonstat.hypotheses import Thresholds1D, min_cumulative_loss
from nonstat.learners import AdaptiveEpochEWA, ERMFollower, FixedEpochEWA, loss_table
from nonstat.losses import LossKind, eval_loss
from nonstat.processes import sample_path

ABS = LossKind("absolute")


class TestLittlestoneTree:
    def test_depth_two_values(self):
        tree = build_threshold_littlestone_tree(2)
        assert tree.values[1:].tolist() == [0.5, 0.75, 0.25]
        assert tree.child(1, 0) == 2 and tree.child(1, 1) == 3
        assert tree.is_leaf(2) and not tree.is_leaf(1)
        with pytest.raises(ValueError):
            tree.child(3, 0)

    @pytest.mark.parametrize("depth", [1, 4, 10])
    def test_every_path_realizable(self, depth):
        tree = build_threshold_littlestone_tree(depth)
        paths = list(tree.paths())
        assert len(paths) == 2**depth
        for path in paths:
            assert path_is_threshold_realizable(tree, path)

    def test_grid_oracle_agrees(self):
        tree = build_threshold_littlestone_tree(4)
        grid = np.linspace(0, 1, 2**6 + 1)
        for path in tree.paths():
            assert path_is_threshold_realizable(tree, path, grid)
        bad = [(1, 1), (3, 0), (2, 1)]
        assert not path_is_threshold_realizable(tree, [(1, 0), (1, 1)])
        assert not path_is_threshold_realizable(tree, bad[:1] + [(1, 0)], grid)

    def test_depth_limits(self):
        with pytest.raises(ValueError):
            build_threshold_littlestone_tree(0)
        with pytest.raises(ValueError):
            build_threshold_littlestone_tree(MAX_TREE_DEPTH + 1)
        tree = build_threshold_littlestone_tree(20)
        assert len(np.unique(tree.values[1:])) == 2**20 - 1

    def test_forest_atoms_and_moves(self):
        forest = LittlestoneForest.thresholds(3, 2)
        assert forest.atoms() == [(0.5, 1), (0.5, 2)]
        forest.move(1, 1)
        assert forest.atoms() == [(0.5, 1), (0.25, 2)]


class TestForestProcess:
    def test_constraint(self):
        check_forest_constraint(2, 1, 64)
        with pytest.raises(ValueError):
            check_forest_constraint(4, 4, 256)
        with pytest.raises(ValueError):
            check_logloss_constraint(4, 4, 100)

    def test_epoch_lengths(self):
        assert epoch_lengths(10, 3) == [3, 3, 4]

    @pytest.mark.parametrize("K,d", [(2, 1), (3, 2), (4, 3)])
    def test_spec_replays_path(self, K, d):
        spec, strat = forest_lower_bound_process(K, d, 1024, 5)
        path = sample_path(spec)
        values, coords = strat.instances()
        np.testing.assert_array_equal(path.values, values)
        np.testing.assert_array_equal(path.coords, coords)

    def test_pointers_follow_majority(self):
        K, d, T = 3, 2, 600
        spec, strat = forest_lower_bound_process(K, d, T, 1)
        values, coords = strat.instances()
        ys = strat.labels()
        tree = build_threshold_littlestone_tree(K)
        pointers = [1] * d
        bounds = np.cumsum([0] + epoch_lengths(T, K))
        for k in range(K - 1):
            sl = slice(bounds[k], bounds[k + 1])
            for b in range(d):
                sel = ys[sl][coords[sl] == b]
                assert (values[sl][coords[sl] == b] == tree.value(pointers[b])).all()
                pointers[b] = tree.child(pointers[b], 1 if sel.sum() * 2 > len(sel) else 0)
            assert strat.pointer_trail[k + 1] == pointers

    def test_best_in_class_path_realizable(self):
        # The pointer path of each tree is realizable, so the comparator
        # errs only on minority labels.
        spec, strat = forest_lower_bound_process(2, 1, 256, 2)
        v, c = strat.instances()
        y = strat.labels()
        H = Thresholds1D()
        best = min_cumulative_loss(H, v, c, y, loss_table(ABS))
        n = 128
        minority = sum(min(int(y[i : i + n].sum()), n - int(y[i : i + n].sum())) for i in (0, 128))
        assert best == minority


class TestLogLossGame:
    def test_single_block(self):
        strat = logloss_lower_bound_process(3, 1, 64, 0)
        labels = []
        for t in range(5):
            strat.instance(t)
            labels.append(strat.label(t, 0.7))
        # Prediction >= 1/2 draws label 0 on first sight of each atom.
        assert labels == [0, 0, 0, 0, 0]
        assert strat.epoch_ends == [1, 2]
        assert strat._values[:3].tolist() == [0.5, 0.75, 0.875]

    def test_coupon_epoch_ends(self):
        strat = logloss_lower_bound_process(2, 4, 256, 3)
        for t in range(100):
            strat.instance(t)
            strat.label(t, 0.2)
        end = strat.epoch_ends[0]
        assert set(strat._coords[:end].tolist()) == {0, 1, 2, 3}
        assert len(set(strat._coords[: end - 1].tolist())) == 3
        assert (strat.labels()[:end] == 1).all()


class TestAntiEpoch:
    def test_long_case(self):
        strat = AntiEpoch([1, 1, 2, 4, 8, 16], 0)
        strat.prepare(32)
        assert strat.long_case and strat.switch == 16
        values, _ = strat.instances()
        assert values.tolist() == [0.0] * 16 + [1.0] * 16
        assert strat.label(16, 0.2) == 1
        assert (strat.labels()[16:] == 1).all()
        strat.prepare(32)
        assert strat.label(16, 0.9) == 0

    def test_short_case_constant_epochs(self):
        lengths = [4] * 16
        strat = AntiEpoch(lengths, 3)
        strat.prepare(64)
        assert not strat.long_case
        y = strat.labels()
        assert (strat.instances()[0] == 1.0).all()
        sides = {int(y[4 * k : 4 * k + 4].sum() * 2 > 4) for k in range(16)}
        assert len(sides) == 1

    def test_offline_equals_online(self):
        T = 128
        learner = FixedEpochEWA(anti_epoch_class(), ABS)
        strat = AntiEpoch([1, 1, 2, 4, 8, 16, 32, 64], 0)
        strat.prepare(T)
        trace = []
        for t in range(T):
            x, c = strat.instance(t)
            p = learner.predict(x, c)
            trace.append(p)
            learner.update(strat.label(t, p))
        np.testing.assert_array_equal(anti_epoch_labels([1, 1, 2, 4, 8, 16, 32, 64], trace), strat.labels())

    def test_lengths_must_cover(self):
        with pytest.raises(ValueError):
            AntiEpoch([2, 2], 0).prepare(10)

    def test_fixed_epoch_pays(self):
        T = 512
        lengths = [1, 1, 2, 4, 8, 16, 32, 64, 128, 256]
        learner = FixedEpochEWA(anti_epoch_class(), ABS)
        strat = AntiEpoch(lengths, 0)
        strat.prepare(T)
        loss = 0.0
        for t in range(T):
            x, c = strat.instance(t)
            p = learner.predict(x, c)
            y = strat.label(t, p)
            loss += abs(p - y)
            learner.update(y)
        assert loss >= 0.1 * T ** (2 / 3)


class TestExhaustive:
    def brute(self, make, values, loss):
        H = Thresholds1D()
        coords = np.zeros(len(values), dtype=np.int64)
        lt = loss_table(loss)
        best = -math.inf
        for ys in itertools.product((0, 1), repeat=len(values)):
            learner = make()
            acc = 0.0
            for x, y in zip(values, ys):
                acc += float(eval_loss(loss, learner.predict(x, 0), y))
                learner.update(y)
            best = max(best, acc - min_cumulative_loss(H, values, coords, np.array(ys), lt))
        return best

    @pytest.mark.parametrize("make", [lambda: ERMFollower(Thresholds1D()), lambda: AdaptiveEpochEWA(Thresholds1D(), 1.0, ABS)])
    def test_matches_brute_force(self, make):
        values = np.array([0.5, 0.2, 0.8, 0.3, 0.6, 0.1])
        ys, regret = exhaustive_worst_labels(make(), Thresholds1D(), values, np.zeros(6, dtype=np.int64), ABS)
        assert regret == pytest.approx(self.brute(make, values, ABS))
        assert len(ys) == 6

    def test_erm_example(self):
        # The follower starts at 0, so labels alternating from 1 make it
        # wrong every round: regret 4 - min(#0, #1) = 2.
        values = np.full(4, 0.5)
        ys, regret = exhaustive_worst_labels(ERMFollower(Thresholds1D()), Thresholds1D(), values,
                                             np.zeros(4, dtype=np.int64), ABS)
        assert regret == 2.0
        assert ys.tolist() == [1, 0, 1, 0]

    def test_dominates_random_labels(self):
        rng = np.random.default_rng(0)
        values = rng.random(8)
        coords = np.zeros(8, dtype=np.int64)
        _, worst = exhaustive_worst_labels(ERMFollower(Thresholds1D()), Thresholds1D(), values, coords, ABS)
        lt = loss_table(ABS)
        for _ in range(30):
            ys = rng.integers(0, 2, 8)
            p = ERMFollower(Thresholds1D()).run(values, coords, ys)
            reg = np.abs(p - ys).sum() - min_cumulative_loss(Thresholds1D(), values, coords, ys, lt)
            assert reg <= worst + 1e-12

    def test_horizon_cap(self):
        with pytest.raises(ValueError):
            exhaustive_worst_labels(ERMFollower(Thresholds1D()), Thresholds1D(), np.zeros(21),
                                    np.zeros(21, dtype=np.int64), ABS)
