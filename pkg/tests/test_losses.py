import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonstat.losses import NotMixable, LossKind, brier, eval_loss, from_name, logarithmic, mixability_eta

KINDS = [LossKind("absolute"), LossKind("log", 0.01), LossKind("brier")]
unit = st.floats(0.0, 1.0)


class TestEvalLoss:
    def test_absolute(self):
        assert eval_loss(LossKind("absolute"), 0.3, 1) == pytest.approx(0.7)

    def test_log_half(self):
        assert eval_loss(logarithmic(0.01), 0.5, 0) == pytest.approx(math.log(2))

    def test_log_clamped(self):
        assert eval_loss(logarithmic(0.01), 0.0, 1) == pytest.approx(-math.log(0.01))
        assert eval_loss(logarithmic(0.01), 0.0, 1) == pytest.approx(4.6052, abs=1e-4)

    def test_brier(self):
        assert eval_loss(brier(), 0.25, 1) == pytest.approx(0.5625)

    def test_broadcasts(self):
        out = eval_loss(LossKind("absolute"), np.array([0.0, 0.5, 1.0]), np.array([1, 1, 1]))
        np.testing.assert_allclose(out, [1.0, 0.5, 0.0])

    def test_bad_kind_and_alpha(self):
        with pytest.raises(ValueError):
            LossKind("hinge")
        with pytest.raises(ValueError):
            LossKind("log", 0.5)
        assert from_name("brier").kind == "brier"


class TestMixability:
    def test_constants(self):
        assert mixability_eta(logarithmic(0.1)) == 1.0
        assert mixability_eta(brier()) == 2.0
        with pytest.raises(NotMixable):
            mixability_eta(LossKind("absolute"))

    def test_brier_mixability_grid(self):
        # For every pair of predictions and weight there is one prediction
        # whose loss on both labels is at most the eta-mixture loss.
        eta = mixability_eta(brier())
        # p works iff 1 - sqrt(mix1) <= p <= sqrt(mix0).
        grid = np.linspace(0, 1, 21)
        for p1 in grid:
            for p2 in grid:
                for w in np.linspace(0, 1, 11):
                    mix = [
                        -math.log(w * math.exp(-eta * (p1 - y) ** 2) + (1 - w) * math.exp(-eta * (p2 - y) ** 2)) / eta
                        for y in (0, 1)
                    ]
                    assert 1 - math.sqrt(mix[1]) <= math.sqrt(mix[0]) + 1e-9

    def test_brier_not_mixable_above_two(self):
        # At eta = 3 some mixture admits no substitution prediction.
        eta = 3.0
        cand = np.linspace(0, 1, 20001)
        mix = [-math.log(0.5 * math.exp(-eta * (0 - y) ** 2) + 0.5 * math.exp(-eta * (1 - y) ** 2)) / eta for y in (0, 1)]
        ok = (cand**2 <= mix[0]) & ((1 - cand) ** 2 <= mix[1])
        assert not ok.any()


class TestProperties:
    @given(a=unit, b=unit, lam=unit, y=st.integers(0, 1), k=st.sampled_from(range(3)))
    def test_convexity(self, a, b, lam, y, k):
        # Truncated log loss is convex only on [alpha, 1 - alpha].
        kind = KINDS[k]
        if kind.kind == "log":
            lo = kind.truncation_alpha
            a, b = lo + (1 - 2 * lo) * a, lo + (1 - 2 * lo) * b
        lhs = eval_loss(kind, lam * a + (1 - lam) * b, y)
        rhs = lam * eval_loss(kind, a, y) + (1 - lam) * eval_loss(kind, b, y)
        assert lhs <= rhs + 1e-9

    @given(p=unit, y=st.integers(0, 1), k=st.sampled_from(range(3)))
    def test_bounded(self, p, y, k):
        kind = KINDS[k]
        v = eval_loss(kind, p, y)
        assert 0.0 <= v <= kind.bound + 1e-12

    @given(p=unit)
    def test_absolute_symmetry(self, p):
        kind = LossKind("absolute")
        assert eval_loss(kind, p, 1) == pytest.approx(eval_loss(kind, 1 - p, 0))
