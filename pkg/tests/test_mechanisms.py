import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from dpsynth.errors import (
    BudgetExhausted,
    EmptyCandidates,
    NonPositiveParameter,
    SplitOutOfRange,
)
from dpsynth.mechanisms import (
    BudgetLedger,
    PrivacyBudget,
    Rng,
    exponential_choice,
    laplace,
    split_budget,
)


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(123).generator.normal(size=10)
        b = Rng(123).generator.normal(size=10)
        np.testing.assert_array_equal(a, b)

    def test_children_independent_of_parent_consumption(self):
        parent = Rng(7)
        parent.generator.normal(size=100)
        child_after = parent.child("task").generator.normal(size=5)
        child_fresh = Rng(7).child("task").generator.normal(size=5)
        np.testing.assert_array_equal(child_after, child_fresh)

    def test_distinct_labels_distinct_streams(self):
        r = Rng(7)
        a = r.child("a").generator.normal(size=5)
        b = r.child("b").generator.normal(size=5)
        assert not np.allclose(a, b)


class TestLaplace:
    def test_huge_epsilon_recovers_value(self):
        out = laplace(5.0, 1.0, 1e9, Rng(0))
        assert abs(out - 5.0) < 1e-6

    def test_variance_matches_closed_form(self):
        # Var[Lap(b)] = 2 b^2; b = 2 here
        rng = Rng(42)
        draws = np.array([laplace(0.0, 2.0, 1.0, rng) for _ in range(100_000)])
        assert abs(draws.var() - 8.0) < 0.05 * 8.0

    def test_symmetric_mean(self):
        rng = Rng(3)
        draws = np.array([laplace(0.0, 1.0, 1.0, rng) for _ in range(100_000)])
        assert abs(draws.mean()) < 0.02

    @pytest.mark.parametrize("sens,eps", [(1.0, 0.0), (0.0, 1.0), (-1.0, 1.0), (1.0, -2.0)])
    def test_nonpositive_parameters(self, sens, eps):
        with pytest.raises(NonPositiveParameter):
            laplace(0.0, sens, eps, Rng(0))


class TestExponentialChoice:
    def test_equal_scores_symmetric(self):
        rng = Rng(11)
        draws = [exponential_choice([1.0, 1.0], 1.0, 2.0, rng) for _ in range(10_000)]
        freq = np.mean(np.array(draws) == 0)
        assert abs(freq - 0.5) < 0.02

    def test_epsilon_zero_uniform(self):
        rng = Rng(5)
        draws = np.array([exponential_choice([0.0, 50.0, 99.0], 1.0, 0.0, rng) for _ in range(10_000)])
        counts = np.bincount(draws, minlength=3)
        assert chisquare(counts).pvalue > 0.01

    def test_dominant_score_wins(self):
        rng = Rng(9)
        draws = np.array([exponential_choice([0.0, 100.0], 1.0, 1.0, rng) for _ in range(5_000)])
        assert np.mean(draws == 1) >= 0.999

    def test_shift_invariance(self):
        # same theoretical distribution after adding a constant to all scores
        scores = np.array([0.0, 1.0, 2.5])
        logits = 0.5 * scores
        expected = np.exp(logits - logits.max())
        expected /= expected.sum()
        rng = Rng(21)
        draws = np.array(
            [exponential_choice(scores + 1e4, 1.0, 1.0, rng) for _ in range(10_000)]
        )
        counts = np.bincount(draws, minlength=3)
        assert chisquare(counts, expected * counts.sum()).pvalue > 0.01

    def test_empty_candidates(self):
        with pytest.raises(EmptyCandidates):
            exponential_choice([], 1.0, 1.0, Rng(0))

    def test_overflow_safe(self):
        idx = exponential_choice([1e300, 0.0], 1.0, 1e6, Rng(0))
        assert idx == 0


class TestSplitBudget:
    def test_paper_example(self):
        synth, clf = split_budget(PrivacyBudget(3.0), 0.7)
        assert synth.epsilon == pytest.approx(2.1, rel=1e-12)
        assert clf.epsilon == pytest.approx(0.9, rel=1e-12)
        assert synth.epsilon == 0.7 * 3.0
        assert clf.epsilon == 3.0 - 0.7 * 3.0

    def test_symmetric(self):
        synth, clf = split_budget(PrivacyBudget(1.0), 0.5)
        assert synth.epsilon == clf.epsilon == 0.5

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_out_of_range(self, p):
        with pytest.raises(SplitOutOfRange):
            split_budget(PrivacyBudget(1.0), p)

    @given(
        eps=st.floats(min_value=1e-9, max_value=10.0),
        p=st.floats(min_value=1e-9, max_value=1.0, exclude_max=True),
    )
    @settings(max_examples=300)
    def test_ledger_closes_exactly(self, eps, p):
        synth, clf = split_budget(PrivacyBudget(eps), p)
        ledger = BudgetLedger(PrivacyBudget(eps))
        ledger.spend("synth", synth)
        ledger.spend("clf", clf)
        assert ledger.remaining.epsilon == 0.0
        assert ledger.spent.epsilon == eps

    def test_delta_split(self):
        synth, clf = split_budget(PrivacyBudget(2.0, 0.5), 0.25)
        assert synth.delta == 0.125
        assert clf.delta == 0.375


class TestLedger:
    def test_spend_to_zero(self):
        ledger = BudgetLedger(PrivacyBudget(1.0))
        ledger.spend("a", PrivacyBudget(0.6))
        ledger.spend("b", PrivacyBudget(0.4))
        assert ledger.remaining.epsilon == 0.0

    def test_overspend_rejected(self):
        ledger = BudgetLedger(PrivacyBudget(1.0))
        ledger.spend("a", PrivacyBudget(0.6))
        with pytest.raises(BudgetExhausted):
            ledger.spend("b", PrivacyBudget(0.6))

    def test_quail_composition_example(self):
        ledger = BudgetLedger(PrivacyBudget(3.0))
        synth, clf = split_budget(PrivacyBudget(3.0), 0.7)
        ledger.spend("synthesizer", synth)
        ledger.spend("classifier", clf)
        assert ledger.remaining.epsilon == 0.0
        assert [label for label, _ in ledger.spends] == ["synthesizer", "classifier"]

    def test_never_exceeds_total(self):
        ledger = BudgetLedger(PrivacyBudget(1.0))
        spent = 0.0
        rng = np.random.default_rng(0)
        while True:
            amount = float(rng.uniform(0, 0.3))
            try:
                ledger.spend("x", PrivacyBudget(amount))
                spent += amount
            except BudgetExhausted:
                break
        assert ledger.remaining.epsilon >= 0.0

    def test_delta_exhaustion(self):
        ledger = BudgetLedger(PrivacyBudget(10.0, 1e-5))
        with pytest.raises(BudgetExhausted):
            ledger.spend("a", PrivacyBudget(1.0, 1e-4))


class TestPrivacyBudget:
    def test_negative_epsilon_rejected(self):
        with pytest.raises(NonPositiveParameter):
            PrivacyBudget(-1.0)

    def test_delta_range(self):
        from dpsynth.errors import InvalidSpec

        with pytest.raises(InvalidSpec):
            PrivacyBudget(1.0, 1.5)
