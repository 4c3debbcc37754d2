import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setpred.errors import (
    InvalidParams,
    NonPositiveG,
    NotNormalized,
    SizeOutOfRange,
    UndefinedAtSize,
    EmptyPrediction,
)
from setpred.utility import (
    UtilitySpec,
    credal,
    dominates_precision,
    eval_g,
    eval_u,
    exponential,
    fbeta,
    g_table,
    gen_reject,
    gen_reject_admissible_region,
    is_concave,
    is_one_over_x_convex,
    is_strictly_decreasing,
    logarithmic,
    normalized,
    parse_utility,
    precision,
    recall,
    reject,
)


class TestClosedForms:
    def test_precision(self):
        assert eval_g(precision(), 4) == 0.25

    def test_recall_is_constant_one(self):
        assert all(eval_g(recall(), s) == 1.0 for s in (1, 3, 17))

    def test_f1(self):
        assert eval_g(fbeta(1), 3) == 0.5
        # the F1 column exactly: (1+1)/(s+1)
        for s in range(1, 40):
            assert eval_g(fbeta(1), s) == 2.0 / (1.0 + s)

    def test_credal(self):
        assert eval_g(credal(1.6, 0.6), 2) == pytest.approx(0.65, abs=0)

    def test_exponential_and_logarithmic(self):
        assert eval_g(exponential(1.0), 1) == pytest.approx(1 - math.exp(-1))
        assert eval_g(logarithmic(), 1) == pytest.approx(math.log(2))

    def test_reject_two_point(self):
        spec = reject(0.3, 10)
        assert eval_g(spec, 1) == 1.0
        assert eval_g(spec, 10) == 0.7
        with pytest.raises(UndefinedAtSize):
            eval_g(spec, 5)

    def test_gen_reject(self):
        assert eval_g(gen_reject(0.5, 1, 5), 5) == 0.5

    def test_size_out_of_range(self):
        with pytest.raises(SizeOutOfRange):
            eval_g(precision(), 0)
        with pytest.raises(SizeOutOfRange):
            eval_g(gen_reject(0.5, 1, 5), 6)


class TestValidation:
    def test_fbeta_needs_positive_beta(self):
        with pytest.raises(InvalidParams):
            fbeta(0.0)

    def test_credal_range_checked_numerically(self):
        with pytest.raises(InvalidParams):
            credal(3.0, 0.0)  # g(1) = 3
        with pytest.raises(InvalidParams):
            credal(1.0, 1.5)  # g(1) < 0
        credal(2.2, 1.2)  # recommended parameterization is fine

    def test_reject_alpha_range(self):
        with pytest.raises(InvalidParams):
            reject(1.0, 10)
        with pytest.raises(InvalidParams):
            reject(0.5, None)

    def test_gen_reject_requires_k(self):
        with pytest.raises(InvalidParams):
            UtilitySpec("gen_reject", alpha=0.5, beta=1.0)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParams):
            UtilitySpec("hamming")


class TestEvalU:
    def test_hit_singleton(self):
        assert eval_u(fbeta(1), 3, [3]) == 1.0

    def test_miss(self):
        assert eval_u(fbeta(1), 3, [1, 2]) == 0.0

    def test_hit_in_triple(self):
        assert eval_u(precision(), 7, [7, 2, 9]) == pytest.approx(1 / 3)

    def test_empty_prediction(self):
        with pytest.raises(EmptyPrediction):
            eval_u(precision(), 1, [])


class TestSequenceCheckers:
    def test_strictly_decreasing(self):
        assert not is_strictly_decreasing(recall(), 10)
        assert is_strictly_decreasing(precision(), 10)
        assert is_strictly_decreasing(gen_reject(0.8, 2, 10), 10)

    def test_one_over_x_convex_boundary_cases(self):
        # precision satisfies the condition with exact equality
        assert is_one_over_x_convex(precision(), 100)
        assert is_one_over_x_convex(recall(), 100)

    def test_gen_reject_can_violate_convexity(self):
        # found by scanning; beta < 1 bends g the wrong way
        spec = gen_reject(0.5, 0.2, 100)
        assert not is_one_over_x_convex(spec, 100)

    def test_non_positive_g(self):
        with pytest.raises(NonPositiveG):
            is_one_over_x_convex(gen_reject(1.0, 1.0, 10), 10)

    def test_concavity(self):
        assert is_concave(gen_reject(0.8, 3, 100), 100)
        assert not is_concave(precision(), 100)
        assert is_concave(recall(), 100)

    def test_dominates_precision(self):
        assert dominates_precision(fbeta(1), 100)
        assert dominates_precision(precision(), 100)
        assert not dominates_precision(gen_reject(1.0, 1.0, 100), 100)

    def test_domination_requires_normalization(self):
        with pytest.raises(NotNormalized):
            dominates_precision(exponential(1.0), 100)
        with pytest.raises(NotNormalized):
            dominates_precision(logarithmic(), 100)

    def test_rescaled_specs(self):
        spec = normalized(exponential(1.0))
        assert eval_g(spec, 1) == 1.0
        # 1 - exp(-1/s) shrinks slower than 1/s, so the rescaled
        # sequence stays above precision
        assert dominates_precision(spec, 100)
        assert dominates_precision(normalized(logarithmic()), 100)


class TestAdmissibleRegion:
    def test_k_100(self):
        alpha_max, beta_min = gen_reject_admissible_region(100)
        assert alpha_max == pytest.approx(0.99)
        assert beta_min == pytest.approx(math.log(50) / math.log(1 / 99) + 1, rel=1e-12)
        assert beta_min == pytest.approx(0.1487, abs=5e-5)

    def test_limits(self):
        # both bounds flatten out as the class count grows
        prev_beta = gen_reject_admissible_region(100)[1]
        for k in (10**4, 10**6, 10**8):
            alpha_max, beta_min = gen_reject_admissible_region(k)
            assert alpha_max == (k - 1) / k
            assert beta_min < prev_beta
            prev_beta = beta_min
        assert gen_reject_admissible_region(10**8)[1] < 0.04

    def test_region_guarantees_domination(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            k = int(rng.integers(3, 201))
            alpha_max, beta_min = gen_reject_admissible_region(k)
            alpha = float(rng.uniform(0.05, alpha_max))
            beta = float(beta_min + rng.uniform(0.0, 4.0))
            assert dominates_precision(gen_reject(alpha, beta, k), k)

    def test_below_region_violates(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            k = int(rng.integers(3, 201))
            alpha_max, beta_min = gen_reject_admissible_region(k)
            beta = beta_min - 0.05 - float(rng.uniform(0.0, 0.02))
            assert beta > 0
            assert not dominates_precision(gen_reject(alpha_max, beta, k), k)


def test_decreasing_concave_implies_one_over_x_convex():
    # concave side of the gen_reject family (beta >= 1), random draws
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(200):
        k = int(rng.integers(5, 101))
        spec = gen_reject(float(rng.uniform(0.1, 0.99)), float(rng.uniform(1.0, 6.0)), k)
        if is_strictly_decreasing(spec, k) and is_concave(spec, k):
            assert is_one_over_x_convex(spec, k)
            checked += 1
    assert checked >= 150  # nearly all draws satisfy the hypotheses


@settings(max_examples=200, deadline=None)
@given(
    kind=st.sampled_from(["precision", "recall", "fbeta", "credal", "exponential",
                          "logarithmic", "gen_reject"]),
    data=st.data(),
)
def test_g_stays_in_unit_interval(kind, data):
    k = data.draw(st.integers(min_value=2, max_value=120))
    if kind == "fbeta":
        spec = fbeta(data.draw(st.floats(0.1, 10.0)))
    elif kind == "credal":
        spec = credal(1.6, 0.6, k=k) if data.draw(st.booleans()) else credal(2.2, 1.2, k=k)
    elif kind == "exponential":
        spec = exponential(data.draw(st.floats(0.1, 5.0)))
    elif kind == "gen_reject":
        spec = gen_reject(data.draw(st.floats(0.01, 1.0)), data.draw(st.floats(0.1, 6.0)), k)
    elif kind == "precision":
        spec = precision()
    elif kind == "recall":
        spec = recall()
    else:
        spec = logarithmic()
    for s in range(1, k + 1):
        value = eval_g(spec, s)
        assert 0.0 <= value <= 1.0


def test_g_table_matches_on_demand_bitwise():
    for spec in (precision(), fbeta(5), credal(2.2, 1.2), gen_reject(0.9, 2, 64)):
        table = g_table(spec, 64)
        assert all(table[s - 1] == eval_g(spec, s) for s in range(1, 65))


class TestParsing:
    def test_simple_kinds(self):
        assert parse_utility("precision").kind == "precision"
        assert parse_utility("fbeta:beta=1") == fbeta(1)
        assert parse_utility("credal:delta=2.2,gamma=1.2") == credal(2.2, 1.2)

    def test_genreject_alias_and_k_injection(self):
        spec = parse_utility("genreject:alpha=0.9,beta=2", k=50)
        assert spec == gen_reject(0.9, 2, 50)

    def test_explicit_k_wins(self):
        spec = parse_utility("genreject:alpha=0.9,beta=2,k=10", k=50)
        assert spec.k == 10

    def test_bad_inputs(self):
        with pytest.raises(InvalidParams):
            parse_utility("nope")
        with pytest.raises(InvalidParams):
            parse_utility("fbeta:beta")
        with pytest.raises(InvalidParams):
            parse_utility("genreject:alpha=0.9,beta=2")  # k unknown
