import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dist
from setpred.errors import (
    EmptyPrediction,
    InvalidParams,
    NonMonotoneProvider,
    ProviderExhaustedEarly,
    SizeOutOfRange,
    ThetaOutOfRange,
    UniverseMismatch,
    UniverseTooLarge,
)
from setpred.inference import (
    ClassDist,
    PredictionSet,
    brute_force_bayes,
    compute_regret,
    expected_utility,
    prefix_utility_curve,
    svbop,
    threshold_predict,
    top_s_predict,
)
from setpred.providers import SortedDistProvider
from setpred.utility import credal, fbeta, gen_reject, precision, recall, reject


class TestClassDist:
    def test_rejects_duplicate_ids(self):
        with pytest.raises(InvalidParams):
            ClassDist(np.array([1, 1]), np.array([0.5, 0.5]))

    def test_rejects_unnormalized_when_flagged(self):
        with pytest.raises(InvalidParams):
            ClassDist(np.array([1, 2]), np.array([0.5, 0.3]))
        ClassDist(np.array([1, 2]), np.array([0.5, 0.3]), normalized=False)

    def test_sorted_desc_breaks_ties_by_id(self):
        dist = ClassDist.from_dict({3: 0.25, 1: 0.5, 2: 0.25})
        ids, masses = dist.sorted_desc()
        assert ids.tolist() == [1, 2, 3]
        assert masses.tolist() == [0.5, 0.25, 0.25]


class TestExpectedUtility:
    def test_spread_mass_flat_sets(self):
        # ten classes at 0.1 within a 100-class universe
        masses = np.zeros(100)
        masses[:10] = 0.1
        dist = ClassDist.from_masses(masses)
        assert expected_utility(dist, list(range(10)), precision()) == pytest.approx(0.1)
        assert expected_utility(dist, [0], precision()) == pytest.approx(0.1)

    def test_direct_formula(self):
        dist = ClassDist.from_dict({1: 0.6, 2: 0.3, 3: 0.1})
        assert expected_utility(dist, [1, 2], fbeta(1)) == pytest.approx(0.6)

    def test_absent_ids_contribute_zero(self):
        dist = ClassDist.from_dict({1: 1.0})
        assert expected_utility(dist, [1, 99], fbeta(1)) == pytest.approx(2 / 3)

    def test_empty(self):
        with pytest.raises(EmptyPrediction):
            expected_utility(ClassDist.from_dict({1: 1.0}), [], precision())


class _ListProvider:
    def __init__(self, pairs):
        self.pairs = pairs
        self.num_classes = len(pairs)
        self.i = 0

    def init_prediction(self, x=None):
        self.i = 0

    def get_next_class(self):
        if self.i >= len(self.pairs):
            return None
        self.i += 1
        return self.pairs[self.i - 1]


class TestSvbop:
    def test_all_mass_at_mode(self):
        dist = ClassDist.from_dict({1: 1.0, 2: 0.0, 3: 0.0})
        for spec in (precision(), fbeta(1), credal(2.2, 1.2)):
            result = svbop(SortedDistProvider(dist), spec)
            assert result.classes == (1,)
            assert result.utility_value == pytest.approx(1.0)

    def test_even_pair_prefers_both_under_f1(self):
        dist = ClassDist.from_dict({1: 0.5, 2: 0.5, **{c: 0.0 for c in range(3, 11)}})
        result = svbop(SortedDistProvider(dist), fbeta(1))
        assert result.classes == (1, 2)
        assert result.utility_value == pytest.approx(2 / 3)
        oracle = brute_force_bayes(dist, fbeta(1))
        assert result.utility_value == pytest.approx(oracle.utility_value, abs=1e-12)

    def test_credal_matches_oracle(self):
        dist = ClassDist.from_dict({1: 0.6, 2: 0.3, 3: 0.1})
        spec = credal(2.2, 1.2)
        result = svbop(SortedDistProvider(dist), spec)
        oracle = brute_force_bayes(dist, spec)
        assert result.classes == oracle.classes
        assert result.utility_value == pytest.approx(oracle.utility_value, abs=1e-12)

    def test_exact_tie_goes_to_larger_set(self):
        # precision leaves prefix utilities tied at 0.5; the loop keeps
        # replacing on ties, so the pair wins
        dist = ClassDist.from_dict({1: 0.5, 2: 0.5})
        result = svbop(SortedDistProvider(dist), precision())
        assert result.classes == (1, 2)

    def test_zero_mass_tail_stops_early(self):
        masses = np.zeros(50)
        masses[:3] = [0.6, 0.3, 0.1]
        result = svbop(SortedDistProvider(ClassDist.from_masses(masses)), fbeta(1))
        assert result.steps_queried <= 5

    def test_non_monotone_provider_detected(self):
        provider = _ListProvider([(0, 0.3), (1, 0.5)])
        with pytest.raises(NonMonotoneProvider):
            svbop(provider, fbeta(1))

    def test_exhausted_provider(self):
        with pytest.raises(ProviderExhaustedEarly):
            svbop(_ListProvider([]), fbeta(1))

    def test_refuses_non_convex_without_full_scan(self):
        dist = random_dist(np.random.default_rng(0), 20)
        spec = gen_reject(0.5, 0.2, 20)  # not (1/x)-convex
        with pytest.raises(InvalidParams):
            svbop(SortedDistProvider(dist), spec)
        svbop(SortedDistProvider(dist), spec, force_full_scan=True)

    def test_refuses_reject_kind(self):
        dist = random_dist(np.random.default_rng(0), 10)
        with pytest.raises(InvalidParams):
            svbop(SortedDistProvider(dist), reject(0.3, 10))

    def test_full_scan_degenerate_spec_returns_singleton(self):
        # g(1) = 1 and g(s) < 1/s beyond: the mode is the unique optimum
        rng = np.random.default_rng(3)
        for _ in range(50):
            k = int(rng.integers(2, 16))
            dist = random_dist(rng, k)
            result = svbop(SortedDistProvider(dist), gen_reject(1.0, 0.1, k),
                           force_full_scan=True)
            assert len(result) == 1


class TestBruteForce:
    def test_trivial(self):
        assert brute_force_bayes(ClassDist.from_dict({1: 1.0}), precision()).classes == (1,)

    def test_guard(self):
        with pytest.raises(UniverseTooLarge):
            brute_force_bayes(ClassDist.from_masses(np.full(23, 1 / 23)), precision())

    def test_optimum_is_a_prefix_of_the_sorted_order(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            k = int(rng.integers(2, 13))
            dist = random_dist(rng, k)
            ids, _ = dist.sorted_desc()
            result = brute_force_bayes(dist, fbeta(5))
            assert list(result.classes) == ids[: len(result)].tolist()

    def test_uniform_f5_prefers_large_sets(self):
        dist = ClassDist.from_masses(np.full(10, 0.1))
        result = brute_force_bayes(dist, fbeta(5))
        # g_F5(s) * s/10 increases with s for s <= 10
        assert len(result) == 10


class TestPrefixCurve:
    def test_two_point_curves(self):
        dist = ClassDist.from_dict({1: 0.5, 2: 0.5})
        np.testing.assert_allclose(prefix_utility_curve(dist, fbeta(1)), [0.5, 2 / 3])
        dist = ClassDist.from_dict({1: 1.0, 2: 0.0})
        np.testing.assert_allclose(prefix_utility_curve(dist, precision()), [1.0, 0.5])

    def test_matches_expected_utility_recomputation(self):
        rng = np.random.default_rng(5)
        dist = random_dist(rng, 20)
        spec = credal(1.6, 0.6)
        curve = prefix_utility_curve(dist, spec)
        ids, _ = dist.sorted_desc()
        for s in range(1, 21):
            assert curve[s - 1] == pytest.approx(
                expected_utility(dist, ids[:s].tolist(), spec), abs=1e-12
            )

    def test_unimodal_after_first_decrease(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            k = int(rng.integers(3, 20))
            dist = random_dist(rng, k)
            for spec in (precision(), fbeta(1), credal(2.2, 1.2)):
                curve = prefix_utility_curve(dist, spec)
                diffs = np.diff(curve)
                drops = np.flatnonzero(diffs < 0)
                if drops.size:
                    tol = 1e-12 * np.abs(curve).max()
                    assert not (diffs[drops[0]:] > tol).any()

    def test_early_stop_probes_one_past_the_peak(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            k = int(rng.integers(3, 20))
            dist = random_dist(rng, k)
            result = svbop(SortedDistProvider(dist), fbeta(1))
            peak = int(np.argmax(prefix_utility_curve(dist, fbeta(1)))) + 1
            assert len(result) == peak
            assert result.steps_queried - peak in (0, 1)


class TestBaselines:
    def test_top_s(self):
        dist = ClassDist.from_dict({1: 0.6, 2: 0.3, 3: 0.1})
        assert top_s_predict(dist, 2).classes == (1, 2)
        assert top_s_predict(dist, 3).classes == (1, 2, 3)

    def test_top_s_tie_prefers_lower_id(self):
        dist = ClassDist.from_dict({1: 0.5, 2: 0.5})
        assert top_s_predict(dist, 1).classes == (1,)

    def test_top_s_range(self):
        dist = ClassDist.from_dict({1: 1.0})
        with pytest.raises(SizeOutOfRange):
            top_s_predict(dist, 2)
        with pytest.raises(SizeOutOfRange):
            top_s_predict(dist, 0)

    def test_threshold(self):
        dist = ClassDist.from_dict({1: 0.5, 2: 0.3, 3: 0.2})
        assert threshold_predict(dist, 0.7).classes == (1, 2)
        assert threshold_predict(dist, 0.5).classes == (1,)
        assert threshold_predict(dist, 1.0).classes == (1, 2, 3)

    def test_theta_range(self):
        dist = ClassDist.from_dict({1: 1.0})
        with pytest.raises(ThetaOutOfRange):
            threshold_predict(dist, 1.5)


class TestRegret:
    def test_zero_when_estimate_is_exact(self):
        dist = random_dist(np.random.default_rng(8), 10)
        regret, l1 = compute_regret(dist, dist, fbeta(1))
        assert regret == 0.0
        assert l1 == 0.0

    def test_bound_instance(self):
        true = ClassDist.from_dict({1: 0.6, 2: 0.4})
        est = ClassDist.from_dict({1: 0.4, 2: 0.6})
        regret, l1 = compute_regret(true, est, precision())
        assert l1 == pytest.approx(0.4)
        assert 0.0 <= regret <= 2 * l1

    def test_universe_mismatch(self):
        with pytest.raises(UniverseMismatch):
            compute_regret(
                ClassDist.from_dict({1: 1.0}), ClassDist.from_dict({2: 1.0}), precision()
            )

    def test_randomized_bound(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            true = random_dist(rng, 12)
            est = random_dist(rng, 12)
            regret, l1 = compute_regret(true, est, fbeta(1))
            assert 0.0 <= regret <= 2 * l1 + 1e-12


def test_scale_invariance_of_decisions():
    rng = np.random.default_rng(10)
    for _ in range(50):
        k = int(rng.integers(2, 15))
        masses = rng.dirichlet(np.ones(k))
        a = float(rng.uniform(0.1, 50.0))
        dist = ClassDist.from_masses(masses)
        scaled = ClassDist(dist.ids, masses * a, normalized=False)
        for spec in (fbeta(1), credal(1.6, 0.6)):
            r1 = svbop(SortedDistProvider(dist), spec)
            r2 = svbop(SortedDistProvider(scaled), spec)
            assert r1.classes == r2.classes
            assert r2.utility_value == pytest.approx(a * r1.utility_value, rel=1e-9)
        assert top_s_predict(dist, 1).classes == top_s_predict(scaled, 1).classes


@settings(max_examples=150, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    k=st.integers(2, 12),
    spec=st.sampled_from([precision(), fbeta(1), fbeta(5), credal(1.6, 0.6), credal(2.2, 1.2)]),
)
def test_svbop_equals_exhaustive_search(seed, k, spec):
    dist = random_dist(np.random.default_rng(seed), k)
    fast = svbop(SortedDistProvider(dist), spec)
    slow = brute_force_bayes(dist, spec)
    assert abs(fast.utility_value - slow.utility_value) <= 1e-12


def test_prediction_set_must_not_be_empty():
    with pytest.raises(EmptyPrediction):
        PredictionSet((), 0.0)
