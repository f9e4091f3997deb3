"""Verification-toolkit tests.

The statistics are checked against independent references before being
trusted to judge anything else:

* the two-sample chi-square (with its bin merging) against scipy's
  contingency-table statistic on pre-merged data, and against
  hand-balanced tables whose statistic is exactly zero;
* the power-iteration growth rate against numpy's eigenvalues, plus the
  periodic, nilpotent, reducible, and zero matrices that break naive
  power iteration;
* the Lotka root against logarithms and quadratic roots computed by
  hand: ln(3/2), ln(1/2), +1/2, -1/2;
* then the cross-route checks are run on the example models and must
  all come back green at their stated thresholds.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from branchtilt.kernels import (
    MeanReproMeasure,
    ReproAtom,
    SevastyanovModel,
    TabularOffspring,
    BGWModel,
    UnsupportedModelError,
    mean_reproduction_measure,
)
from branchtilt.verify import (
    branching_property_check,
    chi_square_two_sample,
    conditioned_equivalence_check,
    importance_identity_check,
    malthus_check,
    malthusian_alpha,
    q_agreement_check,
    report_record,
    spectral_radius,
    subcriticality_checks,
    tv_distance,
    verify_suite,
)

RNG_SEED = 20_240_821


# == 1. two-sample chi-square ===========================================


class TestChiSquare:
    def test_identical_samples_are_indistinguishable(self):
        counts = {0: 40, 1: 35, 2: 25}
        result = chi_square_two_sample(counts, dict(counts))
        assert result.statistic == 0.0
        assert result.p_value == 1.0

    def test_matches_contingency_table_statistic(self):
        # no merging needed here, so the statistic must equal scipy's
        # uncorrected contingency chi-square on the same 2 x 3 table
        a = {0: 30, 1: 25, 2: 45}
        b = {0: 40, 1: 20, 2: 40}
        result = chi_square_two_sample(a, b)
        table = np.array([[30, 25, 45], [40, 20, 40]])
        expected = scipy_stats.chi2_contingency(table, correction=False)
        assert result.statistic == pytest.approx(expected.statistic, abs=1e-12)
        assert result.p_value == pytest.approx(expected.pvalue, abs=1e-12)
        assert result.df == 2 and result.bins == 3

    def test_merging_pools_sparse_bins(self):
        # bins 1 and 2 have pooled expectation 2.5 each and must merge;
        # the merged table is perfectly balanced
        a = {0: 50, 1: 3, 2: 2}
        b = {0: 50, 1: 2, 2: 3}
        result = chi_square_two_sample(a, b)
        assert result.bins == 2
        assert result.statistic == 0.0
        assert result.p_value == 1.0

    def test_tail_remainder_joins_last_bin(self):
        a = {0: 50, 1: 50, 2: 1}
        b = {0: 50, 1: 50, 2: 2}
        result = chi_square_two_sample(a, b)
        assert result.bins == 2

    def test_single_bin_is_inconclusive(self):
        result = chi_square_two_sample({0: 99}, {0: 120})
        assert result.bins == 1 and result.df == 0
        assert result.p_value == 1.0

    def test_different_laws_are_flagged(self):
        a = {0: 700, 1: 300}
        b = {0: 300, 1: 700}
        result = chi_square_two_sample(a, b)
        assert result.p_value < 1e-6

    def test_same_law_passes(self):
        rng = np.random.default_rng(np.random.SeedSequence([RNG_SEED, 1]))
        a = dict(zip(*np.unique(rng.binomial(5, 0.3, size=4000), return_counts=True)))
        b = dict(zip(*np.unique(rng.binomial(5, 0.3, size=4000), return_counts=True)))
        result = chi_square_two_sample(
            {int(k): int(v) for k, v in a.items()},
            {int(k): int(v) for k, v in b.items()},
        )
        assert result.p_value > 1e-3

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            chi_square_two_sample({}, {0: 3})


class TestTvDistance:
    def test_hand_value(self):
        assert tv_distance({0: 1, 1: 1}, {0: 1, 3: 1}) == pytest.approx(0.5, abs=1e-15)

    def test_identical_is_zero_and_scale_free(self):
        assert tv_distance({0: 3, 1: 7}, {0: 30, 1: 70}) == pytest.approx(0.0, abs=1e-15)

    def test_disjoint_is_one(self):
        assert tv_distance({0: 5}, {1: 9}) == pytest.approx(1.0, abs=1e-15)


# == 2. growth rate of a mean matrix ====================================


class TestSpectralRadius:
    def test_scalar(self):
        assert spectral_radius([[1.5]]) == pytest.approx(1.5, abs=1e-10)

    def test_periodic_flip(self):
        # plain power iteration oscillates on this one forever
        assert spectral_radius([[0.0, 1.5], [1.5, 0.0]]) == pytest.approx(1.5, abs=1e-10)

    def test_identity_zero_nilpotent_reducible(self):
        assert spectral_radius(np.eye(3)) == pytest.approx(1.0, abs=1e-10)
        assert spectral_radius(np.zeros((2, 2))) == pytest.approx(0.0, abs=1e-10)
        assert spectral_radius([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(0.0, abs=1e-8)
        assert spectral_radius(np.diag([2.5, 1.5])) == pytest.approx(2.5, abs=1e-8)

    def test_matches_eigenvalues_on_random_matrices(self):
        rng = np.random.default_rng(np.random.SeedSequence([RNG_SEED, 2]))
        for _ in range(10):
            m = rng.uniform(0.0, 2.0, size=(4, 4))
            oracle = float(np.max(np.abs(np.linalg.eigvals(m))))
            assert spectral_radius(m) == pytest.approx(oracle, abs=1e-7)

    def test_validation(self):
        with pytest.raises(ValueError):
            spectral_radius([[1.0, -0.1], [0.0, 1.0]])
        with pytest.raises(ValueError):
            spectral_radius([[1.0, 2.0]])


# == 3. the Lotka root ==================================================


class TestMalthusianAlpha:
    def test_supercritical_unit_age(self, bgw_super):
        measure = mean_reproduction_measure(bgw_super, 0)
        assert malthusian_alpha(measure) == pytest.approx(math.log(1.5), abs=1e-8)

    def test_subcritical_unit_age(self, bgw_sub):
        measure = mean_reproduction_measure(bgw_sub, 0)
        assert malthusian_alpha(measure) == pytest.approx(math.log(0.5), abs=1e-8)

    def test_constant_rate_supercritical(self, markov_splitting):
        # density 1.5 e^(-t): 1.5 / (1 + alpha) = 1 at alpha = 1/2
        measure = mean_reproduction_measure(markov_splitting, 0)
        assert malthusian_alpha(measure) == pytest.approx(0.5, abs=1e-8)

    def test_constant_rate_subcritical(self):
        model = SevastyanovModel(
            exp_rate=1.0, split_const=((0, 0.75), (2, 0.25)),
        )
        measure = mean_reproduction_measure(model, 0)
        assert malthusian_alpha(measure) == pytest.approx(-0.5, abs=1e-8)

    def test_critical_law_has_zero_root(self):
        model = BGWModel((TabularOffspring(1, ((0,), (2,)), (0.5, 0.5)),))
        measure = mean_reproduction_measure(model, 0)
        assert malthusian_alpha(measure) == pytest.approx(0.0, abs=1e-8)

    def test_two_atom_root_matches_quadratic(self, sevastyanov_uniform):
        # 0.875 x**2 + 0.5 x = 1 with x = e^(-alpha)
        measure = mean_reproduction_measure(sevastyanov_uniform, 0)
        x = max(np.roots([0.875, 0.5, -1.0]))
        assert malthusian_alpha(measure) == pytest.approx(-math.log(x), abs=1e-8)

    def test_zero_measure_rejected(self):
        model = BGWModel((TabularOffspring(1, ((0,),), (1.0,)),))
        with pytest.raises(ValueError):
            malthusian_alpha(mean_reproduction_measure(model, 0))

    def test_multi_type_rejected(self, bgw_flip):
        with pytest.raises(UnsupportedModelError):
            malthusian_alpha(mean_reproduction_measure(bgw_flip, 0))

    def test_mass_stuck_at_time_zero_has_no_root(self):
        measure = MeanReproMeasure(m=1, atoms=(ReproAtom(0.0, 0, 1.5),))
        with pytest.raises(ValueError):
            malthusian_alpha(measure)


# == 4. cross-route checks on the example models ========================


class TestCrossRouteChecks:
    def test_q_agreement(self, bgw_super):
        reports = q_agreement_check(bgw_super, runs=1200, seed=RNG_SEED)
        assert len(reports) == 1
        assert reports[0].passed
        assert reports[0].name == "q-agreement-type-0"

    def test_equivalence_rejection_route(self, bgw_super):
        report = conditioned_equivalence_check(
            bgw_super, route="rejection", n_tilted=1500, n_base=1500,
            cap=400, seed=RNG_SEED,
        )
        assert report.passed and report.p_value > 1e-3

    def test_equivalence_filter_route(self, bgw_super):
        report = conditioned_equivalence_check(
            bgw_super, route="filter", n_tilted=1500, n_base=4000,
            cap=400, seed=RNG_SEED,
        )
        assert report.passed
        assert report.sample_sizes[1] >= 100

    def test_equivalence_split_model(self, sevastyanov_uniform):
        report = conditioned_equivalence_check(
            sevastyanov_uniform, route="rejection", summary="first_generation",
            n_tilted=1500, n_base=1500, cap=400, seed=RNG_SEED,
        )
        assert report.passed

    def test_equivalence_validation(self, bgw_super):
        with pytest.raises(ValueError):
            conditioned_equivalence_check(bgw_super, route="bogus", seed=RNG_SEED)
        with pytest.raises(ValueError):
            conditioned_equivalence_check(
                bgw_super, route="filter", n_base=30, seed=RNG_SEED
            )

    def test_importance_identity(self, bgw_super):
        for generation in (1, 2):
            report = importance_identity_check(
                bgw_super, generation=generation, runs_base=3000,
                runs_tilted=3000, seed=RNG_SEED,
            )
            assert report.passed, report.note
            assert report.statistic < 4.0

    def test_branching_property(self, bgw_super):
        report = branching_property_check(
            bgw_super, generations=3, runs=3000, seed=RNG_SEED
        )
        assert report.passed, report.note

    def test_branching_property_flip(self, bgw_flip):
        report = branching_property_check(
            bgw_flip, generations=3, runs=3000, seed=RNG_SEED
        )
        assert report.passed
        assert "type 1" in report.note

    def test_subcriticality(self, bgw_super):
        spectral, identity, decay = subcriticality_checks(
            bgw_super, runs=2500, seed=RNG_SEED
        )
        assert spectral.passed and spectral.statistic == pytest.approx(0.5, abs=1e-9)
        assert identity.passed
        assert decay.passed, decay.note

    def test_subcriticality_split_model(self, sevastyanov_uniform):
        spectral, identity, decay = subcriticality_checks(
            sevastyanov_uniform, runs=2500, seed=RNG_SEED
        )
        assert spectral.statistic == pytest.approx(5.0 / 8.0, abs=1e-9)
        assert identity.passed and decay.passed

    def test_malthus_check(self, bgw_super, markov_splitting):
        report = malthus_check(bgw_super)
        assert report.passed
        assert report.statistic == pytest.approx(math.log(1.5), abs=1e-8)
        report = malthus_check(markov_splitting)
        assert report.passed
        assert report.statistic == pytest.approx(0.5, abs=1e-8)


# == 5. suites ==========================================================


class TestSuites:
    def test_full_suite_on_the_supercritical_example(self, bgw_super):
        reports, skipped = verify_suite(bgw_super, "all", runs=700, seed=RNG_SEED)
        assert skipped == []
        names = [r.name for r in reports]
        assert len(names) == len(set(names))
        failed = [r.name for r in reports if not r.passed]
        assert failed == []

    def test_malthus_suite_skips_where_undefined(self, general_two_type):
        reports, skipped = verify_suite(general_two_type, "malthus", seed=RNG_SEED)
        assert reports == []
        assert skipped and "single-type" in skipped[0]

    def test_unknown_suite_rejected(self, bgw_super):
        with pytest.raises(ValueError):
            verify_suite(bgw_super, "everything")

    def test_report_record_serializes(self, bgw_super):
        report = malthus_check(bgw_super)
        record = report_record(report)
        assert "runtime_seconds" not in record
        assert json.loads(json.dumps(record))["name"] == "malthusian-root"
        with_runtime = report_record(report, include_runtime=True)
        assert "runtime_seconds" in with_runtime
