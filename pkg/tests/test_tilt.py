"""Extinction-conditioning tests.

Anchored to hand-computed fractions (derived once from the fixed-point
equations and litter algebra, independent of the code under test):

* supercritical example, q = 1/3: tilted pmf (3/4, 1/4), tilted mean 1/2;
* geometric(1/3), q = 1/2: tilted law geometric(2/3);
* splitting example, q = 5/11: tilted life masses (73/110, 37/110),
  tilted splits (121/146, 25/146) at age 1 and (121/296, 175/296) at
  age 2, tilted mean 5/8;
* age-independent splits leave the life-length law untouched;
* two-type flip: tilted mean matrix [[0, 1/2], [1/2, 0]].

On top of the anchors, every variant must satisfy the defining identity
of the conditioned law, f~(z) = f(q z) / q, on a grid, and the closed
forms must match the rejection route in distribution.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from branchtilt.kernels import BGWModel, TabularOffspring, mean_matrix, offspring_pgf, offspring_pgf_gradient
from branchtilt.simulate import run_population, stream_for
from branchtilt.tilt import (
    ConditioningUndefinedError,
    RejectionSampler,
    rn_weight,
    tilt_model,
)

RNG_SEED = 20_240_820


def _rng(salt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([RNG_SEED, salt]))


# == 1. closed-form anchors =============================================


class TestTabularTilt:
    def test_supercritical_example(self, bgw_super):
        tilted = tilt_model(bgw_super, q=(1.0 / 3.0,))
        law = tilted.model.laws[0]
        probs = dict(zip(law.outcomes, law.probs))
        assert probs[(0,)] == pytest.approx(3.0 / 4.0, abs=1e-12)
        assert probs[(2,)] == pytest.approx(1.0 / 4.0, abs=1e-12)
        assert mean_matrix(tilted)[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_subcritical_tilt_is_identity(self, bgw_sub):
        tilted = tilt_model(bgw_sub)
        assert tilted.q[0] == pytest.approx(1.0, abs=1e-10)
        assert tilted.model.laws[0].probs == pytest.approx(bgw_sub.laws[0].probs, abs=1e-11)

    def test_flip_example(self, bgw_flip):
        tilted = tilt_model(bgw_flip, q=(1.0 / 3.0, 1.0 / 3.0))
        for s in (0, 1):
            law = tilted.model.laws[s]
            probs = {sum(k): p for k, p in zip(law.outcomes, law.probs)}
            assert probs[0] == pytest.approx(3.0 / 4.0, abs=1e-12)
            assert probs[2] == pytest.approx(1.0 / 4.0, abs=1e-12)
        assert mean_matrix(tilted) == pytest.approx(
            np.array([[0.0, 0.5], [0.5, 0.0]]), abs=1e-12
        )

    def test_geometric_example(self, bgw_geometric):
        tilted = tilt_model(bgw_geometric, q=(0.5,))
        law = tilted.model.laws[0]
        assert law.p == pytest.approx(2.0 / 3.0, abs=1e-12)
        for k in range(6):
            assert law.p * (1 - law.p) ** k == pytest.approx(
                (2.0 / 3.0) * (1.0 / 3.0) ** k, abs=1e-12
            )


class TestSplittingTilt:
    def test_age_dependent_split_example(self, sevastyanov_uniform):
        tilted = tilt_model(sevastyanov_uniform, q=(5.0 / 11.0,))
        model = tilted.model
        masses = dict(model.life_atoms)
        assert masses[1.0] == pytest.approx(73.0 / 110.0, abs=1e-12)
        assert masses[2.0] == pytest.approx(37.0 / 110.0, abs=1e-12)
        at1 = dict(model.split_by_age[0])
        at2 = dict(model.split_by_age[1])
        assert at1[0] == pytest.approx(121.0 / 146.0, abs=1e-12)
        assert at1[2] == pytest.approx(25.0 / 146.0, abs=1e-12)
        assert at2[0] == pytest.approx(121.0 / 296.0, abs=1e-12)
        assert at2[2] == pytest.approx(175.0 / 296.0, abs=1e-12)
        assert mean_matrix(tilted)[0, 0] == pytest.approx(5.0 / 8.0, abs=1e-12)

    def test_age_independent_split_keeps_life_law(self, markov_splitting):
        tilted = tilt_model(markov_splitting, q=(1.0 / 3.0,))
        model = tilted.model
        assert model.exp_rate == 1.0
        split = dict(model.split_const)
        assert split[0] == pytest.approx(3.0 / 4.0, abs=1e-12)
        assert split[2] == pytest.approx(1.0 / 4.0, abs=1e-12)

    def test_constant_split_atoms_keep_life_law(self):
        from branchtilt.kernels import SevastyanovModel

        model = SevastyanovModel(
            life_atoms=((1.0, 0.5), (2.0, 0.5)),
            split_by_age=(((0, 0.25), (2, 0.75)), ((0, 0.25), (2, 0.75))),
        )
        tilted = tilt_model(model, q=(1.0 / 3.0,))
        assert dict(tilted.model.life_atoms)[1.0] == pytest.approx(0.5, abs=1e-12)
        assert dict(tilted.model.life_atoms)[2.0] == pytest.approx(0.5, abs=1e-12)


class TestGeneralTilt:
    def test_symmetric_two_type_example(self, general_two_type):
        # symmetric marks give q = 1/3 per type, the scalar root again
        tilted = tilt_model(general_two_type)
        assert tilted.q[0] == pytest.approx(1.0 / 3.0, abs=1e-10)
        life = tilted.model.lives[0]
        counts = dict(life.count_pmf)
        assert counts[0] == pytest.approx(3.0 / 4.0, abs=1e-9)
        assert counts[2] == pytest.approx(1.0 / 4.0, abs=1e-9)
        assert life.type_probs == pytest.approx((0.5, 0.5), abs=1e-9)
        base = general_two_type.lives[0]
        assert life.age_kind == base.age_kind
        assert life.age_params == base.age_params
        assert life.life_span == base.life_span


# == 2. the defining identity ===========================================


GRIDS = {
    1: [(0.0,), (0.3,), (0.7,), (1.0,)],
    2: [(0.0, 0.0), (0.5, 0.3), (0.2, 0.9), (1.0, 1.0)],
}


class TestDefiningIdentity:
    @pytest.mark.parametrize(
        "name",
        ["bgw_super", "bgw_geometric", "bgw_flip", "sevastyanov_uniform",
         "markov_splitting", "general_two_type"],
    )
    def test_tilted_pgf_matches_reweighted_base(self, name, request):
        model = request.getfixturevalue(name)
        tilted = tilt_model(model)
        q = np.asarray(tilted.q)
        for z in GRIDS[model.m]:
            for s in range(model.m):
                lhs = offspring_pgf(tilted.model, s, z)
                rhs = offspring_pgf(model, s, q * np.asarray(z)) / q[s]
                assert lhs == pytest.approx(rhs, abs=1e-10)

    @pytest.mark.parametrize(
        "name",
        ["bgw_super", "bgw_geometric", "bgw_flip", "sevastyanov_uniform",
         "markov_splitting", "general_two_type"],
    )
    def test_tilted_mean_matches_gradient_route(self, name, request):
        # row s of the tilted mean matrix is q_s' d f_s / d z_s' (q) / q_s
        model = request.getfixturevalue(name)
        tilted = tilt_model(model)
        q = np.asarray(tilted.q)
        got = mean_matrix(tilted)
        for s in range(model.m):
            expected = q * offspring_pgf_gradient(model, s, q) / q[s]
            assert got[s] == pytest.approx(expected, abs=1e-9)


# == 3. validation ======================================================


class TestTiltValidation:
    def test_immortal_type_rejected(self):
        chain = BGWModel((TabularOffspring(1, ((1,),), (1.0,)),))
        with pytest.raises(ConditioningUndefinedError):
            tilt_model(chain)

    def test_wrong_q_shape_rejected(self, bgw_super):
        with pytest.raises(ValueError):
            tilt_model(bgw_super, q=(0.5, 0.5))
        with pytest.raises(ValueError):
            tilt_model(bgw_super, q=(1.5,))

    def test_inconsistent_q_rejected(self, bgw_super):
        # 0.9 is not a fixed point, so the tilted pmf cannot sum to 1
        with pytest.raises(ValueError):
            tilt_model(bgw_super, q=(0.9,))

    def test_tilted_twin_dies_surely(self, bgw_super):
        tilted = tilt_model(bgw_super)
        for r in range(300):
            out = run_population(tilted, 0, rng=stream_for(RNG_SEED, r))
            assert out.extinct


# == 4. change-of-measure weights =======================================


class TestRnWeights:
    def test_hand_values(self):
        q = (1.0 / 3.0,)
        assert rn_weight(q, 0, ()) == pytest.approx(3.0, abs=1e-12)
        assert rn_weight(q, 0, (0, 0)) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_first_generation_mean_is_one_exactly(self):
        q = (1.0 / 3.0,)
        mean = 0.25 * rn_weight(q, 0, ()) + 0.75 * rn_weight(q, 0, (0, 0))
        assert mean == pytest.approx(1.0, abs=1e-12)

    def test_first_generation_mean_is_one_by_simulation(self, bgw_super):
        q = (1.0 / 3.0,)
        weights = []
        for r in range(2000):
            out = run_population(bgw_super, 0, max_generation=1, rng=stream_for(RNG_SEED + 1, r))
            k = sum(out.generation_counts[1]) if len(out.generation_counts) > 1 else 0
            weights.append(rn_weight(q, 0, (0,) * k))
        mean = float(np.mean(weights))
        se = float(np.std(weights, ddof=1)) / math.sqrt(len(weights))
        assert abs(mean - 1.0) < 4 * se

    def test_zero_q_member_kills_weight(self):
        assert rn_weight((0.5, 0.0), 0, (1,)) == 0.0

    def test_zero_q_root_is_undefined(self):
        with pytest.raises(ConditioningUndefinedError):
            rn_weight((0.0, 0.5), 0, (1,))


# == 5. rejection route =================================================


class TestRejectionSampler:
    def test_matches_tilted_pmf(self, bgw_super):
        sampler = RejectionSampler(bgw_super, q=(1.0 / 3.0,))
        rng = _rng(30)
        n = 3000
        zeros = sum(1 for _ in range(n) if not sampler.sample_career(0, rng).births)
        p_hat = zeros / n
        se = math.sqrt(0.75 * 0.25 / n)
        assert abs(p_hat - 0.75) < 4 * se

    def test_acceptance_rate_estimates_q(self, bgw_super):
        sampler = RejectionSampler(bgw_super, q=(1.0 / 3.0,))
        rng = _rng(31)
        sampler.sample_careers(0, 2000, rng)
        se = math.sqrt((1.0 / 3.0) * (2.0 / 3.0) / sampler.attempts)
        assert abs(sampler.acceptance_rate - 1.0 / 3.0) < 4 * se

    def test_matches_tilted_life_law(self, sevastyanov_uniform):
        # accepted careers carry the tilted joint law: litter sizes follow
        # (11/16, 5/16) and life lengths follow (73/110, 37/110)
        sampler = RejectionSampler(sevastyanov_uniform, q=(5.0 / 11.0,))
        rng = _rng(32)
        careers = sampler.sample_careers(0, 3000, rng)
        childless = np.mean([not c.births for c in careers])
        short = np.mean([c.life_span == 1.0 for c in careers])
        assert abs(childless - 11.0 / 16.0) < 4 * math.sqrt((11 / 16) * (5 / 16) / 3000)
        assert abs(short - 73.0 / 110.0) < 4 * math.sqrt((73 / 110) * (37 / 110) / 3000)

    def test_watchdog_fires(self):
        stubborn = BGWModel((TabularOffspring(1, ((2,),), (1.0,)),))
        sampler = RejectionSampler(stubborn, q=(1e-9,), max_attempts=100)
        with pytest.raises(RuntimeError, match="no career accepted"):
            sampler.sample_career(0, _rng(33))

    def test_runs_inside_the_engine(self, bgw_super):
        sampler = RejectionSampler(bgw_super, q=(1.0 / 3.0,))
        out = run_population(sampler, 0, rng=_rng(34))
        assert out.extinct
        assert sampler.attempts >= sampler.accepts == out.total_progeny
