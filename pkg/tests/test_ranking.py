import math
import warnings

import numpy as np
import pytest

from intentrank.errors import DimensionError, InvalidCostError, MaxIterationsWarning
from intentrank.intent import FEEDBACK_NEGATIVE, Feedback, apply_feedback, init_state
from intentrank.ranking import (
    RankerConfig,
    SinkhornConfig,
    rank_candidates,
    score_region,
    sinkhorn_plan,
    sinkhorn_rank,
)
from intentrank.vecmath import l2_normalize

from conftest import unit


def state_with(positives, negatives=()):
    state = init_state(positives[0], None, alpha=1.0)
    for i, p in enumerate(positives[1:]):
        from intentrank.intent import FEEDBACK_REFINE

        state = apply_feedback(state, Feedback(FEEDBACK_REFINE, new_prompt_embedding=p), {})
    lookup = {1000 + i: n for i, n in enumerate(negatives)}
    for rid in lookup:
        state = apply_feedback(state, Feedback(FEEDBACK_NEGATIVE, region_id=rid), lookup)
    return state


def random_state(rng, dim, n_pos, n_neg):
    vecs = [l2_normalize(rng.standard_normal(dim)) for _ in range(n_pos + n_neg)]
    return state_with(vecs[:n_pos], vecs[n_pos:])


class TestScoreRegion:
    def test_self_similarity_no_negatives(self):
        state = state_with([unit(0)])
        scored = score_region(unit(0), state, RankerConfig())
        assert scored.score == 1.0 and scored.s_pos == 1.0 and scored.s_neg == 0.0

    def test_rejected_region_penalized(self):
        state = state_with([unit(0)], [unit(10)])
        scored = score_region(unit(10), state, RankerConfig())
        assert scored.score == pytest.approx(math.cos(math.radians(10)) - 1.0, abs=1e-9)

    def test_thirty_degree_separation(self):
        state = state_with([unit(0)], [unit(10)])
        scored = score_region(unit(-20), state, RankerConfig())
        expected = math.cos(math.radians(20)) - math.cos(math.radians(30))
        assert scored.score == pytest.approx(expected, abs=1e-9)
        assert scored.score == pytest.approx(0.0737, abs=1e-4)

    def test_score_identity(self):
        rng = np.random.default_rng(3)
        state = random_state(rng, 8, 3, 2)
        for _ in range(50):
            scored = score_region(l2_normalize(rng.standard_normal(8)), state, RankerConfig(0.7))
            assert scored.score == pytest.approx(scored.s_pos - 0.7 * scored.s_neg, abs=1e-9)
            assert -1.0 <= scored.s_pos <= 1.0 and -1.0 <= scored.s_neg <= 1.0


class TestRankCandidates:
    def test_basic_order(self):
        state = state_with([unit(0)])
        ranking = rank_candidates([(1, unit(0)), (2, unit(90))], state, RankerConfig())
        assert [sr.region_id for sr in ranking] == [1, 2]
        assert ranking[0].score == 1.0 and abs(ranking[1].score) < 1e-12

    def test_tie_broken_by_lower_id(self):
        state = state_with([unit(0)])
        ranking = rank_candidates([(5, unit(30)), (2, unit(30))], state, RankerConfig())
        assert [sr.region_id for sr in ranking] == [2, 5]

    def test_no_region_dropped(self):
        rng = np.random.default_rng(0)
        state = random_state(rng, 16, 2, 3)
        regions = [(i, l2_normalize(rng.standard_normal(16))) for i in range(40)]
        ranking = rank_candidates(regions, state, RankerConfig())
        assert sorted(sr.region_id for sr in ranking) == list(range(40))

    def test_empty_regions(self):
        with pytest.raises(DimensionError):
            rank_candidates([], state_with([unit(0)]), RankerConfig())

    def test_turn0_equals_descending_cosine(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            query = l2_normalize(rng.standard_normal(32))
            regions = [(i, l2_normalize(rng.standard_normal(32))) for i in range(30)]
            state = init_state(query, None, alpha=0.6)
            ranking = rank_candidates(regions, state, RankerConfig())
            sims = np.array([float(query @ emb) for _, emb in regions])
            expected = np.lexsort((np.arange(30), -sims))
            assert [sr.region_id for sr in ranking] == [int(i) for i in expected]

    def test_lambda_zero_ignores_negatives(self):
        rng = np.random.default_rng(5)
        regions = [(i, l2_normalize(rng.standard_normal(8))) for i in range(20)]
        base = state_with([unit_8(rng)])
        loaded = random_state_from(base, rng, 8, n_neg=4)
        cfg = RankerConfig(negative_weight=0.0)
        assert [sr.region_id for sr in rank_candidates(regions, base, cfg)] == [
            sr.region_id for sr in rank_candidates(regions, loaded, cfg)
        ]

    def test_negative_monotonicity(self):
        # Holds for growing a non-empty negative set (max over a superset);
        # the empty->one transition can legitimately raise scores of regions
        # anti-correlated with the new exemplar, since the empty penalty is 0.
        rng = np.random.default_rng(21)
        for _ in range(200):
            state = random_state(rng, 8, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
            extra = l2_normalize(rng.standard_normal(8))
            grown = apply_feedback(
                state, Feedback(FEEDBACK_NEGATIVE, region_id=2000), {2000: extra}
            )
            region = l2_normalize(rng.standard_normal(8))
            cfg = RankerConfig(negative_weight=float(rng.uniform(0, 2)))
            assert (
                score_region(region, grown, cfg).score
                <= score_region(region, state, cfg).score + 1e-12
            )

    def test_positive_monotonicity(self):
        from intentrank.intent import FEEDBACK_REFINE

        rng = np.random.default_rng(22)
        for _ in range(200):
            state = random_state(rng, 8, int(rng.integers(1, 4)), int(rng.integers(0, 4)))
            extra = l2_normalize(rng.standard_normal(8))
            grown = apply_feedback(
                state, Feedback(FEEDBACK_REFINE, new_prompt_embedding=extra), {}
            )
            region = l2_normalize(rng.standard_normal(8))
            cfg = RankerConfig(negative_weight=float(rng.uniform(0, 2)))
            assert (
                score_region(region, grown, cfg).score
                >= score_region(region, state, cfg).score - 1e-12
            )

    def test_self_suppression(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            state = random_state(rng, 16, 2, 1)
            rejected = l2_normalize(rng.standard_normal(16))
            after = apply_feedback(
                state, Feedback(FEEDBACK_NEGATIVE, region_id=3000), {3000: rejected}
            )
            lam = float(rng.uniform(0.1, 2.0))
            scored = score_region(rejected, after, RankerConfig(negative_weight=lam))
            assert scored.score == pytest.approx(scored.s_pos - lam, abs=1e-6)


def unit_8(rng):
    return l2_normalize(rng.standard_normal(8))


def random_state_from(base, rng, dim, n_neg):
    state = base
    for i in range(n_neg):
        rid = 5000 + i
        state = apply_feedback(
            state,
            Feedback(FEEDBACK_NEGATIVE, region_id=rid),
            {rid: l2_normalize(rng.standard_normal(dim))},
        )
    return state


class TestMaxVsMean:
    def test_crafted_divergence_fixture(self):
        # Two orthogonal positives; the in-between region wins under mean
        # aggregation, an endpoint wins under max.
        state = state_with([unit(0), unit(90)])
        regions = [(1, unit(45)), (2, unit(0)), (3, unit(90))]
        top_max = rank_candidates(regions, state, RankerConfig(aggregation="max"))[0]
        top_mean = rank_candidates(regions, state, RankerConfig(aggregation="mean"))[0]
        assert top_max.region_id == 2
        assert top_mean.region_id == 1
        assert top_max.region_id != top_mean.region_id

    def test_divergence_exists_among_random_instances(self):
        rng = np.random.default_rng(99)
        found = False
        for _ in range(500):
            state = state_with([unit_8(rng), unit_8(rng)])
            regions = [(i, unit_8(rng)) for i in range(3)]
            top_max = rank_candidates(regions, state, RankerConfig(aggregation="max"))[0]
            top_mean = rank_candidates(regions, state, RankerConfig(aggregation="mean"))[0]
            if top_max.region_id != top_mean.region_id:
                found = True
                break
        assert found

    def test_mean_aggregation_stays_bounded(self):
        rng = np.random.default_rng(12)
        state = random_state(rng, 8, 4, 3)
        cfg = RankerConfig(aggregation="mean")
        for _ in range(50):
            scored = score_region(unit_8(rng), state, cfg)
            assert -1.0 <= scored.s_pos <= 1.0 and -1.0 <= scored.s_neg <= 1.0


def reference_sinkhorn(cost, a, b, epsilon, sweeps=20000):
    """Straightforward fixed-point iteration, element by element."""
    n, m = cost.shape
    kernel = [[math.exp(-cost[i][j] / epsilon) for j in range(m)] for i in range(n)]
    u = [1.0] * n
    v = [1.0] * m
    for _ in range(sweeps):
        for i in range(n):
            u[i] = a[i] / sum(kernel[i][j] * v[j] for j in range(m))
        for j in range(m):
            v[j] = b[j] / sum(kernel[i][j] * u[i] for i in range(n))
    return np.array([[u[i] * kernel[i][j] * v[j] for j in range(m)] for i in range(n)])


class TestSinkhornPlan:
    def test_one_by_one(self):
        plan = sinkhorn_plan(np.array([[3.7]]), np.array([1.0]), np.array([1.0]))
        np.testing.assert_allclose(plan, [[1.0]], atol=1e-12)

    def test_uniform_cost_symmetry(self):
        plan = sinkhorn_plan(
            np.full((2, 2), 0.3), np.array([0.5, 0.5]), np.array([0.5, 0.5])
        )
        np.testing.assert_allclose(plan, np.full((2, 2), 0.25), atol=1e-9)

    def test_matches_reference_iteration(self):
        cost = np.array([[0.0, 1.0], [1.0, 0.0]])
        a = b = np.array([0.5, 0.5])
        expected = reference_sinkhorn(cost, a, b, epsilon=0.1, sweeps=200)
        plan = sinkhorn_plan(cost, a, b, SinkhornConfig(epsilon=0.1, tol=1e-13))
        np.testing.assert_allclose(plan, expected, atol=1e-12)
        assert plan[0, 0] > plan[0, 1]  # diagonal-dominant

    def test_marginal_residual_random(self):
        rng = np.random.default_rng(42)
        cost = rng.uniform(0, 1, size=(10, 100))
        a = np.full(10, 0.1)
        b = np.full(100, 0.01)
        plan = sinkhorn_plan(cost, a, b)
        assert np.abs(plan.sum(axis=1) - a).max() < 1e-6
        assert np.abs(plan.sum(axis=0) - b).max() < 1e-6
        assert np.all(plan >= 0)

    def test_iteration_cap_warns(self):
        rng = np.random.default_rng(1)
        cost = rng.uniform(0, 1, size=(5, 7))
        a = np.full(5, 0.2)
        b = np.full(7, 1 / 7)
        with pytest.warns(MaxIterationsWarning):
            sinkhorn_plan(cost, a, b, SinkhornConfig(epsilon=0.01, max_iters=1))

    def test_non_finite_cost(self):
        with pytest.raises(InvalidCostError):
            sinkhorn_plan(
                np.array([[np.nan, 1.0]]), np.array([1.0]), np.array([0.5, 0.5])
            )

    def test_empty_matrix(self):
        with pytest.raises(DimensionError):
            sinkhorn_plan(np.zeros((0, 0)), np.zeros(0), np.zeros(0))

    def test_bad_marginals(self):
        with pytest.raises(ValueError):
            sinkhorn_plan(np.zeros((2, 2)), np.array([0.9, 0.2]), np.array([0.5, 0.5]))


class TestSinkhornRank:
    def test_single_positive_matches_contrastive_order(self):
        rng = np.random.default_rng(8)
        state = state_with([unit_8(rng)])
        regions = [(i, unit_8(rng)) for i in range(12)]
        cfg = RankerConfig()
        contrastive = [sr.region_id for sr in rank_candidates(regions, state, cfg)]
        transported = [sr.region_id for sr in sinkhorn_rank(regions, state, cfg)]
        assert transported == contrastive

    def test_rejection_demotes_distractor(self):
        state0 = state_with([unit(0)])
        regions = [(0, unit(10)), (1, unit(-20))]
        rank0 = [sr.region_id for sr in sinkhorn_rank(regions, state0, RankerConfig())]
        assert rank0[0] == 0
        state1 = state_with([unit(0)], [unit(10)])
        rank1 = [sr.region_id for sr in sinkhorn_rank(regions, state1, RankerConfig())]
        assert rank1[0] == 1  # distractor demoted after its rejection

    def test_single_region_gets_all_mass(self):
        state = state_with([unit(0)])
        ranking = sinkhorn_rank([(4, unit(30))], state, RankerConfig())
        assert ranking[0].region_id == 4
        assert ranking[0].score == pytest.approx(1.0, abs=1e-12)
