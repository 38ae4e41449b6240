import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridrank.data import Interaction, from_interactions, parse_ratings, split_per_user
from hybridrank.evaluation import (
    Thresholds,
    UndefinedAUC,
    UserAssessment,
    assess_users,
    auc_from_arrays,
    build_user_pools,
    classify,
    classify_users,
    mean_sparsity_threshold,
    ndcg_at_k,
    ranking_auc,
    sparsity_index,
    user_auc,
)

from conftest import ML100K_RATINGS


def brute_auc(rel, irr):
    """Pair enumeration: 1 per correctly ordered pair, 0.5 per tie."""
    total = sum(1.0 if r > s else 0.5 if r == s else 0.0 for r in rel for s in irr)
    return total / (len(rel) * len(irr))


def brute_ndcg(ranked_gains, k):
    def dcg(gains):
        return sum(g / math.log2(p + 2) for p, g in enumerate(gains[:k]))

    ideal = dcg(sorted(ranked_gains, reverse=True))
    return 0.0 if ideal == 0 else dcg(ranked_gains) / ideal


class TestUserAuc:
    def test_perfect_separation(self):
        assert user_auc({"a": 0.9, "b": 0.1, "c": 0.2}, ["a"], ["b", "c"]) == 1.0

    def test_hand_enumerated_pairs(self):
        # a < c scores 0, b > c scores 1
        assert user_auc({"a": 0.3, "b": 0.7, "c": 0.5}, ["a", "b"], ["c"]) == 0.5

    def test_all_ties(self):
        assert user_auc({"a": 1.0, "b": 1.0, "c": 1.0}, ["a"], ["b", "c"]) == 0.5

    @pytest.mark.parametrize("rel, irr", [([], ["a"]), (["a"], [])])
    def test_one_sided_pool_is_undefined(self, rel, irr):
        with pytest.raises(UndefinedAUC):
            user_auc({"a": 1.0}, rel, irr)

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n_rel, n_irr = rng.integers(1, 15, size=2)
            rel = rng.integers(0, 5, n_rel).astype(float)
            irr = rng.integers(0, 5, n_irr).astype(float)
            assert abs(auc_from_arrays(rel, irr) - brute_auc(rel, irr)) < 1e-12


class TestRankingAuc:
    def test_relevant_first(self):
        assert ranking_auc([3, 1, 2], {3}) == 1.0

    def test_relevant_last(self):
        assert ranking_auc([1, 2, 3], {3}) == 0.0

    def test_all_relevant_is_undefined(self):
        with pytest.raises(UndefinedAUC):
            ranking_auc([1, 2], {1, 2})


class TestNdcg:
    def test_ideal_order(self):
        assert ndcg_at_k(["a", "b", "c"], {"a": 1, "b": 1}, k=10) == 1.0

    def test_hand_example(self):
        # DCG = 1/log2(3), IDCG = 1/log2(2)
        np.testing.assert_allclose(ndcg_at_k(["a", "b"], {"a": 0, "b": 1}, k=2), 1 / math.log2(3), atol=1e-12)
        np.testing.assert_allclose(ndcg_at_k(["a", "b"], {"a": 0, "b": 1}, k=2), 0.63093, atol=5e-6)

    def test_no_relevant_items(self):
        assert ndcg_at_k(["a", "b"], {}, k=10) == 0.0

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            ndcg_at_k(["a"], {"a": 1}, k=0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = int(rng.integers(1, 25))
            gains = rng.integers(0, 2, n).astype(float)
            k = int(rng.integers(1, 30))
            got = ndcg_at_k(list(range(n)), dict(enumerate(gains)), k)
            assert abs(got - brute_ndcg(list(gains), k)) < 1e-12


class TestSparsity:
    @pytest.mark.parametrize("n_rated, n_items, expected", [(20, 1682, 20 / 1682), (0, 50, 0.0), (50, 50, 1.0)])
    def test_index(self, n_rated, n_items, expected):
        assert sparsity_index(n_rated, n_items) == expected

    def test_index_example_value(self):
        np.testing.assert_allclose(sparsity_index(20, 1682), 0.0118906, atol=1e-7)

    def test_invalid(self):
        with pytest.raises(ValueError):
            sparsity_index(5, 3)

    def test_each_user_rated_half(self):
        ds = from_interactions([Interaction("u", "1", 4.0), Interaction("v", "2", 4.0)])
        # each user rated one of two items
        assert mean_sparsity_threshold(ds) == 0.5

    def test_two_user_mean(self):
        rows = [Interaction("a", str(i), 3.0) for i in range(1)]
        rows += [Interaction("b", str(i), 3.0) for i in range(3)]
        rows += [Interaction("c", str(i), 3.0) for i in range(3, 10)]
        ds = from_interactions(rows)  # densities 0.1, 0.3, 0.7
        np.testing.assert_allclose(mean_sparsity_threshold(ds), (0.1 + 0.3 + 0.7) / 3, atol=1e-15)

    def test_ml100k_threshold(self, ml100k):
        ds = parse_ratings(ML100K_RATINGS.read_bytes(), "ml100k")
        direct = sum(c / ds.n_items for c in ds.user_counts()) / ds.n_users
        assert abs(mean_sparsity_threshold(ds) - direct) < 1e-12
        assert abs(mean_sparsity_threshold(ds) - 100000 / (943 * 1682)) < 1e-9


class TestClassify:
    @pytest.mark.parametrize(
        "auc, density, expected",
        [(0.3, 0.01, (True, True)), (0.3, 0.2, (False, False)), (0.7, 0.01, (True, False)), (None, 0.01, (True, False))],
    )
    def test_rule(self, auc, density, expected):
        assert classify(auc, density, 0.5, 0.063) == expected

    def test_threshold_is_inclusive(self):
        assert classify(0.5, 0.01, 0.5, 0.063) == (True, True)

    def test_zero_t_p(self):
        assert classify(0.0, 0.01, 0.0, 0.063)[1]
        assert not classify(0.01, 0.01, 0.0, 0.063)[1]

    def test_thresholds_validate(self):
        with pytest.raises(ValueError):
            Thresholds(t_p=1.5)
        with pytest.raises(ValueError):
            Thresholds(t_s=0.0)


def _pool_split():
    rows = [Interaction("u", "i", 5.0), Interaction("u", "j", 2.0)]
    rows += [Interaction("u", f"t{k}", 3.0) for k in range(8)]
    rows += [Interaction("v", f"n{k}", 3.0) for k in range(6)]
    ds = from_interactions(rows)
    split = split_per_user(ds, (0.8, 0.1, 0.1), seed=0)
    # put i and j into test for user u by hand
    u = ds.encode_user("u")
    test_rows = np.flatnonzero((ds.users == u) & np.isin(ds.items, [ds.encode_item("i"), ds.encode_item("j")]))
    train_rows = np.setdiff1d(np.arange(ds.n_interactions), test_rows)
    split.train, split.test = ds.subset(train_rows), ds.subset(test_rows)
    split.validation = ds.subset(np.empty(0, dtype=np.int64))
    return ds, split


class TestPools:
    def test_relevant_and_irrelevant(self):
        ds, split = _pool_split()
        u = ds.encode_user("u")
        pools = build_user_pools(split, u, Thresholds(n_sampled_negatives=2), seed=0)
        assert pools.relevant.tolist() == [ds.encode_item("i")]
        irr = pools.irrelevant.tolist()
        assert len(irr) == 3 and irr[0] == ds.encode_item("j")
        seen = set(ds.items[ds.users == u].tolist())
        assert not (set(irr[1:]) & seen)

    def test_no_negatives_all_liked_is_undefined(self):
        ds = from_interactions([Interaction("u", str(i), 5.0) for i in range(10)])
        split = split_per_user(ds, seed=0)
        pools = build_user_pools(split, 0, Thresholds(n_sampled_negatives=0), seed=0)
        assert pools.irrelevant.size == 0 and not pools.defined

    def test_same_seed_same_negatives(self):
        ds, split = _pool_split()
        th = Thresholds(n_sampled_negatives=3)
        a = build_user_pools(split, 0, th, seed=4)
        b = build_user_pools(split, 0, th, seed=4)
        np.testing.assert_array_equal(a.irrelevant, b.irrelevant)


class TestAssessUsers:
    def test_flags_follow_rule(self, small_split):
        rng = np.random.default_rng(0)
        table = rng.random((small_split.n_users, small_split.n_items))
        out = assess_users(small_split, lambda users: table[users], Thresholds(), seed=0, t_s=0.34)
        for a in out:
            assert a.sparsity_index == small_split.full.user_counts()[a.user_index] / small_split.n_items
            if a.weak:
                assert a.inactive and a.auc is not None and a.auc <= 0.5
        assert [a.user_index for a in out] == list(range(small_split.n_users))

    def test_classify_users_partition(self):
        assessments = [UserAssessment(str(k), k, auc, d, False, False, 5, 1) for k, (auc, d) in
                       enumerate([(0.2, 0.01), (0.9, 0.01), (0.1, 0.5), (None, 0.01)])]
        weak, strong = classify_users(assessments, Thresholds(t_s=0.05))
        assert weak == {"0"} and strong == {"1", "2", "3"}


scores_st = st.lists(st.floats(-5, 5, allow_nan=False).map(lambda x: round(x, 1)), min_size=1, max_size=15)


@settings(max_examples=200, deadline=None)
@given(scores_st, scores_st)
def test_auc_matches_pair_enumeration(rel, irr):
    assert abs(auc_from_arrays(np.array(rel), np.array(irr)) - brute_auc(rel, irr)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(scores_st, scores_st, st.sampled_from([np.exp, np.tanh, lambda x: 3 * x + 1, np.arctan]))
def test_auc_invariant_under_monotone_transform(rel, irr, f):
    rel, irr = np.array(rel), np.array(irr)
    # tanh/arctan saturate in float64 only far outside this range, so order is preserved
    assert auc_from_arrays(f(rel), f(irr)) == auc_from_arrays(rel, irr)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=20), st.integers(1, 25))
def test_ndcg_bounds_and_ideal(gains, k):
    value = ndcg_at_k(list(range(len(gains))), dict(enumerate(gains)), k)
    assert 0.0 <= value <= 1.0 + 1e-12
    n_rel = sum(gains)
    top_exact = n_rel > 0 and all(gains[: min(k, n_rel)])
    assert (abs(value - 1.0) < 1e-12) == top_exact


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.one_of(st.none(), st.floats(0, 1)), st.floats(0, 1)), max_size=30),
       st.floats(0, 1), st.floats(0.01, 0.99))
def test_weak_implies_inactive_and_low_auc(pairs, t_p, t_s):
    assessments = [UserAssessment(str(k), k, a, d, False, False, 1, 1) for k, (a, d) in enumerate(pairs)]
    weak, strong = classify_users(assessments, Thresholds(t_p=t_p, t_s=t_s))
    assert not (weak & strong) and len(weak | strong) == len(pairs)
    for a in assessments:
        if a.weak:
            assert a.inactive and a.auc <= t_p
