import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from anonrec import (
    AnonymousIdentityRecommender,
    BaselineRecommender,
    RevealedRatingsRecommender,
    UserIdentityRecommender,
    build_matrix,
    item_similarity_matrix,
    oka_anonymize,
    predict_baseline,
    predict_case1_reg,
    predict_case1a_ai,
    predict_case2_ur,
    predict_with_ratings,
    train_model,
)
from anonrec.errors import IndexOutOfRange, MissingAnonymizedMatrix, RatingOutOfScale
from anonrec.similarity import ItemSimilarityMatrix

import reference as ref
from conftest import random_matrix


def toy_sims(toy):
    return item_similarity_matrix(toy)


class TestPredictWithRatings:
    def test_empty_input_falls_back_to_item_mean(self, toy):
        sims = toy_sims(toy)
        pred = predict_with_ratings(sims, sims.item_means, {}, 2, toy.scale)
        assert pred.value == pytest.approx(3.0, abs=1e-12)
        assert pred.fallback_level == "item-mean"

    def test_single_item_collapses_to_deviation(self):
        # hand-built similarity structure: s(1,2) = 1
        values = np.array([[1.0, 1.0], [1.0, 1.0]])
        means = np.array([2.0, 3.0])
        sims = ItemSimilarityMatrix(2, values, means, "raw", np.full((2, 2), 5))
        pred = predict_with_ratings(sims, means, {2: 3.5}, 1)
        assert pred.value == pytest.approx(2.5, abs=1e-12)
        assert pred.fallback_level == "full"

    def test_toy_chained_example(self, toy):
        sims = toy_sims(toy)
        pred = predict_with_ratings(sims, sims.item_means, {1: 5.0}, 3, toy.scale)
        assert pred.value == pytest.approx(2.0, abs=1e-12)
        assert pred.fallback_level == "full"

    def test_clamped_to_scale(self):
        values = np.array([[1.0, 1.0], [1.0, 1.0]])
        means = np.array([4.8, 3.0])
        sims = ItemSimilarityMatrix(2, values, means, "raw", np.full((2, 2), 5))
        pred = predict_with_ratings(sims, means, {2: 5.0}, 1)
        assert pred.value == 5.0  # 4.8 + 2.0 clamped

    def test_undefined_target_mean_gives_global_mean(self):
        m = build_matrix([(1, 1, 4.0), (2, 1, 2.0)], 2, 2)
        sims = item_similarity_matrix(m)
        pred = predict_with_ratings(sims, sims.item_means, {1: 4.0}, 2, m.scale)
        assert pred.fallback_level == "global-mean"
        assert pred.value == pytest.approx(3.0, abs=1e-12)

    def test_input_items_with_undefined_mean_dropped(self):
        m = build_matrix([(1, 1, 4.0), (2, 1, 2.0), (1, 3, 5.0), (2, 3, 1.0)], 2, 3)
        sims = item_similarity_matrix(m)
        with_undefined = predict_with_ratings(
            sims, sims.item_means, {3: 5.0, 2: 4.0}, 1, m.scale
        )
        without = predict_with_ratings(sims, sims.item_means, {3: 5.0}, 1, m.scale)
        assert with_undefined.value == without.value

    def test_neutral_item_insensitivity(self, toy):
        sims = toy_sims(toy)
        values = sims.values.copy()
        values[2, 1] = values[1, 2] = 0.0
        neutered = ItemSimilarityMatrix(3, values, sims.item_means, "raw", sims.co_raters)
        base = predict_with_ratings(neutered, sims.item_means, {1: 5.0}, 3, toy.scale)
        widened = predict_with_ratings(
            neutered, sims.item_means, {1: 5.0, 2: 4.0}, 3, toy.scale
        )
        assert widened.value == pytest.approx(base.value, abs=1e-12)

    def test_dominance(self):
        rng = np.random.default_rng(40)
        found = 0
        for _ in range(60):
            m = random_matrix(rng)
            sims = item_similarity_matrix(m)
            means = sims.item_means
            for target in range(1, m.m + 1):
                if np.isnan(means[target - 1]):
                    continue
                friendly = [
                    i for i in range(1, m.m + 1)
                    if i != target and sims.values[target - 1, i - 1] >= 0.0
                    and not np.isnan(means[i - 1])
                ]
                if not friendly:
                    continue
                row = {i: min(means[i - 1] + 0.5, m.scale.hi) for i in friendly}
                pred = predict_with_ratings(sims, means, row, target, m.scale)
                if pred.fallback_level == "full":
                    assert pred.value >= means[target - 1] - 1e-12
                    found += 1
        assert found > 20

    def test_validation(self, toy):
        sims = toy_sims(toy)
        with pytest.raises(IndexOutOfRange):
            predict_with_ratings(sims, sims.item_means, {}, 4, toy.scale)
        with pytest.raises(IndexOutOfRange):
            predict_with_ratings(sims, sims.item_means, {9: 3.0}, 1, toy.scale)
        with pytest.raises(RatingOutOfScale):
            predict_with_ratings(sims, sims.item_means, {1: 7.0}, 2, toy.scale)


class TestCase1Reg:
    def test_matches_full_row_unification(self, toy):
        model = train_model("Case1/REG", train=toy)
        for u in range(1, toy.n + 1):
            for i in range(1, toy.m + 1):
                via_user = predict_case1_reg(model, u, i)
                via_row = predict_with_ratings(
                    model.sims, model.item_means, toy.user_row(u), i, toy.scale
                )
                assert via_user == via_row

    def test_empty_training_row_falls_back(self):
        m = build_matrix([(1, 1, 4.0), (1, 2, 2.0), (2, 1, 5.0)], 3, 2)
        model = train_model("Case1/REG", train=m)
        pred = predict_case1_reg(model, 3, 1)
        assert pred.fallback_level == "item-mean"

    def test_unknown_user(self, toy):
        model = train_model("Case1/REG", train=toy)
        with pytest.raises(IndexOutOfRange):
            predict_case1_reg(model, 9, 1)


class TestCase1aAi:
    def test_k1_equals_reg(self, toy):
        reg = train_model("Case1/REG", train=toy)
        anon, amap = oka_anonymize(toy, 1, seed=0)
        ai = train_model("Case1A/AI", anon=anon)
        for u in range(1, toy.n + 1):
            for i in range(1, toy.m + 1):
                a = predict_case1a_ai(ai, amap.anon_id(u), i)
                b = predict_case1_reg(reg, u, i)
                assert a.value == pytest.approx(b.value, abs=1e-9)

    def test_k_equals_n_personalizes_to_mean_row(self, toy):
        anon, amap = oka_anonymize(toy, toy.n, seed=0)
        ai = train_model("Case1A/AI", anon=anon)
        mean_row = anon.prototype_row(1)
        for i in range(1, toy.m + 1):
            via_ai = predict_case1a_ai(ai, 1, i)
            via_row = predict_with_ratings(
                ai.sims, ai.item_means, mean_row, i, toy.scale
            )
            assert via_ai == via_row

    def test_requires_anon(self, toy):
        with pytest.raises(MissingAnonymizedMatrix):
            train_model("Case1A/AI", train=toy)

    def test_bad_anon_id(self, toy):
        anon, _ = oka_anonymize(toy, 2, seed=0)
        ai = train_model("Case1A/AI", anon=anon)
        with pytest.raises(IndexOutOfRange):
            predict_case1a_ai(ai, 5, 1)


class TestBaseline:
    def test_toy_item2(self, toy):
        model = train_model("BASELINE", train=toy)
        pred = predict_baseline(model, 2)
        assert pred.value == pytest.approx(3.0, abs=1e-12)
        assert pred.fallback_level == "item-mean"

    def test_unrated_item_gets_global_mean(self):
        m = build_matrix([(1, 1, 4.0), (2, 1, 2.0)], 2, 3)
        model = train_model("BASELINE", train=m)
        pred = predict_baseline(model, 3)
        assert pred.fallback_level == "global-mean"
        assert pred.value == pytest.approx(3.0, abs=1e-12)


class TestTrainModel:
    def test_source_invariants(self, toy):
        anon, _ = oka_anonymize(toy, 2, seed=0)
        raw_sims = item_similarity_matrix(toy)
        with pytest.raises(ValueError):
            train_model("Case1A/UR", anon=anon, sims=raw_sims)
        with pytest.raises(ValueError):
            train_model("Case2/UR", train=toy, sims=item_similarity_matrix(anon))
        with pytest.raises(ValueError):
            train_model("Case1/REG")
        with pytest.raises(ValueError):
            train_model("nonsense", train=toy)

    def test_table_requirements(self, toy):
        anon, _ = oka_anonymize(toy, 2, seed=0)
        reg = train_model("Case1/REG", train=toy)
        assert reg.train is toy and reg.anon is None
        ai = train_model("Case1A/AI", anon=anon)
        assert ai.anon is anon
        ur = train_model("Case2A/UR", anon=anon)
        assert ur.anon is None and ur.train is None
        base = train_model("BASELINE", train=toy)
        assert base.sims is None


class TestBruteForceEquivalence:
    def test_all_models_small_random(self):
        rng = np.random.default_rng(41)
        for trial in range(25):
            m = random_matrix(rng)
            rows, w = ref.matrix_rows(m)
            bs = ref.brute_similarity(rows, w, m.m)
            bm = ref.brute_item_means(rows, w, m.m)
            reg = train_model("Case1/REG", train=m)
            c2 = train_model("Case2/UR", train=m)
            for u in range(1, m.n + 1):
                row = m.user_row(u)
                for i in range(1, m.m + 1):
                    want, level = ref.brute_predict(bs, bm, row, i, m.scale)
                    got = predict_case1_reg(reg, u, i)
                    assert got.value == pytest.approx(want, abs=1e-9)
                    assert got.fallback_level == level
                    got2 = predict_case2_ur(c2, row, i)
                    assert got2.value == pytest.approx(want, abs=1e-9)


class TestEstimators:
    def test_user_identity(self, toy):
        est = UserIdentityRecommender().fit(toy)
        model = train_model("Case1/REG", train=toy)
        values = est.predict([(3, 1), (1, 3)])
        assert values[0] == predict_case1_reg(model, 3, 1).value
        assert values[1] == predict_case1_reg(model, 1, 3).value

    def test_baseline(self, toy):
        est = BaselineRecommender().fit(toy)
        np.testing.assert_allclose(est.predict([2]), [3.0], atol=1e-12)

    def test_revealed_ratings_raw_and_anon(self, toy):
        raw = RevealedRatingsRecommender().fit(toy)
        assert raw.model_.model_id == "Case2/UR"
        anon, _ = oka_anonymize(toy, 2, seed=0)
        anonymized = RevealedRatingsRecommender().fit(anon)
        assert anonymized.model_.model_id == "Case2A/UR"
        out = anonymized.predict({1: 5.0}, [3])
        assert out.shape == (1,)

    def test_anonymous_identity(self, toy):
        anon, amap = oka_anonymize(toy, 2, seed=0)
        est = AnonymousIdentityRecommender().fit(anon)
        out = est.predict([(1, 3)])
        model = train_model("Case1A/AI", anon=anon)
        assert out[0] == predict_case1a_ai(model, 1, 3).value

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            UserIdentityRecommender().predict([(1, 1)])
        with pytest.raises(NotFittedError):
            BaselineRecommender().predict([1])

    def test_get_params(self):
        est = RevealedRatingsRecommender(weighted=False)
        assert est.get_params() == {"weighted": False}
