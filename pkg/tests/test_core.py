"""Core classifier: coding, scoring, search, and learning updates."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from artstream import (ArtmapParams, Dataset, FuzzyArtmapModel, Sample,
                       UntrainedModelError, choice, clean_accuracy,
                       complement_code, fuzzy_and_sums, match)


def unit_vec(d):
    return hnp.arrays(np.float64, (d,),
                      elements=st.floats(0.0, 1.0, allow_nan=False))


unit_vectors = st.integers(1, 16).flatmap(unit_vec)


class TestComplementCode:
    def test_doubles_dimension_and_appends_complement(self):
        coded = complement_code([0.2, 0.8])
        np.testing.assert_array_equal(coded[:2], [0.2, 0.8])
        np.testing.assert_allclose(coded[2:], [0.8, 0.2], atol=1e-15)

    def test_batch_codes_along_last_axis(self):
        x = np.array([[0.0, 1.0], [0.25, 0.5]])
        coded = complement_code(x)
        assert coded.shape == (2, 4)
        np.testing.assert_array_equal(coded[0], [0.0, 1.0, 1.0, 0.0])
        np.testing.assert_allclose(coded[1], [0.25, 0.5, 0.75, 0.5])

    @given(unit_vectors)
    def test_coded_mass_equals_dimension(self, x):
        coded = complement_code(x)
        assert coded.sum() == pytest.approx(len(x), abs=1e-9)
        assert coded.min() >= 0.0 and coded.max() <= 1.0

    def test_rejects_out_of_range_naming_the_index(self):
        with pytest.raises(ValueError, match="component 1"):
            complement_code([0.3, 1.5])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            complement_code([np.nan])


class TestScoring:
    # hand-checked: coded mass 2, |I ^ w| = 1.6, |w| = 1.6
    CODED = np.array([0.3, 0.6, 0.7, 0.4])
    W = np.array([0.2, 0.5, 0.6, 0.3])

    def test_choice_hand_value(self):
        assert choice(self.CODED, self.W, alpha=1e-3) == pytest.approx(
            1.6 / (1e-3 + 1.6), rel=0, abs=1e-15)

    def test_match_hand_value(self):
        assert match(self.CODED, self.W) == pytest.approx(0.8, abs=1e-15)

    def test_own_weight_scores_perfect_match(self):
        coded = complement_code([0.1, 0.5])
        assert match(coded, coded) == pytest.approx(1.0, abs=1e-15)
        assert choice(coded, coded, 1e-3) == pytest.approx(2.0 / 2.001)

    def test_accepts_category_objects(self):
        model = FuzzyArtmapModel(2, 2)
        model.learn([0.3, 0.6], 0)
        cat = model.category(0)
        coded = complement_code([0.3, 0.6])
        assert match(coded, cat) == match(coded, cat.weight)

    def test_fuzzy_and_sums_matches_direct_minimum(self):
        rng = np.random.default_rng(0)
        weights = rng.uniform(size=(7, 8))
        coded = rng.uniform(size=(3, 8))
        got = fuzzy_and_sums(weights, coded)
        want = np.minimum(coded[:, None, :], weights[None, :, :]).sum(axis=2)
        np.testing.assert_array_equal(got, want)

    def test_fuzzy_and_sums_chunking_is_invisible(self):
        rng = np.random.default_rng(1)
        weights = rng.uniform(size=(13, 6))
        coded = rng.uniform(size=(4, 6))
        full = fuzzy_and_sums(weights, coded)
        tiny = fuzzy_and_sums(weights, coded, chunk_elems=1)
        np.testing.assert_array_equal(full, tiny)


class TestContainers:
    def test_sample_validates_range_and_label(self):
        with pytest.raises(ValueError):
            Sample(np.array([0.2, -0.1]), 0)
        with pytest.raises(ValueError):
            Sample(np.array([0.2, 0.1]), -1)

    def test_dataset_infers_num_classes(self):
        ds = Dataset([[0.1, 0.2], [0.3, 0.4]], [0, 2])
        assert ds.num_classes == 3
        assert ds.input_dim == 2

    def test_dataset_rejects_label_beyond_num_classes(self):
        with pytest.raises(ValueError):
            Dataset([[0.1, 0.2]], [3], num_classes=2)

    def test_dataset_rejects_fractional_labels(self):
        with pytest.raises(ValueError):
            Dataset([[0.1, 0.2]], [0.5])

    def test_subset_preserves_num_classes(self):
        ds = Dataset([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]], [0, 1, 2])
        sub = ds.subset([0])
        assert sub.num_classes == 3
        assert len(sub) == 1

    def test_iter_samples_in_storage_order(self):
        ds = Dataset([[0.1, 0.2], [0.3, 0.4]], [1, 0])
        got = [(s.features.tolist(), s.label) for s in ds.iter_samples()]
        assert got == [([0.1, 0.2], 1), ([0.3, 0.4], 0)]


class TestParams:
    def test_defaults_validate(self):
        ArtmapParams().validate()

    @pytest.mark.parametrize("bad", [
        dict(alpha=0.0), dict(alpha=-1.0), dict(beta=0.0), dict(beta=1.5),
        dict(rho_baseline=-0.1), dict(rho_baseline=1.1),
        dict(match_tracking_delta=0.0),
    ])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            ArtmapParams(**bad).validate()


class TestLearning:
    def test_first_sample_creates_category_with_coded_weight(self):
        model = FuzzyArtmapModel(2, 2)
        ev = model.learn([0.2, 0.8], 1)
        assert ev.decision == "created"
        assert ev.category_id == 0 and ev.step == 0
        np.testing.assert_array_equal(model.weights[0],
                                      complement_code([0.2, 0.8]))
        assert model.class_map[0] == 1
        assert model.step == 1

    def test_fast_learning_absorb_is_exact_componentwise_min(self):
        model = FuzzyArtmapModel(2, 2)
        model.learn([0.2, 0.8], 0)
        ev = model.learn([0.4, 0.6], 0)
        assert ev.decision == "absorbed"
        coded = complement_code([0.4, 0.6])
        expect = np.minimum(coded, complement_code([0.2, 0.8]))
        np.testing.assert_array_equal(model.weights[0], expect)
        # fast learning is idempotent on the same input
        before = model.weights[0].copy()
        model.learn([0.4, 0.6], 0)
        np.testing.assert_array_equal(model.weights[0], before)

    def test_partial_learning_rate_blends_toward_the_minimum(self):
        model = FuzzyArtmapModel(2, 2, beta=0.5)
        model.learn([0.2, 0.8], 0)
        w0 = model.weights[0].copy()
        coded = complement_code([0.4, 0.6])
        model.learn([0.4, 0.6], 0)
        expect = 0.5 * np.minimum(coded, w0) + 0.5 * w0
        np.testing.assert_allclose(model.weights[0], expect, atol=1e-15)

    def test_vigilance_below_threshold_creates_instead(self):
        model = FuzzyArtmapModel(2, 2, rho_baseline=0.95)
        model.learn([0.2, 0.8], 0)
        # match with the far point is well below 0.95, same class or not
        ev = model.learn([0.9, 0.1], 0)
        assert ev.decision == "created"
        assert model.num_categories == 2

    def test_match_tracking_blocks_wrong_class_winner(self):
        model = FuzzyArtmapModel(2, 2, rho_baseline=0.0)
        model.learn([0.5, 0.5], 0)
        # nearby point, opposite label: the lone category wins the choice
        # but conflicts, so vigilance rises past its match and a new
        # category must be created
        ev = model.learn([0.52, 0.5], 1)
        assert ev.decision == "created"
        assert model.num_categories == 2
        np.testing.assert_array_equal(model.class_map, [0, 1])
        # the original weight is untouched by the conflicting presentation
        np.testing.assert_array_equal(model.weights[0],
                                      complement_code([0.5, 0.5]))

    def test_match_tracking_allows_later_same_class_category(self):
        # wrong-class winner: tight subset box, choice 1.8/1.801, match 0.9;
        # same-class runner-up: full match 1.0 but heavier weight, choice
        # 2.0/2.201. Tracking raises vigilance to 0.9 + delta, which the
        # runner-up still clears, so it absorbs.
        w_wrong = np.array([0.45, 0.45, 0.45, 0.45])
        w_right = np.array([0.5, 0.5, 0.5, 0.7])
        model = FuzzyArtmapModel.from_arrays(
            np.stack([w_wrong, w_right]), [1, 0], num_classes=2)
        ev = model.learn([0.5, 0.5], 0)
        assert ev.decision == "absorbed"
        assert ev.category_id == 1
        assert ev.pre_match == pytest.approx(1.0)
        # the conflicting winner is left untouched
        np.testing.assert_array_equal(model.weights[0], w_wrong)

    def test_choice_tie_goes_to_lowest_id(self):
        coded = complement_code([0.3, 0.7])
        model = FuzzyArtmapModel.from_arrays(
            np.stack([coded, coded]), [0, 1], num_classes=2)
        pred = model.predict([0.3, 0.7])
        assert pred.winner_id == 0
        assert pred.predicted_class == 0

    def test_learn_rejects_label_outside_range(self):
        model = FuzzyArtmapModel(2, 2)
        with pytest.raises(ValueError):
            model.learn([0.1, 0.2], 2)

    def test_capacity_growth_keeps_categories_intact(self):
        model = FuzzyArtmapModel(1, 2, rho_baseline=1.0)
        xs = np.linspace(0.0, 1.0, 200)
        for i, v in enumerate(xs):
            model.learn([v], i % 2)
        assert model.num_categories == 200
        np.testing.assert_array_equal(model.weights[:, 0], xs)
        np.testing.assert_array_equal(model.class_map,
                                      np.arange(200) % 2)

    @given(st.lists(st.tuples(unit_vec(3), st.integers(0, 2)),
                    min_size=1, max_size=30))
    @settings(max_examples=40, deadline=None)
    def test_weights_never_increase_under_training(self, stream):
        model = FuzzyArtmapModel(3, 3)
        snapshots = {}
        for x, y in stream:
            before = {j: model.weights[j].copy()
                      for j in range(model.num_categories)}
            model.learn(x, y)
            for j, w in before.items():
                assert np.all(model.weights[j] <= w + 1e-15)
            snapshots = before
        assert model.num_categories >= 1
        del snapshots

    @given(st.lists(st.tuples(unit_vec(2), st.integers(0, 1)),
                    min_size=1, max_size=25))
    @settings(max_examples=40, deadline=None)
    def test_category_class_bindings_are_immutable(self, stream):
        model = FuzzyArtmapModel(2, 2, rho_baseline=0.3)
        bound = {}
        for x, y in stream:
            ev = model.learn(x, y)
            if ev.decision == "created":
                bound[ev.category_id] = y
            else:
                assert bound[ev.category_id] == y
        np.testing.assert_array_equal(
            model.class_map, [bound[j] for j in range(len(bound))])


class TestPrediction:
    def make_model(self):
        model = FuzzyArtmapModel(2, 2, rho_baseline=0.6)
        for x, y in [([0.1, 0.1], 0), ([0.2, 0.15], 0),
                     ([0.9, 0.9], 1), ([0.8, 0.85], 1)]:
            model.learn(x, y)
        return model

    def test_untrained_model_raises(self):
        model = FuzzyArtmapModel(2, 2)
        with pytest.raises(UntrainedModelError):
            model.predict([0.1, 0.2])
        with pytest.raises(UntrainedModelError):
            model.predict_batch(np.array([[0.1, 0.2]]))

    def test_predict_recovers_training_labels(self):
        model = self.make_model()
        assert model.predict([0.12, 0.12]).predicted_class == 0
        assert model.predict([0.88, 0.88]).predicted_class == 1

    def test_predict_batch_agrees_with_predict(self):
        model = self.make_model()
        rng = np.random.default_rng(5)
        xs = rng.uniform(size=(40, 2))
        labels, winners, matches = model.predict_batch(xs)
        for i, x in enumerate(xs):
            p = model.predict(x)
            assert labels[i] == p.predicted_class
            assert winners[i] == p.winner_id
            assert matches[i] == pytest.approx(p.winner_match, abs=1e-15)

    def test_predict_does_not_mutate(self):
        model = self.make_model()
        w = model.weights.copy()
        step = model.step
        model.predict([0.4, 0.4])
        model.predict_batch(np.array([[0.4, 0.4]]))
        np.testing.assert_array_equal(model.weights, w)
        assert model.step == step

    def test_clean_accuracy_on_training_data(self):
        model = self.make_model()
        ds = Dataset([[0.1, 0.1], [0.9, 0.9]], [0, 1])
        assert clean_accuracy(model, ds) == 1.0


class TestModelPlumbing:
    def test_copy_is_deep_and_equal(self):
        model = FuzzyArtmapModel(2, 2)
        model.learn([0.3, 0.4], 0)
        clone = model.copy()
        clone.learn([0.9, 0.9], 1)
        assert model.num_categories == 1
        assert clone.num_categories == 2
        np.testing.assert_array_equal(model.weights[0],
                                      complement_code([0.3, 0.4]))

    def test_from_arrays_round_trip(self):
        w = np.array([[0.1, 0.2, 0.8, 0.7], [0.5, 0.5, 0.5, 0.5]])
        model = FuzzyArtmapModel.from_arrays(w, [0, 1], step=7)
        assert model.step == 7
        assert model.num_categories == 2
        np.testing.assert_array_equal(model.weight_sums, w.sum(axis=1))

    def test_category_box_views(self):
        model = FuzzyArtmapModel(2, 2)
        model.learn([0.2, 0.3], 0)
        model.learn([0.6, 0.7], 0)
        cat = model.category(0)
        np.testing.assert_allclose(cat.box_lower, [0.2, 0.3])
        np.testing.assert_allclose(cat.box_upper, [0.6, 0.7])

    def test_search_is_a_dry_run(self):
        model = FuzzyArtmapModel(2, 2)
        model.learn([0.2, 0.3], 0)
        w = model.weights.copy()
        decision, j, m = model.search(complement_code([0.25, 0.35]), 0)
        assert decision == "absorbed" and j == 0 and 0 < m <= 1
        np.testing.assert_array_equal(model.weights, w)
        assert model.step == 1
