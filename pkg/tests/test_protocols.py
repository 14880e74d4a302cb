"""Training protocols: pass structure, gating, logging, determinism."""

from dataclasses import replace

import numpy as np
import pytest

from artstream import (ArtmapParams, AttackConfig, Dataset,
                       FuzzyArtmapModel, ProtocolKind, ProtocolSpec,
                       TrainEventLog, TrainLogRecord, complement_code,
                       derive_seed, pgd_wb_softmax, sep_aware_update,
                       train_protocol)


def two_blob_stream(n=40, d=3, seed=0):
    rng = np.random.default_rng(seed)
    half = n // 2
    x = np.concatenate([rng.uniform(0.0, 0.35, size=(half, d)),
                        rng.uniform(0.65, 1.0, size=(half, d))])
    y = np.array([0, 1] * half)[:n]
    x = x[rng.permutation(n)]
    return Dataset(x, y)


PARAMS = ArtmapParams(rho_baseline=0.7)
ATTACK = AttackConfig(epsilon=0.2, steps=4, seed=0)


class TestProtocolSpec:
    def test_kind_coerces_from_string(self):
        spec = ProtocolSpec(kind="vanilla")
        assert spec.kind is ProtocolKind.VANILLA

    def test_adversarial_kinds_require_attack(self):
        for kind in ProtocolKind:
            if kind is ProtocolKind.VANILLA:
                ProtocolSpec(kind=kind)
                continue
            with pytest.raises(ValueError):
                ProtocolSpec(kind=kind)
            ProtocolSpec(kind=kind, attack=ATTACK)

    def test_rejects_bad_theta_and_ranges(self):
        with pytest.raises(ValueError):
            ProtocolSpec(kind="sep_aware", attack=ATTACK, theta=1.5)
        with pytest.raises(ValueError):
            ProtocolSpec(kind="two_stage_selective", attack=ATTACK,
                         stage1_range=(0.3, 0.1))

    def test_kind_predicates(self):
        assert not ProtocolKind.VANILLA.adversarial
        assert ProtocolKind.ADV_OFFLINE.offline
        assert not ProtocolKind.ADV_ONLINE.offline
        assert ProtocolKind.SELECTIVE_ONLINE.selective
        assert not ProtocolKind.SEP_AWARE.selective


class TestVanilla:
    def test_equals_plain_sequential_learning(self):
        stream = two_blob_stream()
        model, log = train_protocol(stream, ProtocolSpec(kind="vanilla"),
                                    PARAMS, seed=5)
        manual = FuzzyArtmapModel.from_params(stream.input_dim,
                                              stream.num_classes, PARAMS)
        for i in range(len(stream)):
            manual.learn(stream.features[i], int(stream.labels[i]))
        np.testing.assert_array_equal(model.weights, manual.weights)
        np.testing.assert_array_equal(model.class_map, manual.class_map)
        assert all(r.kind == "clean" for r in log)
        assert len(log) == len(stream)

    def test_empty_stream_is_an_error(self):
        empty = Dataset(np.empty((0, 2)), np.empty(0, dtype=int),
                        num_classes=2)
        with pytest.raises(ValueError):
            train_protocol(empty, ProtocolSpec(kind="vanilla"), PARAMS)


class TestOffline:
    def test_pass_structure(self):
        stream = two_blob_stream()
        _, log = train_protocol(
            stream, ProtocolSpec(kind="adv_offline", attack=ATTACK),
            PARAMS, seed=3)
        recs = list(log)
        n = len(stream)
        assert len(recs) == 2 * n
        assert all(r.pass_idx == 0 and r.kind == "clean"
                   for r in recs[:n])
        assert all(r.pass_idx == 1 and r.kind == "adv"
                   for r in recs[n:])
        assert [r.index for r in recs[n:]] == list(range(n))

    def test_attacks_target_the_frozen_post_clean_model(self):
        stream = two_blob_stream()
        seed = 11
        model, _ = train_protocol(
            stream, ProtocolSpec(kind="adv_offline", attack=ATTACK),
            PARAMS, seed=seed)

        manual = FuzzyArtmapModel.from_params(stream.input_dim,
                                              stream.num_classes, PARAMS)
        for i in range(len(stream)):
            manual.learn(stream.features[i], int(stream.labels[i]))
        reference = manual.copy()
        cfg = replace(ATTACK, seed=derive_seed(seed, "attack", 1))
        for i in range(len(stream)):
            x_adv = pgd_wb_softmax(reference, stream.features[i],
                                   int(stream.labels[i]), cfg,
                                   sample_index=i)
            manual.learn(x_adv, int(stream.labels[i]))
        np.testing.assert_array_equal(model.weights, manual.weights)
        np.testing.assert_array_equal(model.class_map, manual.class_map)

    def test_selective_offline_gate_consults_the_evolving_model(self):
        stream = two_blob_stream()
        _, log = train_protocol(
            stream, ProtocolSpec(kind="selective_offline", attack=ATTACK),
            PARAMS, seed=3)
        assert log.verify_selective_updates()
        assert log.verify_no_replay()

    def test_selective_offline_without_errors_reduces_to_vanilla(self):
        # one class only: every perturbed point is still "correct", the
        # gate skips everything, and the model matches vanilla training
        rng = np.random.default_rng(2)
        stream = Dataset(rng.uniform(size=(20, 2)), np.zeros(20, dtype=int))
        spec = ProtocolSpec(kind="selective_offline", attack=ATTACK)
        model, log = train_protocol(stream, spec, PARAMS, seed=1)
        vmodel, _ = train_protocol(stream, ProtocolSpec(kind="vanilla"),
                                   PARAMS, seed=1)
        np.testing.assert_array_equal(model.weights, vmodel.weights)
        assert all(r.decision == "skipped" for r in log.adv_records())


class TestOnline:
    def test_interleaves_clean_and_adversarial(self):
        stream = two_blob_stream()
        _, log = train_protocol(
            stream, ProtocolSpec(kind="adv_online", attack=ATTACK),
            PARAMS, seed=3)
        kinds = [r.kind for r in log]
        assert kinds == ["clean", "adv"] * len(stream)
        assert all(r.pass_idx == 0 for r in log)

    def test_attacks_target_the_current_model(self):
        stream = two_blob_stream()
        seed = 7
        model, _ = train_protocol(
            stream, ProtocolSpec(kind="adv_online", attack=ATTACK),
            PARAMS, seed=seed)

        manual = FuzzyArtmapModel.from_params(stream.input_dim,
                                              stream.num_classes, PARAMS)
        cfg = replace(ATTACK, seed=derive_seed(seed, "attack", 0))
        for i in range(len(stream)):
            x, y = stream.features[i], int(stream.labels[i])
            manual.learn(x, y)
            x_adv = pgd_wb_softmax(manual, x, y, cfg, sample_index=i)
            manual.learn(x_adv, y)
        np.testing.assert_array_equal(model.weights, manual.weights)

    def test_selective_online_skips_exactly_the_correct_ones(self):
        stream = two_blob_stream()
        _, log = train_protocol(
            stream, ProtocolSpec(kind="selective_online", attack=ATTACK),
            PARAMS, seed=3)
        assert log.verify_selective_updates()
        skipped = [r for r in log.adv_records() if r.decision == "skipped"]
        updated = [r for r in log.adv_records() if r.decision != "skipped"]
        assert all(r.misclassified is False for r in skipped)
        assert all(r.misclassified is True for r in updated)

    def test_sep_aware_records_carry_overlap_scores(self):
        stream = two_blob_stream()
        spec = ProtocolSpec(kind="sep_aware", attack=ATTACK, theta=0.01)
        _, log = train_protocol(stream, spec, PARAMS, seed=3)
        advs = log.adv_records()
        assert advs and all(r.decision != "skipped" for r in advs)
        with_scores = [r for r in advs if r.delta is not None]
        assert with_scores, "expected simulated-overlap scores on records"
        for r in log:
            if r.kind == "clean":
                assert r.delta is None


class TestTwoStage:
    def test_stage_structure_and_budgets(self):
        stream = two_blob_stream()
        spec = ProtocolSpec(kind="two_stage_selective", attack=ATTACK,
                            stage1_range=(0.05, 0.15),
                            stage2_range=(0.15, 0.35))
        _, log = train_protocol(stream, spec, PARAMS, seed=9)
        p0 = [r for r in log if r.pass_idx == 0]
        p1 = [r for r in log if r.pass_idx == 1]
        assert [r.kind for r in p0] == ["clean", "adv"] * len(stream)
        # the escalation pass never re-presents clean samples
        assert [r.kind for r in p1] == ["adv"] * len(stream)
        for r in p0:
            if r.kind == "adv":
                assert 0.05 <= r.epsilon <= 0.15
        for r in p1:
            assert 0.15 <= r.epsilon <= 0.35
        assert log.verify_selective_updates()
        assert log.verify_no_replay()

    def test_budget_draws_vary_per_sample(self):
        stream = two_blob_stream()
        spec = ProtocolSpec(kind="two_stage_selective", attack=ATTACK)
        _, log = train_protocol(stream, spec, PARAMS, seed=9)
        eps = [r.epsilon for r in log.adv_records()]
        assert len(set(eps)) > len(eps) // 2


class TestSepAwareUpdate:
    def test_no_category_for_class_creates_with_none_score(self):
        model = FuzzyArtmapModel(2, 2)
        model.learn([0.2, 0.2], 0)
        ev, delta = sep_aware_update(model, [0.8, 0.8], 1, theta=0.01)
        assert ev.decision == "created"
        assert delta is None
        assert model.class_map[ev.category_id] == 1

    def test_no_wrong_class_categories_scores_zero_and_absorbs(self):
        model = FuzzyArtmapModel(2, 2, rho_baseline=0.0)
        model.learn([0.2, 0.2], 0)
        ev, delta = sep_aware_update(model, [0.25, 0.25], 0, theta=0.01)
        assert delta == 0.0
        assert ev.decision == "absorbed"

    def test_high_overlap_forces_creation(self):
        # absorbing would stretch the class-0 box right next to the
        # class-1 box; in coded space those boxes overlap heavily
        w0 = complement_code([0.30, 0.30])
        w1 = complement_code([0.35, 0.35])
        model = FuzzyArtmapModel.from_arrays(np.stack([w0, w1]), [0, 1],
                                             num_classes=2)
        ev, delta = sep_aware_update(model, [0.32, 0.32], 0, theta=0.01)
        assert ev.decision == "created"
        assert delta is not None and delta > 0.9
        # the would-be host is untouched
        np.testing.assert_array_equal(model.weights[0], w0)

    def test_low_overlap_absorbs_with_hand_checked_score(self):
        # d = 1: host box grows to [0.1, 0.12], far box sits at 0.97;
        # coded intersection 0.15 against min size 1.0 gives 0.15
        w0 = complement_code([0.12])
        w1 = complement_code([0.97])
        model = FuzzyArtmapModel.from_arrays(np.stack([w0, w1]), [0, 1],
                                             num_classes=2)
        ev, delta = sep_aware_update(model, [0.10], 0, theta=0.2)
        assert delta == pytest.approx(0.15 / (1.0 + 1e-9), rel=1e-9)
        assert ev.decision == "absorbed"
        np.testing.assert_array_equal(model.weights[0],
                                      np.minimum(w0, complement_code([0.10])))

    def test_host_is_best_correct_class_category_ignoring_vigilance(self):
        # the wrong-class category is the global choice winner; the update
        # must still simulate against the best same-class one
        w_wrong = complement_code([0.50, 0.50])
        w_near = complement_code([0.45, 0.45])
        w_far = complement_code([0.95, 0.95])
        model = FuzzyArtmapModel.from_arrays(
            np.stack([w_wrong, w_far, w_near]), [1, 0, 0], num_classes=2)
        ev, _ = sep_aware_update(model, [0.5, 0.5], 0, theta=1.1)
        # theta > 1 disables the gate, so it must absorb into w_near (id 2)
        assert ev.decision == "absorbed"
        assert ev.category_id == 2

    def test_threshold_boundary_is_strict(self):
        # delta == theta exactly still absorbs; only delta > theta creates
        w0 = complement_code([0.12])
        w1 = complement_code([0.97])
        model = FuzzyArtmapModel.from_arrays(np.stack([w0, w1]), [0, 1],
                                             num_classes=2)
        _, delta = sep_aware_update(model.copy(), [0.10], 0, theta=1.0)
        ev, _ = sep_aware_update(model, [0.10], 0, theta=delta)
        assert ev.decision == "absorbed"


class TestEventLog:
    def test_jsonl_round_trip(self, tmp_path):
        stream = two_blob_stream(20)
        spec = ProtocolSpec(kind="sep_aware", attack=ATTACK)
        _, log = train_protocol(stream, spec, PARAMS, seed=2)
        path = tmp_path / "events.jsonl"
        log.to_jsonl(path)
        loaded = TrainEventLog.from_jsonl(path)
        assert list(loaded) == list(log)

    def test_no_replay_detects_duplicates(self):
        rec = TrainLogRecord(0, 0, 0, "clean", None, "created", 0,
                             1.0, 1.0, None, None)
        log = TrainEventLog([rec, rec])
        assert not log.verify_no_replay()

    def test_match_preservation_clean_under_fast_learning(self):
        stream = two_blob_stream(60)
        for kind in ["vanilla", "adv_online", "sep_aware"]:
            spec = (ProtocolSpec(kind=kind) if kind == "vanilla"
                    else ProtocolSpec(kind=kind, attack=ATTACK))
            _, log = train_protocol(stream, spec, PARAMS, seed=4)
            assert log.match_preservation_violations() == []


class TestDeterminism:
    @pytest.mark.parametrize("kind", [k.value for k in ProtocolKind])
    def test_same_seed_reproduces_bit_identical_models(self, kind):
        stream = two_blob_stream()
        spec = (ProtocolSpec(kind=kind) if kind == "vanilla"
                else ProtocolSpec(kind=kind, attack=ATTACK))
        m1, l1 = train_protocol(stream, spec, PARAMS, seed=13)
        m2, l2 = train_protocol(stream, spec, PARAMS, seed=13)
        np.testing.assert_array_equal(m1.weights, m2.weights)
        np.testing.assert_array_equal(m1.class_map, m2.class_map)
        assert list(l1) == list(l2)

    def test_different_seed_changes_adversarial_stream(self):
        stream = two_blob_stream()
        spec = ProtocolSpec(kind="adv_online", attack=ATTACK)
        m1, _ = train_protocol(stream, spec, PARAMS, seed=1)
        m2, _ = train_protocol(stream, spec, PARAMS, seed=2)
        same = (m1.num_categories == m2.num_categories
                and np.array_equal(m1.weights, m2.weights))
        assert not same

    def test_on_event_hook_sees_every_record(self):
        stream = two_blob_stream(20)
        seen = []
        spec = ProtocolSpec(kind="selective_online", attack=ATTACK)
        model, log = train_protocol(stream, spec, PARAMS, seed=3,
                                    on_event=lambda m, r: seen.append(r))
        assert len(seen) == len(log)
        assert seen == list(log)
