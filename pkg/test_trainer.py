#!/usr/bin/env python3
"""
Tests for Adam, negative sampling, the margin loss and the training loop
"""

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import memorization_kg
import sphere_kge.trainer as trainer_module
from sphere_kge.data import EncodedSplit, build_filter_index
from sphere_kge.evaluator import evaluate
from sphere_kge.exceptions import DimensionMismatchError, NonFiniteGradientError
from sphere_kge.models import ModelKind, entity_norms, entity_points, init_model, score
from sphere_kge.optimizer import AdamState, adam_step
from sphere_kge.reports import read_jsonl
from sphere_kge.trainer import (
    TrainConfig,
    Trainer,
    TrainingRandomness,
    margin_loss,
    sample_negatives,
    train_epoch,
)

TINY_KG = EncodedSplit(np.array([
    (0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 4),
    (0, 1, 2), (1, 1, 3), (2, 1, 4), (4, 1, 0),
]), name="train")


class TestAdam:
    def test_zero_gradient(self):
        param = np.array([1.0, -2.0])
        adam_step({"w": param}, {"w": np.zeros(2)}, AdamState(), lr=0.1)
        np.testing.assert_array_equal(param, [1.0, -2.0])

    def test_first_step_moves_by_lr(self):
        param = np.zeros(3)
        state = AdamState()
        adam_step({"w": param}, {"w": np.array([0.5, -3.0, 20.0])}, state, lr=0.01)
        np.testing.assert_allclose(param, [-0.01, 0.01, -0.01], rtol=1e-6)
        assert state.step == 1

    def test_quadratic_bowl_descends(self):
        center = np.array([3.0, -1.0, 0.5])
        x = center + 20.0
        state = AdamState()
        losses = []
        for _ in range(100):
            losses.append(float(np.sum((x - center) ** 2)))
            adam_step({"x": x}, {"x": 2 * (x - center)}, state, lr=0.1)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_non_finite_gradient_changes_nothing(self):
        a, b = np.ones(2), np.ones(2)
        state = AdamState()
        with pytest.raises(NonFiniteGradientError) as excinfo:
            adam_step({"a": a, "b": b}, {"a": np.ones(2), "b": np.array([np.inf, 0.0])}, state, lr=0.1)
        assert excinfo.value.parameter == "b"
        np.testing.assert_array_equal(a, 1.0)
        assert state.step == 0
        assert state.m == {}

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            adam_step({"a": np.ones(2)}, {"a": np.ones(3)}, AdamState(), lr=0.1)


class TestNegativeSampling:
    def test_support_with_two_entities(self):
        rng = np.random.default_rng(0)
        negatives = sample_negatives(np.array([[0, 0, 1]]), 2, rng, k=200)
        assert negatives.shape == (200, 3)
        assert np.all(negatives[:, 1] == 0)
        assert set(negatives[:, 0].tolist()) <= {0, 1}
        assert set(negatives[:, 2].tolist()) <= {0, 1}
        # exactly one side is resampled per row
        assert np.all((negatives[:, 0] == 0) | (negatives[:, 2] == 1))

    def test_replacement_is_uniform(self):
        n_entities = 10
        rng = np.random.default_rng(2024)
        negatives = sample_negatives(np.zeros((100_000, 3), dtype=np.int64), n_entities, rng)
        # the untouched side stays 0, so the sum is the replacement
        replaced = negatives[:, 0] + negatives[:, 2]
        counts = np.bincount(replaced, minlength=n_entities)
        expected = 100_000 / n_entities
        sigma = np.sqrt(100_000 * 0.1 * 0.9)
        assert np.all(np.abs(counts - expected) < 4 * sigma)
        assert chisquare(counts).pvalue > 1e-3

    def test_head_or_tail_is_a_fair_coin(self):
        negatives = sample_negatives(np.zeros((100_000, 3), dtype=np.int64), 10, np.random.default_rng(99))
        # a nonzero replacement shows which side was corrupted
        head = negatives[:, 0] != 0
        known = head | (negatives[:, 2] != 0)
        share = head[known].mean()
        sigma = np.sqrt(0.25 / known.sum())
        assert abs(share - 0.5) < 3 * sigma

    def test_fixed_seed_repeats(self):
        batch = TINY_KG.triples
        a = sample_negatives(batch, 5, np.random.default_rng(7), k=3)
        b = sample_negatives(batch, 5, np.random.default_rng(7), k=3)
        np.testing.assert_array_equal(a, b)

    def test_rows_grouped_by_positive(self):
        negatives = sample_negatives(TINY_KG.triples, 5, np.random.default_rng(1), k=4)
        np.testing.assert_array_equal(negatives[:, 1], np.repeat(TINY_KG.relations, 4))

    def test_filtered_corruption_avoids_known_triples(self):
        known = build_filter_index(EncodedSplit(np.array([(0, 0, 1), (1, 0, 1), (0, 0, 0)])))
        negatives = sample_negatives(np.array([[0, 0, 1]]), 10, np.random.default_rng(3), k=1000,
                                     filter_index=known)
        assert not any(known.contains(*row) for row in negatives.tolist())

    def test_needs_two_entities(self):
        with pytest.raises(ValueError):
            sample_negatives(np.array([[0, 0, 0]]), 1, np.random.default_rng(0))


class TestMarginLoss:
    def test_satisfied_margin(self):
        loss, grad_pos, grad_neg = margin_loss(np.array([0.0]), np.array([[3.0]]), margin=2.0)
        assert loss == 0.0
        assert np.all(grad_pos == 0) and np.all(grad_neg == 0)

    def test_hand_arithmetic(self):
        loss, grad_pos, grad_neg = margin_loss(np.array([1.0]), np.array([[0.0]]), margin=1.0)
        assert loss == 2.0
        assert grad_pos.tolist() == [1.0]
        assert grad_neg.tolist() == [[-1.0]]

    def test_matches_pair_loop(self):
        rng = np.random.default_rng(5)
        s_pos = rng.uniform(0, 3, size=6)
        s_neg = rng.uniform(0, 3, size=(6, 4))
        loss, grad_pos, grad_neg = margin_loss(s_pos, s_neg, margin=1.5)

        total, expected_pos, expected_neg = 0.0, np.zeros(6), np.zeros((6, 4))
        for i in range(6):
            for j in range(4):
                hinge = 1.5 + s_pos[i] - s_neg[i, j]
                if hinge > 0:
                    total += hinge
                    expected_pos[i] += 1 / 24
                    expected_neg[i, j] -= 1 / 24
        assert loss == pytest.approx(total / 24)
        np.testing.assert_allclose(grad_pos, expected_pos)
        np.testing.assert_allclose(grad_neg, expected_neg)


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [
        {"margin": 0.0}, {"lr": -1.0}, {"batch_size": 0}, {"negatives": 0}, {"patience": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestTrainEpoch:
    @pytest.mark.parametrize("kind", [ModelKind.TRANSE, ModelKind.SKGE])
    def test_zero_learning_rate(self, kind):
        model = init_model(kind, 5, 2, 4, seed=1)
        before = model.copy()
        config = TrainConfig(dim=4, margin=1.0, lr=0.0, batch_size=64, negatives=2, seed=3)
        loss = train_epoch(model, TINY_KG, config, TrainingRandomness.from_seed(3), AdamState())

        np.testing.assert_array_equal(model.entity_latent, before.entity_latent)
        np.testing.assert_array_equal(model.relation_vecs, before.relation_vecs)

        replay = TrainingRandomness.from_seed(3)
        batch = TINY_KG.triples[replay.shuffle.permutation(len(TINY_KG))]
        negatives = sample_negatives(batch, 5, replay.sampling, 2)
        s_pos = score(before, batch[:, 0], batch[:, 1], batch[:, 2])
        s_neg = score(before, negatives[:, 0], negatives[:, 1], negatives[:, 2]).reshape(-1, 2)
        assert loss == pytest.approx(margin_loss(s_pos, s_neg, 1.0)[0])

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_loss_decreases(self, kind):
        model = init_model(kind, 5, 2, 8, seed=0)
        config = TrainConfig(dim=8, margin=1.0, lr=0.01, batch_size=4, negatives=2, seed=0)
        rng = TrainingRandomness.from_seed(0)
        state = AdamState()
        losses = [train_epoch(model, TINY_KG, config, rng, state, epoch=e) for e in range(200)]
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_learnable_scale_moves(self):
        model = init_model("skge-learnablescale", 5, 2, 4, seed=0)
        config = TrainConfig(dim=4, margin=1.0, lr=0.05, batch_size=8, seed=0)
        train_epoch(model, TINY_KG, config, TrainingRandomness.from_seed(0), AdamState())
        assert model.spherization.scale != 1.0

    def test_transe_rows_are_normalised(self):
        model = init_model("transe", 5, 2, 4, seed=0)
        config = TrainConfig(dim=4, margin=1.0, lr=0.01, batch_size=8, negatives=4, seed=0)
        train_epoch(model, TINY_KG, config, TrainingRandomness.from_seed(0), AdamState())
        # every entity appears as a positive head or tail
        np.testing.assert_allclose(np.linalg.norm(model.entity_latent, axis=1), 1.0, rtol=1e-5)

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_only_touched_rows_change(self, kind):
        train = EncodedSplit(np.array([(0, 0, 1), (1, 1, 2), (2, 0, 3)]), name="train")
        model = init_model(kind, 10, 3, 4, seed=2)
        before = model.copy()
        config = TrainConfig(dim=4, margin=100.0, lr=0.01, batch_size=3, negatives=1, seed=4)
        train_epoch(model, train, config, TrainingRandomness.from_seed(4), AdamState())

        replay = TrainingRandomness.from_seed(4)
        batch = train.triples[replay.shuffle.permutation(3)]
        negatives = sample_negatives(batch, 10, replay.sampling, 1)
        touched = set(batch[:, [0, 2]].ravel().tolist()) | set(negatives[:, [0, 2]].ravel().tolist())
        untouched = sorted(set(range(10)) - touched)

        assert untouched
        np.testing.assert_array_equal(model.entity_latent[untouched], before.entity_latent[untouched])
        np.testing.assert_array_equal(model.relation_vecs[2], before.relation_vecs[2])
        assert not np.array_equal(model.entity_latent[sorted(touched)], before.entity_latent[sorted(touched)])


class TestTrainer:
    def test_fixed_seed_is_bit_identical(self, tmp_path):
        logs = []
        for run in ("a", "b"):
            model = init_model("skge", 5, 2, 4, seed=0)
            config = TrainConfig(dim=4, margin=1.0, lr=0.01, batch_size=3, epochs=6, eval_every=2, seed=11)
            trainer = Trainer(model, config, build_filter_index(TINY_KG), log_path=tmp_path / f"{run}.jsonl")
            best, log = trainer.fit(TINY_KG, TINY_KG)
            logs.append((log.losses, best.entity_latent.tobytes()))
        assert logs[0] == logs[1]
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_log_records(self, tmp_path):
        model = init_model("transe", 5, 2, 4, seed=0)
        config = TrainConfig(dim=4, margin=1.0, lr=0.01, batch_size=8, epochs=4, eval_every=2, record_timing=True)
        Trainer(model, config, build_filter_index(TINY_KG), log_path=tmp_path / "log.jsonl").fit(TINY_KG, TINY_KG)

        header, *epochs = read_jsonl(tmp_path / "log.jsonl")
        assert header["event"] == "start"
        assert header["kind"] == "transe"
        assert header["transe_normalize_entities"] is True
        assert [record["epoch"] for record in epochs] == [1, 2, 3, 4]
        assert ["val_mrr" in record for record in epochs] == [False, True, False, True]
        assert all("seconds" in record for record in epochs)

    def test_timing_is_off_by_default(self, tmp_path):
        model = init_model("skge", 5, 2, 4, seed=0)
        config = TrainConfig(dim=4, lr=0.01, batch_size=8, epochs=2, eval_every=1)
        Trainer(model, config, build_filter_index(TINY_KG), log_path=tmp_path / "log.jsonl").fit(TINY_KG, TINY_KG)
        assert not any("seconds" in record for record in read_jsonl(tmp_path / "log.jsonl"))

    @pytest.mark.parametrize("kind", [ModelKind.TRANSE, ModelKind.SKGE])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_early_stop_with_frozen_model(self, kind, seed):
        model = init_model(kind, 5, 2, 4, seed=seed)
        config = TrainConfig(dim=4, lr=0.0, batch_size=8, epochs=10, eval_every=1, patience=1)
        best, log = Trainer(model, config, build_filter_index(TINY_KG)).fit(TINY_KG, TINY_KG)
        assert log.stopped_early
        assert len(log.evaluations) == 2
        assert log.best_epoch == 1

    def test_final_epoch_is_evaluated(self):
        model = init_model("skge", 5, 2, 4, seed=0)
        config = TrainConfig(dim=4, lr=0.01, batch_size=8, epochs=5, eval_every=3)
        _, log = Trainer(model, config, build_filter_index(TINY_KG)).fit(TINY_KG, TINY_KG)
        assert [epoch for epoch, _ in log.evaluations] == [3, 5]

    def test_best_model_reproduces_validation_mrr(self, tmp_path):
        from sphere_kge.checkpoint import load_checkpoint, save_checkpoint

        filter_index = build_filter_index(TINY_KG)
        model = init_model("skge", 5, 2, 8, seed=0)
        config = TrainConfig(dim=8, margin=1.0, lr=0.01, batch_size=4, epochs=40, eval_every=5, patience=10)
        best, log = Trainer(model, config, filter_index).fit(TINY_KG, TINY_KG)
        reloaded = load_checkpoint(save_checkpoint(best, tmp_path / "model.ckpt"))
        assert evaluate(reloaded, TINY_KG, filter_index).metrics.mrr == log.best_val_mrr

    @pytest.mark.parametrize("kind", [ModelKind.TRANSE, ModelKind.SKGE])
    def test_memorizes_small_graph(self, kind):
        train = memorization_kg()
        filter_index = build_filter_index(train)
        model = init_model(kind, 40, 4, 16, seed=0)
        config = TrainConfig(dim=16, margin=1.0, lr=0.01, batch_size=5, epochs=500, negatives=4,
                             eval_every=25, patience=20, seed=0)
        _, log = Trainer(model, config, filter_index).fit(train, train)
        assert log.best_val_mrr > 0.9

    def test_unnormalised_transe_norms_grow(self):
        # 300 entities, one fact each: almost every corruption is an easy negative
        train = memorization_kg(150, 3)
        model = init_model("transe", 300, 3, 8, seed=0)
        start = float(entity_norms(model).max())
        config = TrainConfig(dim=8, margin=1000.0, lr=0.1, batch_size=15, epochs=40, negatives=4,
                             transe_normalize_entities=False)
        _, log = Trainer(model, config).fit(train)
        norms = [record.max_entity_norm for record in log.epochs]
        assert norms[-1] > norms[0]
        assert norms[-1] > 1.5 * start

    def test_filtered_corruption_sees_training_facts_only(self, monkeypatch):
        held_out = EncodedSplit(np.array([(0, 0, 2), (3, 1, 1)]), name="valid")
        indexes = []

        def recording(batch, n_entities, rng, k=1, filter_index=None):
            indexes.append(filter_index)
            return sample_negatives(batch, n_entities, rng, k, filter_index)

        monkeypatch.setattr(trainer_module, "sample_negatives", recording)
        config = TrainConfig(dim=4, margin=1.0, lr=0.01, batch_size=8, epochs=2, eval_every=1,
                             filtered_negatives=True)
        Trainer(init_model("skge", 5, 2, 4), config, build_filter_index(TINY_KG, held_out)).fit(TINY_KG, held_out)

        assert indexes
        assert all(index.n_triples == len(TINY_KG) for index in indexes)
        assert not any(index.contains(0, 0, 2) or index.contains(3, 1, 1) for index in indexes)

    def test_spherized_norms_stay_on_sphere(self):
        model = init_model("skge", 5, 2, 4, seed=0, radius=1.5)
        config = TrainConfig(dim=4, margin=1.0, lr=0.05, batch_size=4, epochs=30)
        best, _ = Trainer(model, config).fit(TINY_KG)
        np.testing.assert_allclose(np.linalg.norm(entity_points(best), axis=1), 1.5, rtol=1e-5)
