"""Training loop determinism, checkpoint selection, and few-shot sampling."""

import numpy as np
import pytest

from ptr import (
    DataError,
    ModelConfig,
    TinyMLM,
    TrainConfig,
    Vocab,
    generate_synthetic,
    train,
)
from ptr.data import merge_token_sets
from ptr.optim import lr_at
from ptr.training import evaluate_dataset, few_shot_sample, history_csv, prepare_examples


@pytest.fixture(scope="module")
def task(synth_spec, synth_schema):
    train_set = generate_synthetic(synth_spec, 30, seed=61, split="train")
    dev_set = generate_synthetic(synth_spec, 8, seed=62, split="dev")
    vocab = Vocab.build(synth_schema, [merge_token_sets([train_set, dev_set])])
    model = TinyMLM.init(ModelConfig(n_classes=4), vocab, seed=3)
    return model, train_set, dev_set


class TestTrain:
    def test_separable_corpus_learns(self, task, synth_schema):
        model, train_set, dev_set = task
        result = train(model, synth_schema, train_set, dev_set, TrainConfig(seed=1))
        assert result.history[-1].loss < result.history[0].loss
        assert max(result.epoch_dev_f1) == 1.0

    def test_deterministic_history(self, task, synth_schema):
        model, train_set, dev_set = task
        cfg = TrainConfig(epochs=2, seed=5)
        r1 = train(model, synth_schema, train_set, dev_set, cfg)
        r2 = train(model, synth_schema, train_set, dev_set, cfg)
        assert r1.history == r2.history
        assert history_csv(r1.history) == history_csv(r2.history)
        for name in r1.model.params:
            assert np.array_equal(r1.model.params[name], r2.model.params[name])

    def test_zero_epochs_returns_initial_model(self, task, synth_schema):
        model, train_set, dev_set = task
        result = train(model, synth_schema, train_set, dev_set,
                       TrainConfig(epochs=0, seed=1))
        assert result.history == []
        for name in model.params:
            assert np.array_equal(result.model.params[name], model.params[name])

    def test_inputs_not_mutated(self, task, synth_schema):
        model, train_set, dev_set = task
        params_before = {k: v.copy() for k, v in model.params.items()}
        instances_before = train_set.instances
        train(model, synth_schema, train_set, dev_set, TrainConfig(epochs=1, seed=2))
        assert train_set.instances == instances_before
        for name, arr in model.params.items():
            assert np.array_equal(arr, params_before[name])

    def test_history_length_and_lr_schedule(self, task, synth_schema):
        model, train_set, dev_set = task
        cfg = TrainConfig(epochs=3, batch_size=8, seed=1)
        result = train(model, synth_schema, train_set, dev_set, cfg)
        n_batches = (len(train_set) + cfg.batch_size - 1) // cfg.batch_size
        total = cfg.epochs * n_batches
        assert len(result.history) == total
        for rec in result.history:
            assert rec.lr == lr_at(rec.step, total, cfg.learning_rate, cfg.warmup_fraction)
        assert max(r.lr for r in result.history) <= cfg.learning_rate

    def test_empty_dev_returns_last_checkpoint_flagged(self, task, synth_schema, synth_spec):
        model, train_set, _ = task
        empty = generate_synthetic(synth_spec, 1, seed=63).with_split("dev")
        empty = type(empty)((), empty.classes, "dev")
        result = train(model, synth_schema, train_set, empty, TrainConfig(epochs=1, seed=1))
        assert result.dev_missing

    def test_best_checkpoint_earliest_on_ties(self, task, synth_schema):
        model, train_set, dev_set = task
        result = train(model, synth_schema, train_set, dev_set, TrainConfig(seed=1))
        first_perfect = 1 + result.epoch_dev_f1.index(max(result.epoch_dev_f1))
        assert result.best_epoch == first_perfect

    def test_empty_train_set_rejected(self, task, synth_schema, synth_spec):
        model, _, dev_set = task
        empty = type(dev_set)((), dev_set.classes, "train")
        with pytest.raises(DataError, match="empty training set"):
            train(model, synth_schema, empty, dev_set, TrainConfig())

    def test_cls_baseline_objective_trains(self, task, synth_schema):
        model, train_set, dev_set = task
        cfg = TrainConfig(epochs=2, seed=4, objective="cls-baseline")
        result = train(model, synth_schema, train_set, dev_set, cfg)
        assert result.history[-1].loss < result.history[0].loss
        report, _ = evaluate_dataset(result.model, synth_schema, dev_set, "cls-baseline")
        assert 0.0 <= report.micro_f1 <= 1.0


class TestConfigValidation:
    def test_train_config_bounds(self):
        with pytest.raises(ValueError, match="warmup_fraction"):
            TrainConfig(warmup_fraction=1.0)
        with pytest.raises(ValueError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError, match="batch_size"):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError, match="objective"):
            TrainConfig(objective="prompts")

    def test_fewshot_config_bounds(self):
        from ptr import FewShotConfig

        assert FewShotConfig().seeds == (1, 2, 3, 4, 5)
        with pytest.raises(ValueError, match="k must"):
            FewShotConfig(k=0)
        with pytest.raises(ValueError, match="seeds"):
            FewShotConfig(k=8, seeds=())


class TestFewShotSample:
    def test_reproducible(self, synth_spec):
        pool = generate_synthetic(synth_spec, 10, seed=7)
        a = few_shot_sample(pool, 2, seed=42)
        b = few_shot_sample(pool, 2, seed=42)
        assert [i.id for i in a.train] == [i.id for i in b.train]
        assert [i.id for i in a.dev] == [i.id for i in b.dev]

    def test_exact_counts(self, synth_spec):
        pool = generate_synthetic(synth_spec, 20, seed=7)
        sample = few_shot_sample(pool, 8, seed=1)
        assert len(sample.train) == 32  # 8 x 4 classes
        assert len(sample.dev) == 32
        assert not sample.shortfall

    def test_train_dev_disjoint(self, synth_spec):
        pool = generate_synthetic(synth_spec, 10, seed=7)
        sample = few_shot_sample(pool, 4, seed=3)
        assert not {i.id for i in sample.train} & {i.id for i in sample.dev}

    def test_shortfall_flagged(self, synth_spec):
        pool = generate_synthetic(synth_spec, 1, seed=7)
        sample = few_shot_sample(pool, 8, seed=1)
        per_class = sample.train.by_class()
        assert all(len(v) == 1 for v in per_class.values())
        assert len(sample.dev) == 0
        assert set(sample.shortfall) == set(synth_spec.classes)

    def test_per_class_balance(self, synth_spec):
        pool = generate_synthetic(synth_spec, 12, seed=9)
        sample = few_shot_sample(pool, 5, seed=2)
        assert all(len(v) == 5 for v in sample.train.by_class().values())

    def test_pool_not_mutated(self, synth_spec):
        pool = generate_synthetic(synth_spec, 6, seed=8)
        ids_before = [i.id for i in pool]
        few_shot_sample(pool, 3, seed=4)
        assert [i.id for i in pool] == ids_before


class TestPrepareExamples:
    def test_ptr_examples_carry_mask_targets(self, task, synth_schema):
        model, train_set, _ = task
        examples = prepare_examples(model, synth_schema, train_set, "ptr")
        ex = examples[0]
        assert len(ex.mask_positions) == synth_schema.n_masks
        assert ex.mask_targets == synth_schema.verbalizer[train_set.instances[0].label]

    def test_unknown_label_rejected(self, task, synth_schema, synth_spec):
        from ptr import Dataset, Instance

        model, _, _ = task
        stray = Dataset(
            (Instance(("was", "born"), (0, 1), (1, 2), "mystery", "s"),), ("mystery",), "x"
        )
        with pytest.raises(DataError, match="outside the schema classes"):
            prepare_examples(model, synth_schema, stray, "ptr")
