import numpy as np
import pytest

from altdebias import datasets, mlp, train
from altdebias.train import TrainConfig


@pytest.fixture(scope="module")
def tiny_pair():
    raw_train = datasets.synthesize_glyphs(600, 21)
    raw_test = datasets.synthesize_glyphs(800, 22)
    config = datasets.DatasetConfig("multi_color", (0.9, 0.8), seed=3,
                                    train_count=600, test_count=400)
    return datasets.generate_biased(raw_train, raw_test, config)


def params_snapshot(model):
    return [p.data.copy() for p in model.params]


def assert_params_equal(model, snapshot):
    for p, s in zip(model.params, snapshot):
        np.testing.assert_array_equal(p.data, s)


class TestConfigValidation:
    def test_unknown_method(self):
        with pytest.raises(ValueError):
            TrainConfig(method="dropout")

    def test_bad_schedule(self):
        with pytest.raises(ValueError):
            TrainConfig(method="vanilla", epochs=-1)
        with pytest.raises(ValueError):
            TrainConfig(method="vanilla", lr=0.0)

    def test_discover_only_needs_checkpoint(self):
        with pytest.raises(ValueError):
            TrainConfig(method="discover_only")


class TestFreezeContracts:
    def test_discover_step_leaves_classifier_untouched(self, tiny_pair):
        tr, _ = tiny_pair
        config = TrainConfig(method="debian", epochs=1, batch_size=64,
                             seed=0)
        state = train.init_state(config)
        before = params_snapshot(state.classifier)
        train.discover_step(state, tr, np.arange(64))
        assert_params_equal(state.classifier, before)

    def test_discover_step_updates_discoverer(self, tiny_pair):
        tr, _ = tiny_pair
        config = TrainConfig(method="debian", epochs=1, batch_size=64,
                             seed=0)
        state = train.init_state(config)
        before = params_snapshot(state.discoverer)
        train.discover_step(state, tr, np.arange(64))
        changed = any(not np.array_equal(p.data, s) for p, s in
                      zip(state.discoverer.params, before))
        assert changed

    def test_classifier_phase_leaves_discoverer_untouched(self, tiny_pair):
        tr, _ = tiny_pair
        config = TrainConfig(method="debian", epochs=1, batch_size=64,
                             seed=0)
        state = train.init_state(config)
        before = params_snapshot(state.discoverer)
        train._classifier_step(state, tr, np.arange(64), "debian", config)
        assert_params_equal(state.discoverer, before)

    def test_single_class_batch_accepted(self, tiny_pair):
        tr, _ = tiny_pair
        config = TrainConfig(method="debian", epochs=1, batch_size=64,
                             seed=0)
        state = train.init_state(config)
        one_class = np.flatnonzero(tr.targets == 4)[:8]
        loss = train.discover_step(state, tr, one_class)
        assert loss is not None and np.isfinite(loss)

    def test_empty_batch_skipped(self, tiny_pair):
        tr, _ = tiny_pair
        config = TrainConfig(method="debian", epochs=1, batch_size=64,
                             seed=0)
        state = train.init_state(config)
        loss = train.discover_step(state, tr, np.array([], dtype=np.int64))
        assert loss is None
        assert state.skipped_steps == 1


class TestRun:
    def test_determinism(self, tiny_pair):
        tr, te = tiny_pair
        rows = []
        for _ in range(2):
            config = TrainConfig(method="debian", epochs=2, batch_size=64,
                                 seed=9)
            _, records = train.run(config, tr, te)
            rows.append([r.csv_row() for r in records])
        assert rows[0] == rows[1]

    def test_seed_changes_trajectory(self, tiny_pair):
        tr, te = tiny_pair
        outs = []
        for seed in (1, 2):
            config = TrainConfig(method="vanilla", epochs=1, batch_size=64,
                                 seed=seed)
            state, records = train.run(config, tr, te)
            outs.append((records[-1].csv_row(),
                         state.classifier.weights[0].data.copy()))
        assert (outs[0][0] != outs[1][0]
                or not np.array_equal(outs[0][1], outs[1][1]))

    def test_zero_epochs_evaluates_initial_model(self, tiny_pair):
        tr, te = tiny_pair
        config = TrainConfig(method="vanilla", epochs=0, batch_size=64,
                             seed=0)
        _, records = train.run(config, tr, te)
        assert len(records) == 1
        assert records[0].epoch == 0
        # untrained model sits near chance level
        assert records[0].unbiased < 0.3

    def test_vanilla_has_no_discoverer(self, tiny_pair):
        tr, te = tiny_pair
        config = TrainConfig(method="vanilla", epochs=1, batch_size=64,
                             seed=0)
        state, records = train.run(config, tr, te)
        assert state.discoverer is None
        assert records[-1].loss_d is None
        assert records[-1].disc_acc_left is None

    def test_eval_every(self, tiny_pair):
        tr, te = tiny_pair
        config = TrainConfig(method="vanilla", epochs=5, batch_size=64,
                             seed=0, eval_every=2)
        _, records = train.run(config, tr, te)
        assert [r.epoch for r in records] == [2, 4, 5]

    def test_alternate_reports_both_losses(self, tiny_pair):
        tr, te = tiny_pair
        config = TrainConfig(method="debian", epochs=1, batch_size=64,
                             seed=0)
        _, records = train.run(config, tr, te)
        assert records[-1].loss_c is not None
        assert records[-1].loss_d is not None

    def test_learning_happens(self, tiny_pair):
        tr, te = tiny_pair
        config = TrainConfig(method="vanilla", epochs=10, batch_size=64,
                             seed=0, eval_every=10)
        _, records = train.run(config, tr, te)
        assert records[-1].acc_aa > 0.5

    def test_discover_only_from_checkpoint(self, tiny_pair, tmp_path):
        tr, te = tiny_pair
        base = TrainConfig(method="vanilla", epochs=3, batch_size=64, seed=0)
        state, _ = train.run(base, tr, te)
        ckpt = tmp_path / "cls.ckpt"
        mlp.save_checkpoint(state.classifier, ckpt)

        config = TrainConfig(method="discover_only", epochs=2, batch_size=64,
                             seed=0, classifier_ckpt=str(ckpt))
        d_state, records = train.run(config, tr, te)
        # the loaded classifier is never updated
        for p, q in zip(state.classifier.params, d_state.classifier.params):
            np.testing.assert_array_equal(p.data.astype(np.float32),
                                          q.data.astype(np.float32))
        assert records[-1].disc_acc_left is not None

    def test_imbalance_metric_bounds(self, tiny_pair):
        tr, te = tiny_pair
        config = TrainConfig(method="debian", epochs=1, batch_size=64,
                             seed=0)
        state, _ = train.run(config, tr, te)
        imb = train.assignment_imbalance(state.discoverer, te)
        assert 0.0 <= imb <= 1.0
