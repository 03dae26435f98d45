import numpy as np
import pytest

from altdebias import mlp
from altdebias.mlp import (
    HEAD_SIGMOID_GLOBAL,
    HEAD_SIGMOID_PER_CLASS,
    HEAD_SOFTMAX_CLASSES,
    CheckpointError,
    Mlp,
    classifier_forward,
    discoverer_forward,
    load_checkpoint,
    save_checkpoint,
)


def tiny_model(head, seed=0, input_dim=12, hidden=5):
    return Mlp(head, hidden=hidden, input_dim=input_dim,
               rng=np.random.default_rng(seed))


class TestArchitecture:
    def test_layer_shapes(self):
        m = tiny_model(HEAD_SOFTMAX_CLASSES)
        assert [w.data.shape for w in m.weights] == [
            (12, 5), (5, 5), (5, 5), (5, 10)]
        assert all(b.data.shape == (w.data.shape[1],)
                   for w, b in zip(m.weights, m.biases))

    def test_global_sigmoid_head_has_one_output(self):
        m = tiny_model(HEAD_SIGMOID_GLOBAL)
        assert m.weights[-1].data.shape == (5, 1)

    def test_zero_weights_give_uniform_softmax(self):
        m = tiny_model(HEAD_SOFTMAX_CLASSES)
        for w in m.weights:
            w.data[...] = 0.0
        out = m.forward(np.ones((3, 12), dtype=np.float32))
        np.testing.assert_allclose(out.data, np.full((3, 10), 0.1),
                                   atol=1e-7)

    def test_zero_weights_give_half_sigmoid(self):
        m = tiny_model(HEAD_SIGMOID_PER_CLASS)
        for w in m.weights:
            w.data[...] = 0.0
        out = m.forward(np.ones((3, 12), dtype=np.float32))
        np.testing.assert_allclose(out.data, np.full((3, 10), 0.5),
                                   atol=1e-7)

    def test_init_depends_on_rng(self):
        a = tiny_model(HEAD_SOFTMAX_CLASSES, seed=1)
        b = tiny_model(HEAD_SOFTMAX_CLASSES, seed=2)
        assert not np.array_equal(a.weights[0].data, b.weights[0].data)

    def test_init_deterministic(self):
        a = tiny_model(HEAD_SOFTMAX_CLASSES, seed=1)
        b = tiny_model(HEAD_SOFTMAX_CLASSES, seed=1)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa.data, wb.data)

    def test_glorot_bounds(self):
        m = tiny_model(HEAD_SOFTMAX_CLASSES)
        limit = np.sqrt(6.0 / (12 + 5))
        assert np.all(np.abs(m.weights[0].data) <= limit)


class TestHeadWrappers:
    def test_classifier_requires_softmax(self):
        with pytest.raises(ValueError):
            classifier_forward(tiny_model(HEAD_SIGMOID_PER_CLASS),
                               np.ones((1, 12), dtype=np.float32))

    def test_discoverer_per_class_column(self):
        m = tiny_model(HEAD_SIGMOID_PER_CLASS)
        x = np.random.default_rng(0).random((4, 12)).astype(np.float32)
        col = discoverer_forward(m, x, class_id=3)
        full = m.forward(x)
        np.testing.assert_array_equal(col.data, full.data[:, 3])

    def test_discoverer_class_id_required_per_class(self):
        m = tiny_model(HEAD_SIGMOID_PER_CLASS)
        with pytest.raises(ValueError):
            discoverer_forward(m, np.ones((1, 12), dtype=np.float32))

    def test_discoverer_global_ignores_class(self):
        m = tiny_model(HEAD_SIGMOID_GLOBAL)
        x = np.ones((4, 12), dtype=np.float32)
        out = discoverer_forward(m, x)
        assert out.data.shape == (4,)

    def test_forward_frozen_detached(self):
        m = tiny_model(HEAD_SOFTMAX_CLASSES)
        out = m.forward_frozen(np.ones((2, 12), dtype=np.float32))
        assert not out.requires_grad


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = tiny_model(HEAD_SOFTMAX_CLASSES, seed=4)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        loaded = load_checkpoint(path)
        assert loaded.head_kind == m.head_kind
        for a, b in zip(m.params, loaded.params):
            np.testing.assert_array_equal(a.data.astype(np.float32), b.data)

    def test_round_trip_preserves_predictions(self, tmp_path):
        m = tiny_model(HEAD_SIGMOID_PER_CLASS, seed=4)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        loaded = load_checkpoint(path)
        x = np.random.default_rng(1).random((5, 12)).astype(np.float32)
        np.testing.assert_allclose(loaded.forward_frozen(x).data,
                                   m.forward_frozen(x).data, atol=1e-7)

    def test_corrupt_rejected(self, tmp_path):
        m = tiny_model(HEAD_SOFTMAX_CLASSES)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        blob = path.read_bytes()
        for name, bad in (("magic", b"NOPE" + blob[4:]),
                          ("version", blob[:4] + b"\xff\xff\xff\xff"
                           + blob[8:]),
                          ("truncated", blob[:-3]),
                          ("trailing", blob + b"\x00")):
            bad_path = tmp_path / f"bad_{name}.ckpt"
            bad_path.write_bytes(bad)
            with pytest.raises(CheckpointError):
                load_checkpoint(bad_path)

    def test_default_input_dim_constant(self):
        m = Mlp(HEAD_SOFTMAX_CLASSES, rng=np.random.default_rng(0))
        assert m.weights[0].data.shape == (mlp.INPUT_DIM, mlp.HIDDEN_DIM)
        assert mlp.INPUT_DIM == 3 * 28 * 28
