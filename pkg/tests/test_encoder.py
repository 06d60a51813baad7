import numpy as np
import pytest

from eventcl import encoder as E
from eventcl import numerics as N
from eventcl.errors import DimensionError, InputError
from eventcl.text import encode, pad_batch
from helpers import assert_grads_close, sampled_coordinate_fd


@pytest.fixture
def tiny_cfg(small_vocab):
    return E.EncoderConfig(
        vocab_size=len(small_vocab),
        hidden_dim=16,
        num_layers=2,
        num_heads=2,
        ffn_dim=24,
        max_positions=10,
        dropout_rate=0.1,
        seed=0,
    )


@pytest.fixture
def tiny_params(tiny_cfg):
    return E.init_params(tiny_cfg, np.random.default_rng(1), dtype=np.float64)


def _batch(small_vocab, texts, max_len):
    return pad_batch([encode(t, small_vocab) for t in texts], max_len)


class TestConfig:
    def test_heads_must_divide(self):
        with pytest.raises(InputError):
            E.EncoderConfig(vocab_size=10, hidden_dim=10, num_heads=4)


class TestForward:
    def test_minimal_sequence_shape(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, [""], 2)  # just [CLS] [SEP]
        out = E.forward(ids, mask, tiny_cfg, tiny_params, mode="eval")
        assert out.token_vectors.shape == (1, 2, 16)
        assert out.pooled.shape == (1, 16)

    def test_eval_determinism(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, ["military launch missile"], 6)
        a = E.forward(ids, mask, tiny_cfg, tiny_params, mode="eval")
        b = E.forward(ids, mask, tiny_cfg, tiny_params, mode="eval")
        np.testing.assert_array_equal(a.token_vectors.data, b.token_vectors.data)

    def test_pooling_identity(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, ["military launch missile", "army starts initiative"], 6)
        out = E.forward(ids, mask, tiny_cfg, tiny_params, mode="eval")
        np.testing.assert_array_equal(out.pooled.data, out.token_vectors.data[:, 0, :])

    def test_padding_invariance(self, small_vocab, tiny_cfg, tiny_params):
        text = "military launch missile"
        ids_a, mask_a = _batch(small_vocab, [text], 5)  # exact fit
        ids_b, mask_b = _batch(small_vocab, [text], 9)  # four pad columns
        a = E.forward(ids_a, mask_a, tiny_cfg, tiny_params, mode="eval")
        b = E.forward(ids_b, mask_b, tiny_cfg, tiny_params, mode="eval")
        np.testing.assert_allclose(b.token_vectors.data[:, :5, :], a.token_vectors.data, atol=1e-5)
        np.testing.assert_allclose(b.pooled.data, a.pooled.data, atol=1e-5)

    def test_train_mode_stochastic(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, ["military launch missile"], 6)
        rng = np.random.default_rng(3)
        a = E.forward(ids, mask, tiny_cfg, tiny_params, mode="train", rng=rng)
        b = E.forward(ids, mask, tiny_cfg, tiny_params, mode="train", rng=rng)
        assert np.any(a.pooled.data != b.pooled.data)

    def test_train_mode_needs_rng(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, ["military launch missile"], 6)
        with pytest.raises(InputError):
            E.forward(ids, mask, tiny_cfg, tiny_params, mode="train")

    def test_id_out_of_range(self, tiny_cfg, tiny_params):
        ids = np.array([[2, 99, 3]])
        mask = np.ones((1, 3))
        with pytest.raises(IndexError):
            E.forward(ids, mask, tiny_cfg, tiny_params)

    def test_too_long_sequence(self, small_vocab, tiny_cfg, tiny_params):
        ids = np.full((1, 11), 3, dtype=np.int64)
        with pytest.raises(DimensionError):
            E.forward(ids, np.ones((1, 11)), tiny_cfg, tiny_params)


class TestMlmHead:
    def test_zero_weights_give_uniform_softmax(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, ["military launch missile"], 6)
        out = E.forward(ids, mask, tiny_cfg, tiny_params, mode="eval")
        params = dict(tiny_params)
        params["mlm.w"] = N.Tensor(np.zeros_like(tiny_params["mlm.w"].data))
        params["mlm.b"] = N.Tensor(np.zeros_like(tiny_params["mlm.b"].data))
        logits = E.mlm_logits(out.token_vectors, [(0, 1), (0, 2)], params)
        probs = N.softmax_rows(logits).data
        np.testing.assert_allclose(probs, 1.0 / len(small_vocab), atol=1e-12)

    def test_single_position_shape(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, ["military launch missile"], 6)
        out = E.forward(ids, mask, tiny_cfg, tiny_params, mode="eval")
        logits = E.mlm_logits(out.token_vectors, [(0, 2)], tiny_params)
        assert logits.shape == (1, len(small_vocab))

    def test_position_out_of_range(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, ["military launch missile"], 6)
        out = E.forward(ids, mask, tiny_cfg, tiny_params, mode="eval")
        with pytest.raises(IndexError):
            E.mlm_logits(out.token_vectors, [(0, 99)], tiny_params)

    def test_projection_gradients_match_finite_differences(self, small_vocab, tiny_cfg, tiny_params):
        ids, mask = _batch(small_vocab, ["military launch missile"], 6)
        positions = [(0, 2)]
        targets = [int(ids[0, 2])]

        def loss_value():
            out = E.forward(ids, mask, tiny_cfg, tiny_params, mode="eval")
            logits = E.mlm_logits(out.token_vectors, positions, tiny_params)
            return N.cross_entropy_logits(logits, targets)

        loss = loss_value()
        loss.backward()
        head = {"mlm.w": tiny_params["mlm.w"], "mlm.b": tiny_params["mlm.b"]}
        worst = sampled_coordinate_fd(lambda: loss_value().item(), head, coords_per_param=8, h=1e-6, seed=5)
        assert worst <= 1e-3


class TestInit:
    def test_param_names_stable(self, tiny_cfg):
        params = E.init_params(tiny_cfg)
        assert "embed.tok" in params and "layer0.attn.wq" in params and "final_ln.gain" in params
        assert all(p.requires_grad for p in params.values())

    def test_seeded_init_reproducible(self, tiny_cfg):
        a = E.init_params(tiny_cfg, np.random.default_rng(9))
        b = E.init_params(tiny_cfg, np.random.default_rng(9))
        for name in a:
            np.testing.assert_array_equal(a[name].data, b[name].data)
