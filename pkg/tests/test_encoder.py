import numpy as np
import pytest

from actgen import numerics as nm
from actgen import vocab as V
from actgen.encoder import EncoderConfig, HistoryEncoder, join_history, scaled_attention
from actgen.numerics import NumericsError, Tensor
from actgen.vocab import Vocabulary


@pytest.fixture
def small_encoder():
    cfg = EncoderConfig(vocab_size=20, layers=2, model_dim=16, heads=2,
                        head_dim=8, ffn_dim=24, max_len=12)
    return HistoryEncoder(cfg, np.random.default_rng(0))


class TestEncodeHistory:
    def test_output_shapes(self, small_encoder):
        out = small_encoder.encode_ids([7, 8, 9])
        assert out.tokens.shape == (4, 16)  # pool token prepended
        assert out.pooled.shape == (1, 16)

    def test_minimal_input_is_pool_only(self, small_encoder):
        out = small_encoder.encode_ids([])
        assert out.tokens.shape == (1, 16)
        assert np.isfinite(out.pooled.data).all()

    def test_pooled_is_first_row(self, small_encoder):
        out = small_encoder.encode_ids([7, 8, 9, 10])
        np.testing.assert_array_equal(out.pooled.data[0], out.tokens.data[0])

    def test_token_order_changes_pooled(self, small_encoder):
        a = small_encoder.encode_ids([7, 8, 9]).pooled.data
        b = small_encoder.encode_ids([8, 7, 9]).pooled.data
        assert not np.array_equal(a, b)

    def test_overlong_input_truncates_oldest(self, small_encoder):
        long_ids = list(range(7, 7 + 13))  # 13 tokens, max_len 12 -> keep last 11
        out = small_encoder.encode_ids(long_ids)
        assert out.tokens.shape[0] == 12
        # identical to encoding just the newest 11 ids
        ref = small_encoder.encode_ids(long_ids[-11:])
        np.testing.assert_array_equal(out.tokens.data, ref.tokens.data)

    def test_deterministic_under_seed(self):
        def build():
            cfg = EncoderConfig(vocab_size=20, layers=1, model_dim=8, heads=2,
                                head_dim=4, ffn_dim=16, max_len=8)
            enc = HistoryEncoder(cfg, np.random.default_rng(3))
            return enc.encode_ids([7, 9, 11]).tokens.data

        np.testing.assert_array_equal(build(), build())

    def test_config_rejects_inconsistent_heads(self):
        with pytest.raises(ValueError):
            EncoderConfig(vocab_size=10, model_dim=64, heads=4, head_dim=10)


class TestScaledAttention:
    def test_single_row_is_value_row(self):
        rng = np.random.default_rng(1)
        q = Tensor(rng.normal(size=(1, 4)))
        v = Tensor(rng.normal(size=(1, 6)))
        out = scaled_attention(q, q, v)
        np.testing.assert_allclose(out.data, v.data, rtol=1e-15)

    def test_identical_keys_average_values(self):
        rng = np.random.default_rng(2)
        q = Tensor(rng.normal(size=(3, 4)))
        k = Tensor(np.tile(rng.normal(size=(1, 4)), (5, 1)))
        v = Tensor(rng.normal(size=(5, 6)))
        out = scaled_attention(q, k, v)
        np.testing.assert_allclose(out.data, np.tile(v.data.mean(axis=0), (3, 1)),
                                   rtol=1e-12)

    def test_fully_masked_row_rejected(self):
        rng = np.random.default_rng(3)
        q = Tensor(rng.normal(size=(2, 4)))
        v = Tensor(rng.normal(size=(2, 4)))
        mask = np.array([[True, True], [False, False]])
        with pytest.raises(NumericsError):
            scaled_attention(q, q, v, mask=mask)

    def test_width_mismatch_rejected(self):
        with pytest.raises(nm.ShapeError):
            scaled_attention(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 5))),
                             Tensor(np.zeros((2, 4))))


class TestJoinHistory:
    def test_markers_and_lowercase(self):
        toks = join_history([("user", "Book a Hotel"), ("system", "Done")])
        assert toks == ["[USR]", "book", "a", "hotel", "[SYS]", "done"]

    def test_budget_drops_oldest(self):
        toks = join_history([("user", "a b c"), ("system", "d e")], max_tokens=3)
        assert toks == ["[SYS]", "d", "e"]


class TestVocabulary:
    def test_reserved_ids(self):
        voc = Vocabulary(["hello", "world"])
        assert voc.id_of("[PAD]") == V.PAD
        assert voc.id_of("[POOL]") == V.POOL
        assert voc.id_of("hello") == 7
        assert voc.id_of("missing") == V.UNK

    def test_build_ranks_by_frequency(self):
        voc = Vocabulary.build([["b", "a", "b"], ["b", "a", "c"]], max_size=9)
        assert voc.tokens[7:] == ["b", "a"]  # c cut by the size limit

    def test_file_roundtrip(self, tmp_path):
        voc = Vocabulary.build([["x", "y", "x"]])
        voc.save(tmp_path / "vocab.txt")
        loaded = Vocabulary.load(tmp_path / "vocab.txt")
        assert loaded.tokens == voc.tokens

    def test_load_rejects_missing_reserved_header(self, tmp_path):
        (tmp_path / "bad.txt").write_text("foo\nbar\n")
        with pytest.raises(ValueError):
            Vocabulary.load(tmp_path / "bad.txt")
