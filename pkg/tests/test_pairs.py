import numpy as np
import pytest

from promptfuse.data import LABEL_ID_BASE, MASK_ID
from promptfuse.errors import ConfigError, ShapeError, VocabularyError
from promptfuse.pairs import EmbeddingTable, SequenceAssembler, handcraft_phrase_ids
from promptfuse.tensor import Tensor

F64 = np.float64


@pytest.fixture
def table(rng):
    return EmbeddingTable(vocab_size=20, dim=6, num_labels=4, rng=rng, dtype=F64)


@pytest.fixture
def assembler(table, rng):
    return SequenceAssembler(table, text_len=4, prompt_len=3, rng=rng, dtype=F64)


class TestEmbeddingTable:
    def test_lookup_matches_indexwise_oracle(self, table, rng):
        ids = rng.integers(0, 20, size=9)
        out = table.lookup(ids)
        np.testing.assert_array_equal(out.data, table.table.data[ids])

    def test_out_of_vocab_rejected(self, table):
        with pytest.raises(VocabularyError):
            table.lookup(np.array([25]))

    def test_label_embedding_is_reserved_row(self, table):
        np.testing.assert_array_equal(table.label_embedding(0).data,
                                      table.table.data[LABEL_ID_BASE][None, :])
        np.testing.assert_array_equal(table.label_embedding(3).data,
                                      table.table.data[LABEL_ID_BASE + 3][None, :])

    def test_label_out_of_range(self, table):
        with pytest.raises(VocabularyError):
            table.label_embedding(4)
        with pytest.raises(VocabularyError):
            table.label_embedding(-1)

    def test_multiword_phrase_is_row_mean(self, table):
        ids = np.array([5, 9])
        out = table.phrase_embedding(ids)
        expected = table.table.data[ids].mean(axis=0, keepdims=True)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_vocab_capacity_guard(self, rng):
        with pytest.raises(ConfigError):
            EmbeddingTable(vocab_size=5, dim=4, num_labels=4, rng=rng)


class TestEmbedText:
    def test_single_token_rows(self, assembler, table):
        ids = np.array([5, 0, 0, 0], dtype=np.int32)
        emb, mask = assembler.embed_text(ids, true_len=1)
        assert emb.shape == (5, 6)
        np.testing.assert_array_equal(emb.data[0], assembler.cls.data[0])
        np.testing.assert_array_equal(emb.data[1], table.table.data[5])
        assert mask.tolist() == [True, True, False, False, False]

    def test_padding_positions_masked(self, assembler):
        ids = np.array([7, 8, 0, 0], dtype=np.int32)
        _, mask = assembler.embed_text(ids, true_len=2)
        assert mask.tolist() == [True, True, True, False, False]

    def test_gather_matches_oracle(self, assembler, table, rng):
        ids = rng.integers(2, 20, size=4).astype(np.int32)
        emb, _ = assembler.embed_text(ids, true_len=4)
        np.testing.assert_array_equal(emb.data[1:], table.table.data[ids])

    def test_batch_matches_single(self, assembler, rng):
        ids = rng.integers(0, 20, size=(3, 4)).astype(np.int32)
        lens = np.array([4, 2, 3])
        emb, mask = assembler.embed_text_batch(ids, lens)
        for i in range(3):
            single, smask = assembler.embed_text(ids[i], int(lens[i]))
            np.testing.assert_array_equal(emb.data[5 * i:5 * (i + 1)], single.data)
            np.testing.assert_array_equal(mask[i], smask)


class TestBuildPair:
    def _pair(self, assembler, rng, with_prompt=True, label=2):
        ids = rng.integers(2, 20, size=4).astype(np.int32)
        text_emb, mask = assembler.embed_text(ids, true_len=3)
        prompt = Tensor(rng.standard_normal((3, 6)), dtype=F64) if with_prompt else None
        return assembler.build_pair(text_emb, prompt, label, mask)

    def test_full_length_arithmetic(self, assembler, rng):
        z, z_tilde = self._pair(assembler, rng)
        assert z.embeddings.rows == 4 + 1 + 3 + 1
        assert z_tilde.embeddings.rows == 9
        assert z.special_pos == 8

    def test_pair_difference_only_at_special(self, assembler, rng):
        z, z_tilde = self._pair(assembler, rng)
        diff = np.abs(z.embeddings.data - z_tilde.embeddings.data)
        assert diff[:z.special_pos].max() == 0.0
        assert diff[z.special_pos].max() > 0.0

    def test_special_rows_are_mask_and_label(self, assembler, table, rng):
        z, z_tilde = self._pair(assembler, rng, label=1)
        pos_row = assembler.positions.data[z.special_pos]
        np.testing.assert_allclose(
            z.embeddings.data[z.special_pos],
            table.table.data[MASK_ID] + pos_row, atol=1e-12)
        np.testing.assert_allclose(
            z_tilde.embeddings.data[z.special_pos],
            table.table.data[LABEL_ID_BASE + 1] + pos_row, atol=1e-12)

    def test_prompt_ablated_length(self, assembler, rng):
        z, z_tilde = self._pair(assembler, rng, with_prompt=False)
        assert z.embeddings.rows == 4 + 2
        assert z_tilde.embeddings.rows == 6
        assert z.special_pos == 5

    def test_prompt_occupies_middle_slots(self, assembler, rng):
        ids = rng.integers(2, 20, size=4).astype(np.int32)
        text_emb, mask = assembler.embed_text(ids, true_len=4)
        prompt_rows = rng.standard_normal((3, 6))
        z, _ = assembler.build_pair(text_emb, Tensor(prompt_rows, dtype=F64), 0, mask)
        pos = assembler.positions.data[5:8]
        np.testing.assert_allclose(z.embeddings.data[5:8], prompt_rows + pos, atol=1e-12)

    def test_width_mismatch_rejected(self, assembler, rng):
        ids = rng.integers(2, 20, size=4).astype(np.int32)
        text_emb, mask = assembler.embed_text(ids, true_len=4)
        with pytest.raises(ShapeError):
            assembler.build_pair(text_emb, Tensor(np.zeros((3, 5)), dtype=F64), 0, mask)

    def test_label_bounds(self, assembler, rng):
        ids = rng.integers(2, 20, size=4).astype(np.int32)
        text_emb, mask = assembler.embed_text(ids, true_len=4)
        with pytest.raises(VocabularyError):
            assembler.build_pair(text_emb, None, 4, mask)

    def test_randomized_pair_invariants(self, assembler, rng):
        for _ in range(50):
            with_prompt = rng.random() < 0.5
            z, z_tilde = self._pair(assembler, rng, with_prompt=with_prompt,
                                    label=int(rng.integers(0, 4)))
            expected = 9 if with_prompt else 6
            assert z.embeddings.rows == expected == z_tilde.embeddings.rows
            off_special = np.delete(np.arange(expected), z.special_pos)
            np.testing.assert_array_equal(z.embeddings.data[off_special],
                                          z_tilde.embeddings.data[off_special])


class TestHandcraft:
    def test_phrases_distinct_and_sized(self):
        one = handcraft_phrase_ids(4, 3, 1, vocab_size=32)
        two = handcraft_phrase_ids(4, 3, 2, vocab_size=32)
        assert len(one) == len(two) == 3
        assert set(one).isdisjoint(two)
        assert one.min() >= LABEL_ID_BASE + 4

    def test_vocab_too_small(self):
        with pytest.raises(ConfigError):
            handcraft_phrase_ids(4, 3, 2, vocab_size=10)
