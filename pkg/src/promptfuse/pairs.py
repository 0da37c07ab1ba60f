"""Normal/augmented sample pair construction.

A sample's token sequence is [CLS, text tokens, prompt tokens, special]:
the augmented sequence puts the ground-truth label word's embedding in the
special slot, the normal sequence puts the [MASK] embedding there, and the
two differ nowhere else. Label words live in the same embedding table as
ordinary text tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .data import LABEL_ID_BASE, MASK_ID
from .errors import ConfigError, ShapeError, VocabularyError
from .tensor import Param, Tensor

PROMPT_MODES = ("modality_aware", "handcraft_1", "handcraft_2", "mask")


class EmbeddingTable:
    """vocab_size x d_t lookup table with the reserved-id layout of data.py."""

    def __init__(self, vocab_size: int, dim: int, num_labels: int,
                 rng: np.random.Generator, dtype=tt.DEFAULT_DTYPE,
                 initial: np.ndarray | None = None):
        if LABEL_ID_BASE + num_labels >= vocab_size:
            raise ConfigError(f"vocab of {vocab_size} too small for {num_labels} label words")
        if initial is not None:
            if initial.shape != (vocab_size, dim):
                raise ShapeError(f"initial table shaped {initial.shape}, "
                                 f"expected ({vocab_size}, {dim})")
            values = initial.astype(dtype)
        else:
            values = tt.init_uniform(rng, vocab_size, dim, fan_in=dim, dtype=dtype)
        self.table = Param(values, "embed.table")
        self.vocab_size = vocab_size
        self.dim = dim
        self.num_labels = num_labels

    def params(self) -> list[Param]:
        return [self.table]

    def lookup(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise VocabularyError(
                f"token id {int(ids.max())} outside vocabulary of {self.vocab_size}")
        return tt.gather_rows(self.table, ids)

    def mask_embedding(self) -> Tensor:
        return self.lookup(np.array([MASK_ID]))

    def label_embedding(self, label_id: int) -> Tensor:
        """Embedding of a label word (1 x d_t)."""
        if not 0 <= label_id < self.num_labels:
            raise VocabularyError(f"label {label_id} outside [0, {self.num_labels})")
        return self.lookup(np.array([LABEL_ID_BASE + label_id]))

    def phrase_embedding(self, ids: np.ndarray) -> Tensor:
        """Mean of several word embeddings (multi-word label names)."""
        rows = self.lookup(ids)
        return tt.mul(tt.block_sum_rows(rows, 1), 1.0 / rows.rows)


@dataclass
class TokenSequence:
    """One assembled sequence: embeddings plus where the special token sits."""

    embeddings: Tensor            # (S x d_t)
    special_pos: int
    attention_mask: np.ndarray    # (S,) 1 = attendable


@dataclass
class BatchSequences:
    """B sequences stacked row-wise; all share length and special position."""

    embeddings: Tensor            # (B*S x d_t)
    seq_len: int
    blocks: int
    special_pos: int
    attention_mask: np.ndarray    # (B, S)


def handcraft_phrase_ids(num_labels: int, prompt_len: int, variant: int,
                         vocab_size: int) -> np.ndarray:
    """Fixed distractor-word ids standing in for a handcrafted phrase.

    Keeps the handcrafted prompt at the same positions and length as the
    learned one; variant selects which fixed phrase."""
    base = LABEL_ID_BASE + num_labels + (variant - 1) * prompt_len
    ids = base + np.arange(prompt_len)
    if ids.max() >= vocab_size:
        raise ConfigError(
            f"vocab of {vocab_size} has no room for handcraft phrase {variant}")
    return ids


class SequenceAssembler:
    """Builds (normal, augmented) sequence pairs from text, prompt and label."""

    def __init__(self, table: EmbeddingTable, text_len: int, prompt_len: int,
                 rng: np.random.Generator, dtype=tt.DEFAULT_DTYPE):
        self.table = table
        self.text_len = text_len          # tokens per sample, excluding CLS
        self.prompt_len = prompt_len
        self.full_len = text_len + 1 + prompt_len + 1
        self.cls = Param(tt.init_uniform(rng, 1, table.dim, fan_in=table.dim, dtype=dtype),
                         "embed.cls")
        self.positions = Param(
            tt.init_uniform(rng, self.full_len, table.dim, fan_in=table.dim, dtype=dtype),
            "embed.positions")

    def params(self) -> list[Param]:
        return self.table.params() + [self.cls, self.positions]

    def seq_len(self, with_prompt: bool) -> int:
        return self.full_len if with_prompt else self.text_len + 2

    def embed_text(self, ids: np.ndarray, true_len: int) -> tuple[Tensor, np.ndarray]:
        """CLS + token embeddings ((l_t+1) x d_t) and the text attention mask."""
        ids = np.asarray(ids)
        if ids.shape != (self.text_len,):
            raise ShapeError(f"expected {self.text_len} token ids, got shape {ids.shape}")
        emb = tt.concat_rows([self.cls, self.table.lookup(ids)])
        mask = np.zeros(self.text_len + 1, dtype=bool)
        mask[0] = True
        mask[1:1 + true_len] = True
        return emb, mask

    def embed_text_batch(self, ids: np.ndarray, lens: np.ndarray
                         ) -> tuple[Tensor, np.ndarray]:
        """Stacked CLS + token embeddings ((B*(l_t+1)) x d_t) plus (B, l_t+1) mask."""
        ids = np.asarray(ids)
        blocks = ids.shape[0]
        if ids.shape != (blocks, self.text_len):
            raise ShapeError(f"expected (B, {self.text_len}) token ids, got {ids.shape}")
        tok = self.table.lookup(ids.reshape(-1))
        pool = tt.concat_rows([tt.tile_rows(self.cls, blocks), tok])
        t_rows = self.text_len + 1
        idx = np.empty(blocks * t_rows, dtype=np.int64)
        for b in range(blocks):
            idx[b * t_rows] = b
            idx[b * t_rows + 1:(b + 1) * t_rows] = blocks + b * self.text_len \
                + np.arange(self.text_len)
        emb = tt.gather_rows(pool, idx)
        mask = np.zeros((blocks, t_rows), dtype=bool)
        mask[:, 0] = True
        mask[:, 1:] = np.arange(self.text_len)[None, :] < np.asarray(lens)[:, None]
        return emb, mask

    def build_pair(self, text_emb: Tensor, prompt: Tensor | None, label_id: int,
                   text_mask: np.ndarray) -> tuple[TokenSequence, TokenSequence]:
        """Assemble Z (special = [MASK]) and Z-tilde (special = label word).

        `prompt=None` drops the prompt slots entirely (prompt-ablated mode)."""
        z = self.build_normal_batch(text_emb, prompt, text_mask[None, :])
        z_tilde = self.build_augmented_batch(
            text_emb, prompt, np.array([label_id]), text_mask[None, :])
        seq = TokenSequence(z.embeddings, z.special_pos, z.attention_mask[0])
        seq_aug = TokenSequence(z_tilde.embeddings, z_tilde.special_pos,
                                z_tilde.attention_mask[0])
        return seq, seq_aug

    def build_normal_batch(self, text_emb: Tensor, prompt: Tensor | None,
                           text_mask: np.ndarray) -> BatchSequences:
        blocks = text_mask.shape[0]
        self._check_widths(text_emb, prompt)
        special = tt.tile_rows(self.table.mask_embedding(), blocks)
        return self._assemble(text_emb, prompt, special, text_mask, blocks)

    def build_augmented_batch(self, text_emb: Tensor, prompt: Tensor | None,
                              labels: np.ndarray, text_mask: np.ndarray) -> BatchSequences:
        blocks = text_mask.shape[0]
        self._check_widths(text_emb, prompt)
        label_ids = np.asarray(labels, dtype=np.int64)
        if label_ids.shape != (blocks,):
            raise ShapeError(f"expected {blocks} labels, got {label_ids.shape}")
        if (label_ids < 0).any() or (label_ids >= self.table.num_labels).any():
            raise VocabularyError(f"label outside [0, {self.table.num_labels})")
        special = self.table.lookup(LABEL_ID_BASE + label_ids)
        return self._assemble(text_emb, prompt, special, text_mask, blocks)

    def _check_widths(self, text_emb: Tensor, prompt: Tensor | None) -> None:
        if prompt is not None and prompt.cols != self.table.dim:
            raise ShapeError(f"prompt width {prompt.cols} != embedding width {self.table.dim}")
        if text_emb.cols != self.table.dim:
            raise ShapeError(f"text width {text_emb.cols} != embedding width {self.table.dim}")

    def _assemble(self, text_emb: Tensor, prompt: Tensor | None, special: Tensor,
                  text_mask: np.ndarray, blocks: int) -> BatchSequences:
        t_rows = self.text_len + 1
        with_prompt = prompt is not None
        seq_len = self.seq_len(with_prompt)
        parts = [text_emb, prompt, special] if with_prompt else [text_emb, special]
        pool = tt.concat_rows(parts)

        # permutation interleaving each sample's text / prompt / special rows
        idx = np.empty(blocks * seq_len, dtype=np.int64)
        p_rows = self.prompt_len if with_prompt else 0
        special_base = blocks * (t_rows + p_rows)
        for b in range(blocks):
            at = b * seq_len
            idx[at:at + t_rows] = b * t_rows + np.arange(t_rows)
            if with_prompt:
                idx[at + t_rows:at + t_rows + p_rows] = \
                    blocks * t_rows + b * p_rows + np.arange(p_rows)
            idx[at + seq_len - 1] = special_base + b
        stacked = tt.gather_rows(pool, idx)

        pos = self.positions if with_prompt else tt.slice_rows(self.positions, 0, seq_len)
        stacked = stacked + tt.tile_rows(pos, blocks)

        mask = np.ones((blocks, seq_len), dtype=bool)
        mask[:, :t_rows] = text_mask
        return BatchSequences(stacked, seq_len, blocks, seq_len - 1, mask)
