"""Similarity-based modality alignment.

Learnable tokens, video features and audio features are first standardized
to a common L x H space (soft length normalization followed by a two-layer
projection), then the nonverbal features are re-weighted by softmaxed
similarity to the token path and passed through a per-modality MLP. The
token path is carried through unchanged.

All ops exist in a per-sample form and a batched form operating on B
stacked blocks; both run through the same tape primitives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import DegenerateInputError, ShapeError
from .tensor import Param, Tensor

NORM_EPS = 1e-8


class TwoLayerMLP:
    """d_in -> d_hidden -> d_out with a smooth nonlinearity between."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, name: str,
                 rng: np.random.Generator, dtype=tt.DEFAULT_DTYPE):
        self.w1 = Param(tt.init_uniform(rng, d_in, d_hidden, fan_in=d_in, dtype=dtype), f"{name}.w1")
        self.b1 = Param(np.zeros((1, d_hidden), dtype=dtype), f"{name}.b1")
        self.w2 = Param(tt.init_uniform(rng, d_hidden, d_out, fan_in=d_hidden, dtype=dtype), f"{name}.w2")
        self.b2 = Param(np.zeros((1, d_out), dtype=dtype), f"{name}.b2")

    def params(self) -> list[Param]:
        return [self.w1, self.b1, self.w2, self.b2]

    def apply(self, x: Tensor) -> Tensor:
        return tt.gelu(x @ self.w1 + self.b1) @ self.w2 + self.b2


class SoftAligner:
    """Length normalization by learnable soft alignment.

    A linear map scores each source position against the L target slots;
    scores are transposed and row-softmaxed over valid source positions, so
    every output row is a convex combination of the input rows. Zero init
    starts at uniform attention over the valid positions.
    """

    def __init__(self, d_in: int, target_len: int, name: str, dtype=tt.DEFAULT_DTYPE):
        self.weight = Param(np.zeros((d_in, target_len), dtype=dtype), f"{name}.weight")
        self.target_len = target_len

    def params(self) -> list[Param]:
        return [self.weight]

    def apply(self, seq: Tensor, true_len: int) -> Tensor:
        """(l x d) -> (L x d); padded rows beyond `true_len` carry no weight."""
        if true_len < 1:
            raise DegenerateInputError("cannot length-normalize an empty sequence")
        if true_len > seq.rows:
            raise ShapeError(f"true length {true_len} exceeds {seq.rows} rows")
        weights = self.alignment_weights(seq, np.array([true_len]))
        return weights @ seq

    def alignment_weights(self, seq: Tensor, lens: np.ndarray) -> Tensor:
        """The (L x l) convex-combination matrix (stacked per block)."""
        blocks = lens.shape[0]
        src_len = seq.rows // blocks
        logits = tt.block_transpose(seq @ self.weight, blocks)
        valid = np.arange(src_len)[None, :] < lens[:, None]        # (B, l)
        mask = np.repeat(valid, self.target_len, axis=0)
        return tt.softmax_rows(logits, mask=mask)

    def apply_batch(self, stacked: Tensor, lens: np.ndarray) -> Tensor:
        """(B*l x d) -> (B*L x d) with per-block valid lengths."""
        if (lens < 1).any():
            raise DegenerateInputError("cannot length-normalize an empty sequence")
        weights = self.alignment_weights(stacked, lens)
        return tt.block_matmul(weights, stacked, blocks=lens.shape[0])


class ModalityStandardizer:
    """One modality's path to the shared L x H space: align, then project."""

    def __init__(self, d_in: int, target_len: int, width: int, name: str,
                 rng: np.random.Generator, dtype=tt.DEFAULT_DTYPE):
        self.aligner = SoftAligner(d_in, target_len, f"{name}.align", dtype=dtype)
        self.proj = TwoLayerMLP(d_in, width, width, f"{name}.proj", rng, dtype=dtype)

    def params(self) -> list[Param]:
        return self.aligner.params() + self.proj.params()

    def apply(self, seq: Tensor, true_len: int) -> Tensor:
        return self.proj.apply(self.aligner.apply(seq, true_len))

    def apply_batch(self, stacked: Tensor, lens: np.ndarray) -> Tensor:
        return self.proj.apply(self.aligner.apply_batch(stacked, lens))


def max_row_norm(x: Tensor, blocks: int = 1, eps: float = NORM_EPS) -> Tensor:
    """Largest row L2 norm per block, floored at eps (blocks x 1)."""
    return tt.maximum(tt.block_max(tt.row_norm(x), blocks), eps)


def similarity_matrix(t: Tensor, x: Tensor, alpha: float) -> Tensor:
    """alpha-scaled dot products of max-norm-normalized rows (L x L).

    Both matrices are divided by their single largest row norm (not per-row),
    so every entry is bounded by alpha in magnitude.
    """
    if t.shape != x.shape:
        raise ShapeError(f"similarity operands differ: {t.shape} vs {x.shape}")
    scale = tt.div(Tensor(np.array([[alpha]], dtype=t.dtype)),
                   max_row_norm(t) * max_row_norm(x))
    return (t @ tt.transpose(x)) * scale


def similarity_matrix_batch(t_stacked: Tensor, x_stacked: Tensor, blocks: int,
                            alpha: float) -> Tensor:
    """Per-block similarity matrices, stacked to (B*L x L)."""
    rows_per_block = t_stacked.rows // blocks
    scale = tt.div(Tensor(np.array([[alpha]], dtype=t_stacked.dtype)),
                   max_row_norm(t_stacked, blocks) * max_row_norm(x_stacked, blocks))
    sims = tt.block_matmul(t_stacked, x_stacked, blocks, transpose_b=True)
    return sims * tt.repeat_rows(scale, rows_per_block)


def align(sims: Tensor, x: Tensor, mlp: TwoLayerMLP, blocks: int = 1) -> Tensor:
    """MLP(softmax_rows(M) X): re-weight feature rows by softmaxed similarity."""
    weights = tt.softmax_rows(sims)
    mixed = weights @ x if blocks == 1 else tt.block_matmul(weights, x, blocks)
    return mlp.apply(mixed)


@dataclass
class AlignedTriple:
    """Standardized (t, v, a) and aligned (t_hat, v_hat, a_hat), all L x H.

    The token path is passed through: t_hat IS t (same tape node)."""

    t: Tensor
    v: Tensor
    a: Tensor
    t_hat: Tensor
    v_hat: Tensor
    a_hat: Tensor


class SimilarityAligner:
    """The full alignment stage over (learnable tokens, video, audio)."""

    def __init__(self, d_token: int, d_v: int, d_a: int, target_len: int, width: int,
                 alpha_tv: float, alpha_ta: float, rng: np.random.Generator,
                 dtype=tt.DEFAULT_DTYPE):
        self.token_path = ModalityStandardizer(d_token, target_len, width, "sbma.token", rng, dtype)
        self.video_path = ModalityStandardizer(d_v, target_len, width, "sbma.video", rng, dtype)
        self.audio_path = ModalityStandardizer(d_a, target_len, width, "sbma.audio", rng, dtype)
        self.video_mlp = TwoLayerMLP(width, width, width, "sbma.video_mlp", rng, dtype)
        self.audio_mlp = TwoLayerMLP(width, width, width, "sbma.audio_mlp", rng, dtype)
        self.alpha_tv = alpha_tv
        self.alpha_ta = alpha_ta
        self.target_len = target_len

    def params(self) -> list[Param]:
        out = []
        for part in (self.token_path, self.video_path, self.audio_path,
                     self.video_mlp, self.audio_mlp):
            out.extend(part.params())
        return out

    def standardize(self, tokens: Tensor, video: Tensor, audio: Tensor,
                    video_len: int, audio_len: int) -> tuple[Tensor, Tensor, Tensor]:
        t = self.token_path.apply(tokens, tokens.rows)
        v = self.video_path.apply(video, video_len)
        a = self.audio_path.apply(audio, audio_len)
        return t, v, a

    def run(self, tokens: Tensor, video: Tensor, audio: Tensor,
            video_len: int, audio_len: int, use_similarity: bool = True) -> AlignedTriple:
        """Per-sample alignment; `use_similarity=False` degrades to
        length-normalization-only (the no-SBMA ablation)."""
        t, v, a = self.standardize(tokens, video, audio, video_len, audio_len)
        if not use_similarity:
            return AlignedTriple(t, v, a, t, v, a)
        m_tv = similarity_matrix(t, v, self.alpha_tv)
        m_ta = similarity_matrix(t, a, self.alpha_ta)
        v_hat = align(m_tv, v, self.video_mlp)
        a_hat = align(m_ta, a, self.audio_mlp)
        return AlignedTriple(t, v, a, t, v_hat, a_hat)

    def run_batch(self, tokens: Tensor, video_stacked: Tensor, audio_stacked: Tensor,
                  video_lens: np.ndarray, audio_lens: np.ndarray,
                  use_similarity: bool = True) -> AlignedTriple:
        """Batched alignment; tokens are shared, nonverbal blocks are per sample."""
        blocks = video_lens.shape[0]
        t_one = self.token_path.apply(tokens, tokens.rows)
        t = tt.tile_rows(t_one, blocks)
        v = self.video_path.apply_batch(video_stacked, video_lens)
        a = self.audio_path.apply_batch(audio_stacked, audio_lens)
        if not use_similarity:
            return AlignedTriple(t, v, a, t, v, a)
        m_tv = similarity_matrix_batch(t, v, blocks, self.alpha_tv)
        m_ta = similarity_matrix_batch(t, a, blocks, self.alpha_ta)
        v_hat = align(m_tv, v, self.video_mlp, blocks)
        a_hat = align(m_ta, a, self.audio_mlp, blocks)
        return AlignedTriple(t, v, a, t, v_hat, a_hat)
