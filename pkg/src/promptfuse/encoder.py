"""Shared transformer encoder with a bounded multimodal adaptation gate.

Both branches run the same self-attention blocks over their token sequence.
The normal branch additionally receives a nonverbal displacement after the
gate block: pooled aligned video/audio features are projected into the token
space and added to every token, with the shift norm capped at beta times the
token norm. The layer norm at the insertion point is shared by both branches
so that a zero displacement makes them coincide.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .errors import ConfigError, DegenerateInputError
from .layers import FeedForward, LayerNorm, MultiHeadAttention
from .pairs import BatchSequences
from .tensor import Param, Tensor

GATE_EPS = 1e-8


class EncoderBlock:
    def __init__(self, dim: int, heads: int, name: str, rng: np.random.Generator,
                 ffn_mult: int = 4, dtype=tt.DEFAULT_DTYPE):
        self.attn = MultiHeadAttention(dim, heads, f"{name}.attn", rng, dtype=dtype)
        self.norm1 = LayerNorm(dim, f"{name}.norm1", dtype=dtype)
        self.ffn = FeedForward(dim, ffn_mult, f"{name}.ffn", rng, dtype=dtype)
        self.norm2 = LayerNorm(dim, f"{name}.norm2", dtype=dtype)

    def params(self) -> list[Param]:
        return (self.attn.params() + self.norm1.params()
                + self.ffn.params() + self.norm2.params())

    def apply(self, x: Tensor, blocks: int, key_mask: np.ndarray) -> Tensor:
        h = self.norm1.apply(x + self.attn.apply(x, x, x, blocks, key_mask))
        return self.norm2.apply(h + self.ffn.apply(h))


class AdaptationGate:
    """Norm-capped additive injection of pooled nonverbal features."""

    def __init__(self, width: int, token_dim: int, beta: float,
                 rng: np.random.Generator, dtype=tt.DEFAULT_DTYPE):
        if beta <= 0:
            raise ConfigError(f"gate beta must be positive, got {beta}")
        self.w_m = Param(tt.init_uniform(rng, 2 * width, token_dim, fan_in=2 * width,
                                         dtype=dtype), "gate.w_m")
        self.norm = LayerNorm(token_dim, "gate.norm", dtype=dtype)
        self.beta = beta

    def params(self) -> list[Param]:
        return [self.w_m] + self.norm.params()

    def displacement(self, v_hat: Tensor, a_hat: Tensor, blocks: int) -> Tensor:
        """Project pooled aligned features into token space (blocks x d_t)."""
        rows = v_hat.rows // blocks
        pooled_v = tt.block_sum_rows(v_hat, blocks) * (1.0 / rows)
        pooled_a = tt.block_sum_rows(a_hat, blocks) * (1.0 / (a_hat.rows // blocks))
        return tt.concat_cols([pooled_v, pooled_a]) @ self.w_m

    def apply(self, tokens: Tensor, disp: Tensor, seq_len: int) -> Tensor:
        """LayerNorm(h + s*d) per token, with s = min(beta*|h|/(|d|+eps), 1)."""
        d_rep = tt.repeat_rows(disp, seq_len)
        scale = tt.minimum(
            tt.div(tt.row_norm(tokens) * self.beta, tt.row_norm(d_rep) + GATE_EPS), 1.0)
        return self.norm.apply(tokens + scale * d_rep)

    def apply_token(self, token: Tensor, v_hat: Tensor, a_hat: Tensor) -> Tensor:
        """Single-token form: gate one 1 x d_t row against one sample's features."""
        return self.apply(token, self.displacement(v_hat, a_hat, 1), token.rows)

    def normalize_only(self, tokens: Tensor) -> Tensor:
        """The shared insertion-point norm without any displacement."""
        return self.norm.apply(tokens)


class SharedEncoder:
    """E self-attention blocks shared by the normal and augmented branches."""

    def __init__(self, dim: int, heads: int, depth: int, gate: AdaptationGate,
                 gate_index: int, rng: np.random.Generator, dtype=tt.DEFAULT_DTYPE):
        if not 0 <= gate_index < depth:
            raise ConfigError(f"gate index {gate_index} outside [0, {depth})")
        self.blocks = [EncoderBlock(dim, heads, f"encoder.block{i}", rng, dtype=dtype)
                       for i in range(depth)]
        self.gate = gate
        self.gate_index = gate_index

    def params(self) -> list[Param]:
        out = []
        for b in self.blocks:
            out.extend(b.params())
        out.extend(self.gate.params())
        return out

    def encode_normal(self, seqs: BatchSequences, v_hat: Tensor, a_hat: Tensor) -> Tensor:
        """Refine with the nonverbal gate active; returns all refined tokens."""
        disp = self.gate.displacement(v_hat, a_hat, seqs.blocks)
        x = seqs.embeddings
        for i, block in enumerate(self.blocks):
            x = block.apply(x, seqs.blocks, seqs.attention_mask)
            if i == self.gate_index:
                x = self.gate.apply(x, disp, seqs.seq_len)
        return x

    def encode_augmented(self, seqs: BatchSequences) -> Tensor:
        """Refine without nonverbal input (shared norm still applies)."""
        x = seqs.embeddings
        for i, block in enumerate(self.blocks):
            x = block.apply(x, seqs.blocks, seqs.attention_mask)
            if i == self.gate_index:
                x = self.gate.normalize_only(x)
        return x


def special_tokens(refined: Tensor, seqs: BatchSequences) -> Tensor:
    """Rows at the special ([MASK]/label) position, one per sample."""
    idx = np.arange(seqs.blocks) * seqs.seq_len + seqs.special_pos
    return tt.gather_rows(refined, idx)


def mean_pool(tokens: Tensor, attention_mask: np.ndarray) -> Tensor:
    """Masked mean over valid positions; (B*S x d) + (B, S) -> (B x d)."""
    mask = np.asarray(attention_mask, dtype=bool)
    counts = mask.sum(axis=1, keepdims=True)
    if (counts == 0).any():
        raise DegenerateInputError("mean_pool over a fully masked sequence")
    blocks = mask.shape[0]
    kept = tokens * mask.reshape(-1, 1)
    return tt.block_sum_rows(kept, blocks) * (1.0 / counts)
