"""Prompt generation from aligned modality features.

The aligned token path queries the aligned video features (keys) against the
aligned audio features (values) through multi-head cross-modality attention;
the result runs through Add&Norm, a feed-forward layer and another Add&Norm,
then a width projection into the text embedding space. The output rows are
the prompt tokens that get spliced into the token sequence.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .alignment import AlignedTriple
from .layers import FeedForward, LayerNorm, MultiHeadAttention
from .tensor import Param, Tensor


class PromptGenerator:
    def __init__(self, width: int, heads: int, out_dim: int, rng: np.random.Generator,
                 swap_roles: bool = False, ffn_mult: int = 4, dtype=tt.DEFAULT_DTYPE):
        self.attn = MultiHeadAttention(width, heads, "prompt.attn", rng, dtype=dtype)
        self.norm1 = LayerNorm(width, "prompt.norm1", dtype=dtype)
        self.ffn = FeedForward(width, ffn_mult, "prompt.ffn", rng, dtype=dtype)
        self.norm2 = LayerNorm(width, "prompt.norm2", dtype=dtype)
        self.out_w = Param(tt.init_uniform(rng, width, out_dim, fan_in=width, dtype=dtype),
                           "prompt.out_w")
        self.out_b = Param(np.zeros((1, out_dim), dtype=dtype), "prompt.out_b")
        self.swap_roles = swap_roles

    def params(self) -> list[Param]:
        return (self.attn.params() + self.norm1.params() + self.ffn.params()
                + self.norm2.params() + [self.out_w, self.out_b])

    def fuse(self, aligned: AlignedTriple, blocks: int = 1) -> Tensor:
        """Cross-modality attention output before the residual stack (L x width)."""
        key, value = aligned.v_hat, aligned.a_hat
        if self.swap_roles:
            key, value = value, key
        return self.attn.apply(aligned.t_hat, key, value, blocks=blocks)

    def generate(self, aligned: AlignedTriple, blocks: int = 1) -> Tensor:
        """Prompt token rows in the text embedding space ((B*L) x out_dim)."""
        fused = self.fuse(aligned, blocks)
        y1 = self.norm1.apply(aligned.t_hat + fused)
        y2 = self.norm2.apply(y1 + self.ffn.apply(y1))
        return y2 @ self.out_w + self.out_b
