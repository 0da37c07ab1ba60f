"""Attention, layer-norm and feed-forward building blocks."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as tt
from .errors import ConfigError
from .tensor import Param, Tensor


class LayerNorm:
    def __init__(self, dim: int, name: str, dtype=tt.DEFAULT_DTYPE):
        self.gamma = Param(np.ones((1, dim), dtype=dtype), f"{name}.gamma")
        self.beta = Param(np.zeros((1, dim), dtype=dtype), f"{name}.beta")

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]

    def apply(self, x: Tensor) -> Tensor:
        return tt.layer_norm_rows(x, self.gamma, self.beta)


class FeedForward:
    """dim -> mult*dim -> dim position-wise MLP."""

    def __init__(self, dim: int, mult: int, name: str, rng: np.random.Generator,
                 dtype=tt.DEFAULT_DTYPE):
        hidden = mult * dim
        self.w1 = Param(tt.init_uniform(rng, dim, hidden, fan_in=dim, dtype=dtype), f"{name}.w1")
        self.b1 = Param(np.zeros((1, hidden), dtype=dtype), f"{name}.b1")
        self.w2 = Param(tt.init_uniform(rng, hidden, dim, fan_in=hidden, dtype=dtype), f"{name}.w2")
        self.b2 = Param(np.zeros((1, dim), dtype=dtype), f"{name}.b2")

    def params(self) -> list[Param]:
        return [self.w1, self.b1, self.w2, self.b2]

    def apply(self, x: Tensor) -> Tensor:
        return tt.gelu(x @ self.w1 + self.b1) @ self.w2 + self.b2


class MultiHeadAttention:
    """Multi-head scaled dot-product attention over stacked blocks.

    Queries/keys/values may come from different sources (cross-modality) or
    the same one (self-attention). `key_mask` rows mark which key positions
    each block may attend to; masked keys get weight exactly zero.
    """

    def __init__(self, dim: int, heads: int, name: str, rng: np.random.Generator,
                 dtype=tt.DEFAULT_DTYPE):
        if dim % heads:
            raise ConfigError(f"width {dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Param(tt.init_uniform(rng, dim, dim, fan_in=dim, dtype=dtype), f"{name}.wq")
        self.wk = Param(tt.init_uniform(rng, dim, dim, fan_in=dim, dtype=dtype), f"{name}.wk")
        self.wv = Param(tt.init_uniform(rng, dim, dim, fan_in=dim, dtype=dtype), f"{name}.wv")
        self.wo = Param(tt.init_uniform(rng, dim, dim, fan_in=dim, dtype=dtype), f"{name}.wo")

    def params(self) -> list[Param]:
        return [self.wq, self.wk, self.wv, self.wo]

    def apply(self, queries: Tensor, keys: Tensor, values: Tensor, blocks: int = 1,
              key_mask: np.ndarray | None = None) -> Tensor:
        q_rows = queries.rows // blocks
        q_all = queries @ self.wq
        k_all = keys @ self.wk
        v_all = values @ self.wv
        mask = None
        if key_mask is not None:
            # (B, S_k) validity -> one mask row per stacked query row
            mask = np.repeat(np.asarray(key_mask, dtype=bool), q_rows, axis=0)
        scale = 1.0 / math.sqrt(self.head_dim)
        head_outs = []
        for h in range(self.heads):
            j0, j1 = h * self.head_dim, (h + 1) * self.head_dim
            scores = tt.block_matmul(tt.slice_cols(q_all, j0, j1),
                                     tt.slice_cols(k_all, j0, j1),
                                     blocks, transpose_b=True) * scale
            weights = tt.softmax_rows(scores, mask=mask)
            head_outs.append(tt.block_matmul(weights, tt.slice_cols(v_all, j0, j1), blocks))
        return tt.concat_cols(head_outs) @ self.wo

    def attention_weights(self, queries: Tensor, keys: Tensor, blocks: int = 1,
                          key_mask: np.ndarray | None = None) -> list[Tensor]:
        """Per-head softmax weight matrices (diagnostics and tests)."""
        q_all = queries @ self.wq
        k_all = keys @ self.wk
        mask = None
        if key_mask is not None:
            mask = np.repeat(np.asarray(key_mask, dtype=bool), queries.rows // blocks, axis=0)
        scale = 1.0 / math.sqrt(self.head_dim)
        out = []
        for h in range(self.heads):
            j0, j1 = h * self.head_dim, (h + 1) * self.head_dim
            scores = tt.block_matmul(tt.slice_cols(q_all, j0, j1),
                                     tt.slice_cols(k_all, j0, j1),
                                     blocks, transpose_b=True) * scale
            out.append(tt.softmax_rows(scores, mask=mask))
        return out
