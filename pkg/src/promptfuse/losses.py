"""Contrastive, classification and total training objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import ConfigError, DegenerateInputError, VocabularyError
from .tensor import Tensor


@dataclass
class LossReport:
    contrastive: float
    classification: float

    @property
    def total(self) -> float:
        return self.contrastive + self.classification


def interleave_pairs(mask_tokens: Tensor, label_tokens: Tensor) -> Tensor:
    """Order N ([MASK], label) token pairs as [m1, l1, m2, l2, ...] (2N x d)."""
    n = mask_tokens.rows
    stacked = tt.concat_rows([mask_tokens, label_tokens])
    idx = np.empty(2 * n, dtype=np.int64)
    idx[0::2] = np.arange(n)
    idx[1::2] = np.arange(n) + n
    return tt.gather_rows(stacked, idx)


def nt_xent(tokens: Tensor, tau: float) -> Tensor:
    """NT-Xent over 2N tokens ordered pairwise ([m1, l1, m2, l2, ...]).

    Per anchor i with partner j: l_ij = -log softmax over all 2N-1 others of
    cos(z_i, z_k)/tau evaluated at k=j; returns the mean of the 2N ordered
    terms, which is non-negative and minimized when pairs align.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    if tokens.rows % 2 or tokens.rows < 2:
        raise ConfigError(f"need 2N token rows, got {tokens.rows}")
    norms = tt.row_norm(tokens)
    if (norms.data <= 0).any():
        raise DegenerateInputError("zero-norm token in contrastive batch")
    unit = tokens / norms
    sims = (unit @ tt.transpose(unit)) * (1.0 / tau)

    n2 = tokens.rows
    partner = np.arange(n2) ^ 1
    pos = tt.row_sum(sims * np.eye(n2, dtype=tokens.data.dtype)[partner])
    denom = tt.logsumexp_rows(sims, mask=~np.eye(n2, dtype=bool))
    return tt.mean_all(denom - pos)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log softmax probability of the true labels."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != logits.rows:
        raise ConfigError(f"{labels.shape[0]} labels for {logits.rows} logit rows")
    if (labels < 0).any() or (labels >= logits.cols).any():
        raise VocabularyError(f"label outside [0, {logits.cols})")
    onehot = np.zeros(logits.shape, dtype=logits.data.dtype)
    onehot[np.arange(logits.rows), labels] = 1.0
    true_logit = tt.row_sum(logits * onehot)
    return tt.mean_all(tt.logsumexp_rows(logits) - true_logit)


def cls_loss(pooled: Tensor, labels: np.ndarray, classifier) -> Tensor:
    """Cross-entropy of the linear classifier on pooled features."""
    return cross_entropy(classifier.apply(pooled), labels)


def total_loss(contrastive: Tensor, classification: Tensor) -> Tensor:
    """Unweighted sum of the two objectives."""
    return contrastive + classification
