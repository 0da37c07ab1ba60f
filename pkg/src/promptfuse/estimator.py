"""Scikit-learn style front end for the fusion classifier."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .config import TrainConfig
from .data import (LABEL_ID_BASE, Dataset, DatasetManifest, ModalityBundle,
                   TEST, TRAIN, VAL)
from .errors import ConfigError
from .trainer import evaluate_model, predict, train


def check_bundles(bundles, manifest: DatasetManifest) -> None:
    """Validate that every bundle matches the manifest geometry."""
    for i, b in enumerate(bundles):
        if not isinstance(b, ModalityBundle):
            raise ConfigError(f"sample {i} is {type(b).__name__}, not a ModalityBundle")
        if b.text_ids.shape != (manifest.l_t,):
            raise ConfigError(f"sample {i}: text shaped {b.text_ids.shape}, "
                              f"expected ({manifest.l_t},)")
        if b.video_feats.shape != (manifest.l_v, manifest.d_v):
            raise ConfigError(f"sample {i}: video shaped {b.video_feats.shape}")
        if b.audio_feats.shape != (manifest.l_a, manifest.d_a):
            raise ConfigError(f"sample {i}: audio shaped {b.audio_feats.shape}")


def infer_manifest(bundles, embed_dim: int = 32,
                   num_labels: int | None = None) -> DatasetManifest:
    """Best-effort manifest from a bag of bundles (embedding width is a knob,
    not derivable from token ids)."""
    if not bundles:
        raise ConfigError("cannot infer a manifest from zero samples")
    first = bundles[0]
    labels = max(int(b.label) for b in bundles) + 1
    if num_labels is not None:
        labels = max(labels, num_labels)
    labels = max(labels, 2)
    max_id = max(int(np.max(b.text_ids)) for b in bundles)
    vocab = max(max_id + 1, LABEL_ID_BASE + labels + 1)
    return DatasetManifest(
        split_sizes={TRAIN: len(bundles), VAL: 0, TEST: 0},
        num_labels=labels,
        text_vocab_size=vocab,
        d_t=embed_dim,
        d_v=first.video_feats.shape[1], d_a=first.audio_feats.shape[1],
        l_t=first.text_ids.shape[0], l_v=first.video_feats.shape[0],
        l_a=first.audio_feats.shape[0],
    )


class PromptFusionClassifier(BaseEstimator):
    """Multimodal intent classifier with a fit/predict surface.

    `fit` accepts either a `Dataset` (its train/val splits drive training and
    model selection) or a plain sequence of `ModalityBundle`s. Hyperparameters
    mirror `TrainConfig`; `get_params`/`set_params` come from BaseEstimator so
    the estimator clones and grid-searches like any other.
    """

    def __init__(self, batch_size=16, eval_batch_size=8, epochs=50, patience=10,
                 learning_rate=1e-3, weight_decay=1e-2, beta1=0.9, beta2=0.999,
                 seed=0, tau=0.07, alpha_tv=1.0, alpha_ta=1.0, prompt_len=3,
                 width=24, token_dim=0, encoder_blocks=2, heads=4, gate_beta=1.0,
                 gate_index=0, sbma_on=True, map_on=True, tcl_on=True,
                 prompt_mode="modality_aware", stop_grad_label=False,
                 pool_prompt=True, swap_roles=False, zero_nonverbal=False,
                 pretrained_embeddings=False, embed_dim=32):
        self.batch_size = batch_size
        self.eval_batch_size = eval_batch_size
        self.epochs = epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.seed = seed
        self.tau = tau
        self.alpha_tv = alpha_tv
        self.alpha_ta = alpha_ta
        self.prompt_len = prompt_len
        self.width = width
        self.token_dim = token_dim
        self.encoder_blocks = encoder_blocks
        self.heads = heads
        self.gate_beta = gate_beta
        self.gate_index = gate_index
        self.sbma_on = sbma_on
        self.map_on = map_on
        self.tcl_on = tcl_on
        self.prompt_mode = prompt_mode
        self.stop_grad_label = stop_grad_label
        self.pool_prompt = pool_prompt
        self.swap_roles = swap_roles
        self.zero_nonverbal = zero_nonverbal
        self.pretrained_embeddings = pretrained_embeddings
        self.embed_dim = embed_dim

    def _config(self) -> TrainConfig:
        params = {k: v for k, v in self.get_params().items() if k != "embed_dim"}
        cfg = TrainConfig(**params)
        cfg.validate()
        return cfg

    def fit(self, X, y=None, validation=None):
        """Train on X; returns self.

        X may be a Dataset or a sequence of bundles. With bundles, `y`
        optionally overrides the bundled labels and `validation` supplies a
        held-out list for model selection (defaults to the training data).
        """
        if isinstance(X, Dataset):
            dataset = X
        else:
            bundles = list(X)
            if y is not None:
                y = np.asarray(y, dtype=np.int64)
                if y.shape != (len(bundles),):
                    raise ConfigError(f"y shaped {y.shape} for {len(bundles)} samples")
                bundles = [ModalityBundle(b.text_ids, b.video_feats, b.audio_feats,
                                          b.true_lens, int(label))
                           for b, label in zip(bundles, y)]
            manifest = infer_manifest(bundles, embed_dim=self.embed_dim)
            check_bundles(bundles, manifest)
            val = list(validation) if validation is not None else bundles
            manifest.split_sizes = {TRAIN: len(bundles), VAL: len(val), TEST: 0}
            dataset = Dataset(manifest, {TRAIN: bundles, VAL: val, TEST: []})

        checkpoint, history = train(self._config(), dataset)
        self.checkpoint_ = checkpoint
        self.history_ = history
        self.model_ = checkpoint.to_model()
        self.classes_ = np.arange(dataset.manifest.num_labels)
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise ConfigError("estimator is not fitted; call fit first")

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        bundles = X.splits[TEST] if isinstance(X, Dataset) else list(X)
        check_bundles(bundles, self.model_.manifest)
        return predict(self.model_, bundles, self.eval_batch_size)

    def predict_proba(self, X) -> np.ndarray:
        self._require_fitted()
        bundles = X.splits[TEST] if isinstance(X, Dataset) else list(X)
        check_bundles(bundles, self.model_.manifest)
        out = []
        for start in range(0, len(bundles), self.eval_batch_size):
            logits = self.model_.predict_logits(bundles[start:start + self.eval_batch_size])
            shifted = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            out.append(e / e.sum(axis=1, keepdims=True))
        return np.concatenate(out) if out else np.zeros((0, len(self.classes_)))

    def score(self, X, y=None) -> float:
        """Mean accuracy on the given bundles (labels from y or the bundles)."""
        self._require_fitted()
        bundles = X.splits[TEST] if isinstance(X, Dataset) else list(X)
        if y is None:
            return evaluate_model(self.model_, bundles, self.eval_batch_size).acc
        preds = self.predict(bundles)
        y = np.asarray(y, dtype=np.int64)
        return float((preds == y).mean())
