"""Full fusion model: alignment, prompt generation, pairing, encoding, heads.

The model is a pure function of its parameters given a batch of bundles;
the tape rebuilds per call. Batches are processed as stacked row blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .alignment import AlignedTriple, SimilarityAligner
from .config import TrainConfig
from .data import MASK_ID, DatasetManifest, ModalityBundle
from .encoder import AdaptationGate, SharedEncoder, mean_pool, special_tokens
from .errors import ConfigError
from .losses import LossReport, cross_entropy, interleave_pairs, nt_xent
from .pairs import EmbeddingTable, SequenceAssembler
from .prompt import PromptGenerator
from .tensor import Param, Tensor


class LinearClassifier:
    def __init__(self, dim: int, num_labels: int, rng: np.random.Generator,
                 dtype=tt.DEFAULT_DTYPE):
        self.w = Param(tt.init_uniform(rng, dim, num_labels, fan_in=dim, dtype=dtype),
                       "classifier.w")
        self.b = Param(np.zeros((1, num_labels), dtype=dtype), "classifier.b")

    def params(self) -> list[Param]:
        return [self.w, self.b]

    def apply(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


@dataclass
class BatchArrays:
    """Numpy views of one batch, ready to stack onto the tape."""

    text_ids: np.ndarray     # (B, l_t)
    text_lens: np.ndarray    # (B,)
    video: np.ndarray        # (B*l_v, d_v)
    video_lens: np.ndarray
    audio: np.ndarray        # (B*l_a, d_a)
    audio_lens: np.ndarray
    labels: np.ndarray       # (B,)

    @property
    def size(self) -> int:
        return self.text_ids.shape[0]


@dataclass
class ForwardResult:
    logits: Tensor            # (B, I)
    pooled: Tensor            # (B, d_t)
    mask_token: Tensor        # (B, d_t) refined [MASK] from the normal branch
    label_token: Tensor | None  # (B, d_t) refined label word, augmented branch
    aligned: AlignedTriple


class PromptFusionModel:
    """Prompt-conditioned multimodal classifier over token/video/audio bundles."""

    def __init__(self, manifest: DatasetManifest, cfg: TrainConfig,
                 dtype=tt.DEFAULT_DTYPE, initial_embeddings: np.ndarray | None = None):
        cfg.validate()
        manifest.validate()
        if manifest.d_t % cfg.heads:
            raise ConfigError(
                f"text width {manifest.d_t} not divisible by {cfg.heads} heads")
        if cfg.pretrained_embeddings and initial_embeddings is None:
            raise ConfigError("pretrained_embeddings requested but the dataset "
                              "carries no text embedding table")
        self.manifest = manifest
        self.cfg = cfg
        self.dtype = dtype
        d_p = cfg.token_dim or manifest.d_t
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x1217]))

        self.prompt_tokens = Param(
            tt.init_uniform(rng, cfg.prompt_len, d_p, fan_in=d_p, dtype=dtype),
            "prompt.tokens")
        self.aligner = SimilarityAligner(
            d_p, manifest.d_v, manifest.d_a, cfg.prompt_len, cfg.width,
            cfg.alpha_tv, cfg.alpha_ta, rng, dtype=dtype)
        self.generator = PromptGenerator(
            cfg.width, cfg.heads, manifest.d_t, rng, swap_roles=cfg.swap_roles,
            dtype=dtype)
        initial = initial_embeddings if cfg.pretrained_embeddings else None
        self.table = EmbeddingTable(
            manifest.text_vocab_size, manifest.d_t, manifest.num_labels, rng,
            dtype=dtype, initial=initial)
        self.assembler = SequenceAssembler(
            self.table, manifest.l_t, cfg.prompt_len, rng, dtype=dtype)
        gate = AdaptationGate(cfg.width, manifest.d_t, cfg.gate_beta, rng, dtype=dtype)
        self.encoder = SharedEncoder(
            manifest.d_t, cfg.heads, cfg.encoder_blocks, gate, cfg.gate_index, rng,
            dtype=dtype)
        self.classifier = LinearClassifier(manifest.d_t, manifest.num_labels, rng,
                                           dtype=dtype)
        self.augmented_branch_calls = 0   # instrumentation for the tcl_off contract

        # non-generated prompts are frozen. A handcrafted phrase is made of
        # words outside the task vocabulary, so its rows are fixed embeddings
        # that never alias with text tokens (one fixed phrase per variant,
        # shared across runs); the mask prompt repeats the initial [MASK] row,
        # the degenerate end of the comparison.
        self.frozen_prompt = None
        if cfg.prompt_mode in ("handcraft_1", "handcraft_2"):
            variant = 1 if cfg.prompt_mode == "handcraft_1" else 2
            phrase_rng = np.random.default_rng(np.random.SeedSequence([0xFA5E, variant]))
            rows = tt.init_uniform(phrase_rng, cfg.prompt_len, manifest.d_t,
                                   fan_in=manifest.d_t, dtype=dtype)
            self.frozen_prompt = Param(rows, "prompt.frozen", trainable=False)
        elif cfg.prompt_mode == "mask":
            rows = np.tile(self.table.table.data[MASK_ID], (cfg.prompt_len, 1))
            self.frozen_prompt = Param(rows, "prompt.frozen", trainable=False)

    # parameters -----------------------------------------------------------
    def named_params(self) -> list[Param]:
        out = [self.prompt_tokens]
        if self.frozen_prompt is not None:
            out.append(self.frozen_prompt)
        out.extend(self.aligner.params())
        out.extend(self.generator.params())
        out.extend(self.assembler.params())
        out.extend(self.encoder.params())
        out.extend(self.classifier.params())
        return out

    def trainable_params(self) -> list[Param]:
        return [p for p in self.named_params() if p.trainable]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.named_params()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for p in self.named_params():
            if p.name not in state:
                raise ConfigError(f"checkpoint is missing parameter {p.name!r}")
            arr = np.asarray(state[p.name], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise ConfigError(
                    f"checkpoint parameter {p.name!r} shaped {arr.shape}, "
                    f"expected {p.data.shape}")
            p.data = arr.copy()

    # batch marshalling ----------------------------------------------------
    def arrays_from_bundles(self, bundles: list[ModalityBundle]) -> BatchArrays:
        m = self.manifest
        video = np.concatenate([b.video_feats for b in bundles]).astype(self.dtype)
        audio = np.concatenate([b.audio_feats for b in bundles]).astype(self.dtype)
        if self.cfg.zero_nonverbal:
            video = np.zeros_like(video)
            audio = np.zeros_like(audio)
        return BatchArrays(
            text_ids=np.stack([b.text_ids for b in bundles]),
            text_lens=np.array([min(b.true_lens[0], m.l_t) for b in bundles]),
            video=video,
            video_lens=np.array([b.true_lens[1] for b in bundles]),
            audio=audio,
            audio_lens=np.array([b.true_lens[2] for b in bundles]),
            labels=np.array([b.label for b in bundles], dtype=np.int64),
        )

    # forward passes ---------------------------------------------------------
    def align_batch(self, arrays: BatchArrays) -> AlignedTriple:
        return self.aligner.run_batch(
            self.prompt_tokens, Tensor(arrays.video), Tensor(arrays.audio),
            arrays.video_lens, arrays.audio_lens, use_similarity=self.cfg.sbma_on)

    def prompt_rows(self, aligned: AlignedTriple, blocks: int) -> Tensor | None:
        """Prompt block for the batch, or None in prompt-ablated mode."""
        cfg = self.cfg
        if not cfg.map_on:
            return None
        if cfg.prompt_mode == "modality_aware":
            return self.generator.generate(aligned, blocks)
        return tt.tile_rows(self.frozen_prompt, blocks)

    def forward_batch(self, bundles: list[ModalityBundle],
                      with_augmented: bool = False) -> ForwardResult:
        arrays = self.arrays_from_bundles(bundles)
        blocks = arrays.size
        aligned = self.align_batch(arrays)
        prompt = self.prompt_rows(aligned, blocks)
        text_emb, text_mask = self.assembler.embed_text_batch(
            arrays.text_ids, arrays.text_lens)

        normal = self.assembler.build_normal_batch(text_emb, prompt, text_mask)
        refined = self.encoder.encode_normal(normal, aligned.v_hat, aligned.a_hat)
        mask_token = special_tokens(refined, normal)
        pool_mask = normal.attention_mask
        if not self.cfg.pool_prompt:
            pool_mask = pool_mask.copy()
            pool_mask[:, self.manifest.l_t + 1:] = False
        pooled = mean_pool(refined, pool_mask)
        logits = self.classifier.apply(pooled)

        label_token = None
        if with_augmented:
            augmented = self.assembler.build_augmented_batch(
                text_emb, prompt, arrays.labels, text_mask)
            refined_aug = self.encoder.encode_augmented(augmented)
            label_token = special_tokens(refined_aug, augmented)
            if self.cfg.stop_grad_label:
                label_token = label_token.detach()
            self.augmented_branch_calls += 1
        return ForwardResult(logits, pooled, mask_token, label_token, aligned)

    def batch_loss(self, bundles: list[ModalityBundle]) -> tuple[Tensor, LossReport]:
        """Training objective for one batch (Z-tilde only built when TCL is on)."""
        arrays_labels = np.array([b.label for b in bundles], dtype=np.int64)
        result = self.forward_batch(bundles, with_augmented=self.cfg.tcl_on)
        l_cls = cross_entropy(result.logits, arrays_labels)
        if self.cfg.tcl_on:
            pair_tokens = interleave_pairs(result.mask_token, result.label_token)
            l_con = nt_xent(pair_tokens, self.cfg.tau)
            total = l_con + l_cls
            report = LossReport(l_con.item(), l_cls.item())
        else:
            total = l_cls
            report = LossReport(0.0, l_cls.item())
        return total, report

    def predict_logits(self, bundles: list[ModalityBundle]) -> np.ndarray:
        """Label scores from the normal branch only (labels never read)."""
        return self.forward_batch(bundles, with_augmented=False).logits.data.copy()
