"""Synthetic planted-signal datasets.

Each sample carries text token ids plus video/audio feature sequences. The
nonverbal modalities embed one "motif" each: a fixed random unit direction
per motif id, repeated over the valid rows with additive Gaussian noise. In
synergy mode the label is the XOR of the two motif ids, so neither video nor
audio alone predicts the label while the pair determines it.

Text vocabulary layout (fixed across the package):
    0           padding
    1           [MASK]
    2 .. 1+I    label words
    2+I ..      distractor words
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

PAD_ID = 0
MASK_ID = 1
LABEL_ID_BASE = 2

TRAIN, VAL, TEST = "train", "val", "test"
SPLITS = (TRAIN, VAL, TEST)


@dataclass
class DatasetManifest:
    """Shapes and label space shared by every sample in a dataset."""

    format_version: str = "1"
    split_sizes: dict = field(default_factory=lambda: {TRAIN: 0, VAL: 0, TEST: 0})
    num_labels: int = 4
    label_names: list = field(default_factory=list)
    text_vocab_size: int = 32
    d_t: int = 32
    d_v: int = 16
    d_a: int = 16
    l_t: int = 12
    l_v: int = 10
    l_a: int = 14

    def __post_init__(self):
        if not self.label_names:
            self.label_names = [f"label_{i}" for i in range(self.num_labels)]
        self.validate()

    def validate(self) -> None:
        if self.num_labels < 2:
            raise ConfigError(f"need at least 2 labels, got {self.num_labels}")
        if any(s < 0 for s in self.split_sizes.values()):
            raise ConfigError(f"negative split size in {self.split_sizes}")
        if min(self.d_t, self.d_v, self.d_a, self.l_t, self.l_v, self.l_a) < 1:
            raise ConfigError("all dims and max lens must be >= 1")
        if len(self.label_names) != self.num_labels:
            raise ConfigError(
                f"{len(self.label_names)} label names for {self.num_labels} labels")
        if LABEL_ID_BASE + self.num_labels >= self.text_vocab_size:
            raise ConfigError(
                f"vocab of {self.text_vocab_size} cannot hold {self.num_labels} "
                f"label words plus reserved ids")

    def dims(self) -> tuple[int, int, int]:
        return self.d_t, self.d_v, self.d_a

    def max_lens(self) -> tuple[int, int, int]:
        return self.l_t, self.l_v, self.l_a


@dataclass
class ModalityBundle:
    """One sample: padded token ids, padded feature matrices, true lengths, label."""

    text_ids: np.ndarray       # (l_t,) int32, PAD_ID beyond true length
    video_feats: np.ndarray    # (l_v, d_v) float32, zero rows beyond true length
    audio_feats: np.ndarray    # (l_a, d_a) float32
    true_lens: tuple           # (text, video, audio)
    label: int


@dataclass
class SynthConfig:
    """Knobs for the planted-signal generator."""

    num_labels: int = 4
    train_size: int = 1024
    val_size: int = 256
    test_size: int = 256
    rho_t: float = 0.3
    rho_v: float = 1.0
    rho_a: float = 1.0
    synergy: bool = True
    noise_std: float = 0.1
    seed: int = 0
    text_vocab_size: int = 32
    d_t: int = 32
    d_v: int = 16
    d_a: int = 16
    l_t: int = 12
    l_v: int = 10
    l_a: int = 14

    def validate(self) -> None:
        for name in ("rho_t", "rho_v", "rho_a"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std={self.noise_std} negative")
        if LABEL_ID_BASE + self.num_labels >= self.text_vocab_size:
            raise ConfigError(
                f"{self.num_labels} labels exceed the capacity of a "
                f"{self.text_vocab_size}-word vocabulary")
        if self.num_labels < 2:
            raise ConfigError(f"need at least 2 labels, got {self.num_labels}")

    def manifest(self) -> DatasetManifest:
        return DatasetManifest(
            split_sizes={TRAIN: self.train_size, VAL: self.val_size, TEST: self.test_size},
            num_labels=self.num_labels,
            text_vocab_size=self.text_vocab_size,
            d_t=self.d_t, d_v=self.d_v, d_a=self.d_a,
            l_t=self.l_t, l_v=self.l_v, l_a=self.l_a,
        )


@dataclass
class Dataset:
    manifest: DatasetManifest
    splits: dict
    text_embeddings: np.ndarray | None = None   # optional pretrained table

    def __getitem__(self, split: str):
        return self.splits[split]


def motif_vectors(dim: int, count: int, seed: int) -> np.ndarray:
    """The `count` unit directions motifs are planted along (count x dim)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, dim, count]))
    dirs = rng.standard_normal((count, dim))
    return (dirs / np.linalg.norm(dirs, axis=1, keepdims=True)).astype(np.float32)


def combine_motifs(m_v: int, m_a: int, num_labels: int) -> int:
    """Joint label of a motif pair: bitwise XOR when I is a power of two,
    modular addition otherwise."""
    if num_labels & (num_labels - 1) == 0:
        return m_v ^ m_a
    return (m_v + m_a) % num_labels


def _complement_motif(label: int, m_v: int, num_labels: int) -> int:
    if num_labels & (num_labels - 1) == 0:
        return label ^ m_v
    return (label - m_v) % num_labels


def _balanced_labels(size: int, num_labels: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.arange(size) % num_labels
    rng.shuffle(labels)
    return labels


def _motif_rows(direction: np.ndarray, true_len: int, max_len: int,
                noise_std: float, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros((max_len, direction.shape[0]), dtype=np.float32)
    rows = np.tile(direction, (true_len, 1))
    rows += noise_std * rng.standard_normal(rows.shape).astype(np.float32)
    out[:true_len] = rows
    return out


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Deterministically generate a planted-signal dataset from `cfg`."""
    cfg.validate()
    manifest = cfg.manifest()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xDA7A]))
    video_dirs = motif_vectors(cfg.d_v, cfg.num_labels, cfg.seed)
    audio_dirs = motif_vectors(cfg.d_a, cfg.num_labels, cfg.seed + 1)
    distractor_lo = LABEL_ID_BASE + cfg.num_labels

    splits: dict = {}
    for split, size in manifest.split_sizes.items():
        labels = _balanced_labels(size, cfg.num_labels, rng)
        samples = []
        for label in labels:
            label = int(label)
            lt = int(rng.integers((cfg.l_t + 1) // 2, cfg.l_t + 1))
            lv = int(rng.integers((cfg.l_v + 1) // 2, cfg.l_v + 1))
            la = int(rng.integers((cfg.l_a + 1) // 2, cfg.l_a + 1))

            ids = np.full(cfg.l_t, PAD_ID, dtype=np.int32)
            ids[:lt] = rng.integers(distractor_lo, cfg.text_vocab_size, size=lt)
            if rng.random() < cfg.rho_t:
                ids[int(rng.integers(0, lt))] = LABEL_ID_BASE + label

            if cfg.synergy:
                m_v = int(rng.integers(0, cfg.num_labels))
                m_a = _complement_motif(label, m_v, cfg.num_labels)
                if rng.random() >= cfg.rho_v:
                    m_v = int(rng.integers(0, cfg.num_labels))
                if rng.random() >= cfg.rho_a:
                    m_a = int(rng.integers(0, cfg.num_labels))
            else:
                m_v = label if rng.random() < cfg.rho_v else int(rng.integers(0, cfg.num_labels))
                m_a = label if rng.random() < cfg.rho_a else int(rng.integers(0, cfg.num_labels))

            samples.append(ModalityBundle(
                text_ids=ids,
                video_feats=_motif_rows(video_dirs[m_v], lv, cfg.l_v, cfg.noise_std, rng),
                audio_feats=_motif_rows(audio_dirs[m_a], la, cfg.l_a, cfg.noise_std, rng),
                true_lens=(lt, lv, la),
                label=label,
            ))
        splits[split] = samples
    return Dataset(manifest, splits)


def nearest_motif(feats: np.ndarray, true_len: int, directions: np.ndarray) -> int:
    """Brute-force decoder: average the valid rows, pick the closest motif."""
    pooled = feats[:true_len].mean(axis=0)
    return int(np.argmax(directions @ pooled))
