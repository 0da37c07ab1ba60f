"""Feature extraction pipeline: media in, promptfuse archive out.

Per sample: tokenize the transcript and take embedding-layer vectors, encode
uniformly sampled video frames, encode windowed audio. Token strings are
remapped into the primary vocabulary layout (pad=0, mask=1, label words,
then corpus words) and the per-id vectors ship as the archive's embedding
sidecar, so the trainer can run on pretrained text features directly.

Undecodable samples are logged and skipped; an export fails when more than
`skip_threshold` of the samples drop out.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from promptfuse.archive import validate_feature_archive, write_feature_archive
from promptfuse.data import (Dataset, DatasetManifest, LABEL_ID_BASE,
                             ModalityBundle, SPLITS)

from .backbones import resolve_audio, resolve_text, resolve_video, tokenize
from .manifest import ExportJob, ManifestError, SampleSpec

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class MediaError(ValueError):
    """A sample's media could not be decoded."""


@dataclass
class ExtractedSample:
    spec: SampleSpec
    token_ids: list          # corpus-vocab ids, pre-remap
    text_features: np.ndarray   # (1 + n_tokens, d_t), CLS first
    video_features: np.ndarray  # (n_frames, d_v)
    audio_features: np.ndarray  # (n_windows, d_a)


@dataclass
class ExportReport:
    archive: Path
    backbones: dict
    exported: int
    skipped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def skip_fraction(self) -> float:
        total = self.exported + len(self.skipped)
        return len(self.skipped) / total if total else 0.0

    def to_dict(self) -> dict:
        return {"archive": str(self.archive), "backbones": self.backbones,
                "exported": self.exported, "skipped": self.skipped,
                "warnings": self.warnings,
                "skip_fraction": self.skip_fraction}


def list_frames(path: Path) -> list[Path]:
    if path.is_file():
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            raise MediaError(f"{path}: not an image file")
        return [path]
    if path.is_dir():
        frames = sorted(p for p in path.iterdir()
                        if p.suffix.lower() in IMAGE_SUFFIXES)
        if not frames:
            raise MediaError(f"{path}: no frames in directory")
        return frames
    raise MediaError(f"{path}: missing video source")


def sample_frames(frames: list, count: int) -> list:
    """Uniform temporal sampling down to `count` frames."""
    if len(frames) <= count:
        return frames
    idx = np.round(np.linspace(0, len(frames) - 1, count)).astype(int)
    return [frames[i] for i in idx]


def load_wav(path: Path) -> tuple[np.ndarray, int]:
    """Mono float32 signal in [-1, 1] plus sample rate."""
    if not path.is_file():
        raise MediaError(f"{path}: missing audio file")
    try:
        with wave.open(str(path), "rb") as fh:
            sw = fh.getsampwidth()
            channels = fh.getnchannels()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise MediaError(f"{path}: cannot decode wav: {exc}") from exc
    dtype = {1: np.int8, 2: np.int16, 4: np.int32}.get(sw)
    if dtype is None:
        raise MediaError(f"{path}: unsupported sample width {sw}")
    signal = np.frombuffer(raw, dtype=dtype).astype(np.float32)
    if channels > 1:
        signal = signal.reshape(-1, channels).mean(axis=1)
    if signal.size == 0:
        raise MediaError(f"{path}: empty audio")
    return signal / float(np.iinfo(dtype).max), rate


def extract_sample(spec: SampleSpec, text_bb, video_bb, audio_bb,
                   job: ExportJob, token_ids: dict) -> ExtractedSample:
    from PIL import Image, UnidentifiedImageError

    tokens, text_feats = text_bb.embed(spec.text, job.max_text)
    if not tokens:
        raise MediaError(f"{spec.sample_id}: transcript has no tokens")
    ids = []
    for tok in tokens:
        if tok not in token_ids:
            token_ids[tok] = len(token_ids)
        ids.append(token_ids[tok])

    frame_paths = sample_frames(list_frames(spec.video), job.frames)
    frames = []
    for fp in frame_paths:
        try:
            with Image.open(fp) as img:
                frames.append(video_bb.encode_frame(img))
        except (UnidentifiedImageError, OSError) as exc:
            raise MediaError(f"{fp}: cannot decode image: {exc}") from exc
    video_feats = np.stack(frames)

    signal, rate = load_wav(spec.audio)
    min_window = max(1, rate // 50)
    windows = int(min(job.max_audio, max(1, signal.size // min_window)))
    audio_feats = audio_bb.encode_windows(signal, windows)

    return ExtractedSample(spec, ids, text_feats.astype(np.float32),
                           video_feats.astype(np.float32),
                           audio_feats.astype(np.float32))


def build_dataset(extracted: list, label_names: list, job: ExportJob,
                  token_ids: dict, text_bb) -> tuple[Dataset, np.ndarray]:
    """Assemble bundles plus the vocabulary embedding sidecar."""
    d_t, d_v, d_a = text_bb.width, extracted[0].video_features.shape[1], \
        extracted[0].audio_features.shape[1]
    num_labels = len(label_names)
    base = LABEL_ID_BASE + num_labels
    vocab_size = base + max(len(token_ids), 1)

    table = np.zeros((vocab_size, d_t), dtype=np.float32)
    table[1] = text_bb.token_vector("[mask]")
    for i, name in enumerate(label_names):
        words = tokenize(name)
        if not words:
            raise ManifestError(f"label {name!r} has no tokens")
        table[LABEL_ID_BASE + i] = np.mean(
            [text_bb.token_vector(w) for w in words], axis=0)
    for tok, tid in token_ids.items():
        table[base + tid] = text_bb.token_vector(tok)

    splits = {split: [] for split in SPLITS}
    for ex in extracted:
        ids = np.zeros(job.max_text, dtype=np.int32)
        n_tok = len(ex.token_ids)
        ids[:n_tok] = [base + t for t in ex.token_ids]

        video = np.zeros((job.frames, d_v), dtype=np.float32)
        n_frames = ex.video_features.shape[0]
        video[:n_frames] = ex.video_features

        audio = np.zeros((job.max_audio, d_a), dtype=np.float32)
        n_windows = ex.audio_features.shape[0]
        audio[:n_windows] = ex.audio_features

        splits[ex.spec.split].append(ModalityBundle(
            text_ids=ids, video_feats=video, audio_feats=audio,
            true_lens=(n_tok, n_frames, n_windows),
            label=label_names.index(ex.spec.label)))

    manifest = DatasetManifest(
        split_sizes={s: len(v) for s, v in splits.items()},
        num_labels=num_labels,
        label_names=list(label_names),
        text_vocab_size=vocab_size,
        d_t=d_t, d_v=d_v, d_a=d_a,
        l_t=job.max_text, l_v=job.frames, l_a=job.max_audio,
    )
    return Dataset(manifest, splits), table


def export(job: ExportJob) -> ExportReport:
    """Run the full pipeline and write a validated archive under job.out_dir."""
    text_bb = resolve_text(job.text_backbone, job.backend)
    video_bb = resolve_video(job.video_backbone, job.backend)
    audio_bb = resolve_audio(job.audio_backbone, job.backend)
    for spec in job.samples:
        if spec.label not in job.label_names:
            raise ManifestError(
                f"{spec.sample_id}: label {spec.label!r} not in vocabulary "
                f"{job.label_names}")

    token_ids: dict = {}
    extracted, skipped = [], []
    for spec in job.samples:
        try:
            extracted.append(extract_sample(spec, text_bb, video_bb, audio_bb,
                                            job, token_ids))
        except MediaError as exc:
            skipped.append({"id": spec.sample_id, "error": str(exc)})
    if not extracted:
        raise ManifestError("every sample failed to decode")

    dataset, table = build_dataset(extracted, job.label_names, job, token_ids,
                                   text_bb)
    write_feature_archive(dataset, job.out_dir, text_embeddings=table)
    _, warnings = validate_feature_archive(job.out_dir)

    report = ExportReport(
        archive=Path(job.out_dir),
        backbones={
            "text": {"name": text_bb.name, "kind": text_bb.kind, "width": text_bb.width},
            "video": {"name": video_bb.name, "kind": video_bb.kind, "width": video_bb.width},
            "audio": {"name": audio_bb.name, "kind": audio_bb.kind, "width": audio_bb.width},
        },
        exported=len(extracted),
        skipped=skipped,
        warnings=list(warnings),
    )
    (Path(job.out_dir) / "export_report.json").write_text(
        json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    return report
