"""Input manifest: one JSONL record per sample."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class ManifestError(ValueError):
    pass


REQUIRED_KEYS = {"id", "text", "video", "audio", "label"}
SPLITS = ("train", "val", "test")


@dataclass
class SampleSpec:
    sample_id: str
    text: str
    video: Path        # directory of frames, or a single image file
    audio: Path        # wav file
    label: str
    split: str = "train"


@dataclass
class ExportJob:
    samples: list
    label_names: list
    out_dir: Path
    text_backbone: str = "bert-base-uncased"
    video_backbone: str = "swin_b"
    audio_backbone: str = "wav2vec2-base-960h"
    backend: str = "auto"
    frames: int = 10           # l_v: uniformly sampled frame count
    max_text: int = 12         # l_t
    max_audio: int = 14        # l_a
    skip_threshold: float = 0.01

    def __post_init__(self):
        if self.frames < 1 or self.max_text < 1 or self.max_audio < 1:
            raise ManifestError("frame and length limits must be >= 1")
        if len(self.label_names) < 2:
            raise ManifestError(f"need >= 2 labels, got {self.label_names}")


def read_manifest(path, base_dir=None) -> list[SampleSpec]:
    """Parse a JSONL manifest; relative media paths resolve next to it."""
    path = Path(path)
    base = Path(base_dir) if base_dir is not None else path.parent
    samples = []
    seen_ids = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        missing = REQUIRED_KEYS - set(doc)
        if missing:
            raise ManifestError(f"{path}:{lineno}: missing keys {sorted(missing)}")
        split = doc.get("split", "train")
        if split not in SPLITS:
            raise ManifestError(f"{path}:{lineno}: unknown split {split!r}")
        sample_id = str(doc["id"])
        if sample_id in seen_ids:
            raise ManifestError(f"{path}:{lineno}: duplicate id {sample_id!r}")
        seen_ids.add(sample_id)
        samples.append(SampleSpec(
            sample_id=sample_id,
            text=str(doc["text"]),
            video=base / doc["video"],
            audio=base / doc["audio"],
            label=str(doc["label"]),
            split=split,
        ))
    if not samples:
        raise ManifestError(f"{path}: no samples")
    return samples


def collect_labels(samples) -> list:
    """Label vocabulary in first-appearance order."""
    names = []
    for s in samples:
        if s.label not in names:
            names.append(s.label)
    return names
