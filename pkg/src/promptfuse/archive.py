"""Binary feature-archive format.

An archive is a directory:

    manifest.json   dataset manifest + sha256 per payload file
    index.json      per split, per sample: byte offsets + true lengths
    text.bin        int32 LE token ids, concatenated padded sequences
    video.bin       float32 LE row-major padded matrices
    audio.bin       float32 LE row-major padded matrices
    labels.bin      int32 LE, one per sample in split order

Every .bin starts with magic b"MTCL" plus a one-byte payload type code.
Offsets in index.json count from the end of that 5-byte header. An optional
text_embeddings.bin (pretrained-embedding mode) carries a vocab x d_t float32
matrix exported alongside real features so the trainer can bypass its own
embedding table.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .data import SPLITS, Dataset, DatasetManifest, ModalityBundle
from .errors import ArchiveError, ChecksumError, ConfigError, VersionError

MAGIC = b"MTCL"
HEADER_LEN = 5
FORMAT_VERSION = "1"

TYPE_TEXT = 1
TYPE_VIDEO = 2
TYPE_AUDIO = 3
TYPE_LABELS = 4
TYPE_EMBEDDINGS = 5

_PAYLOADS = {
    "text.bin": TYPE_TEXT,
    "video.bin": TYPE_VIDEO,
    "audio.bin": TYPE_AUDIO,
    "labels.bin": TYPE_LABELS,
}
_OPTIONAL_PAYLOADS = {"text_embeddings.bin": TYPE_EMBEDDINGS}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_payload(path: Path, type_code: int, body: bytes) -> None:
    path.write_bytes(MAGIC + bytes([type_code]) + body)


def _read_payload(path: Path, type_code: int) -> bytes:
    raw = path.read_bytes()
    if len(raw) < HEADER_LEN or raw[:4] != MAGIC:
        raise ArchiveError(f"{path.name}: missing MTCL magic header")
    if raw[4] != type_code:
        raise ArchiveError(f"{path.name}: payload type {raw[4]}, expected {type_code}")
    return raw[HEADER_LEN:]


def write_feature_archive(dataset: Dataset, path, text_embeddings: np.ndarray | None = None) -> Path:
    """Serialize `dataset` under directory `path`; returns the directory."""
    manifest = dataset.manifest
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    text_parts, video_parts, audio_parts, label_parts = [], [], [], []
    index = {split: [] for split in SPLITS}
    offsets = {"text": 0, "video": 0, "audio": 0, "label": 0}
    for split in SPLITS:
        samples = dataset.splits.get(split, [])
        if len(samples) != manifest.split_sizes.get(split, 0):
            raise ConfigError(
                f"{split} has {len(samples)} samples, manifest says "
                f"{manifest.split_sizes.get(split, 0)}")
        for s in samples:
            _check_sample(s, manifest, split)
            text = np.ascontiguousarray(s.text_ids, dtype="<i4")
            video = np.ascontiguousarray(s.video_feats, dtype="<f4")
            audio = np.ascontiguousarray(s.audio_feats, dtype="<f4")
            label = np.array([s.label], dtype="<i4")
            index[split].append({
                "text_offset": offsets["text"],
                "video_offset": offsets["video"],
                "audio_offset": offsets["audio"],
                "label_offset": offsets["label"],
                "true_lens": list(map(int, s.true_lens)),
            })
            for key, arr, parts in (("text", text, text_parts), ("video", video, video_parts),
                                    ("audio", audio, audio_parts), ("label", label, label_parts)):
                parts.append(arr.tobytes())
                offsets[key] += arr.nbytes

    _write_payload(out / "text.bin", TYPE_TEXT, b"".join(text_parts))
    _write_payload(out / "video.bin", TYPE_VIDEO, b"".join(video_parts))
    _write_payload(out / "audio.bin", TYPE_AUDIO, b"".join(audio_parts))
    _write_payload(out / "labels.bin", TYPE_LABELS, b"".join(label_parts))

    manifest_doc = {
        "format_version": FORMAT_VERSION,
        "split_sizes": {k: int(v) for k, v in manifest.split_sizes.items()},
        "num_labels": manifest.num_labels,
        "label_names": list(manifest.label_names),
        "text_vocab_size": manifest.text_vocab_size,
        "dims": {"text": manifest.d_t, "video": manifest.d_v, "audio": manifest.d_a},
        "max_lens": {"text": manifest.l_t, "video": manifest.l_v, "audio": manifest.l_a},
    }
    if text_embeddings is not None:
        emb = np.ascontiguousarray(text_embeddings, dtype="<f4")
        if emb.ndim != 2 or emb.shape[1] != manifest.d_t:
            raise ConfigError(
                f"text embeddings must be (vocab, {manifest.d_t}), got {emb.shape}")
        _write_payload(out / "text_embeddings.bin", TYPE_EMBEDDINGS, emb.tobytes())
        manifest_doc["text_embedding_rows"] = int(emb.shape[0])

    (out / "index.json").write_text(json.dumps(index), encoding="utf-8")
    files = list(_PAYLOADS) + ["index.json"]
    if text_embeddings is not None:
        files.append("text_embeddings.bin")
    manifest_doc["checksums"] = {name: _sha256(out / name) for name in files}
    (out / "manifest.json").write_text(json.dumps(manifest_doc, indent=2), encoding="utf-8")
    return out


def _check_sample(s: ModalityBundle, m: DatasetManifest, split: str) -> None:
    if s.text_ids.shape != (m.l_t,):
        raise ConfigError(f"{split}: text ids shaped {s.text_ids.shape}, expected ({m.l_t},)")
    if s.video_feats.shape != (m.l_v, m.d_v):
        raise ConfigError(f"{split}: video shaped {s.video_feats.shape}, "
                          f"expected ({m.l_v}, {m.d_v})")
    if s.audio_feats.shape != (m.l_a, m.d_a):
        raise ConfigError(f"{split}: audio shaped {s.audio_feats.shape}, "
                          f"expected ({m.l_a}, {m.d_a})")
    lt, lv, la = s.true_lens
    if not (0 < lt <= m.l_t and 0 < lv <= m.l_v and 0 < la <= m.l_a):
        raise ConfigError(f"{split}: true lengths {s.true_lens} exceed max lens")
    if not 0 <= s.label < m.num_labels:
        raise ConfigError(f"{split}: label {s.label} outside [0, {m.num_labels})")
    if not (np.isfinite(s.video_feats).all() and np.isfinite(s.audio_feats).all()):
        raise ConfigError(f"{split}: non-finite feature values")


def read_feature_archive(path) -> Dataset:
    dataset, warnings = validate_feature_archive(path)
    return dataset


def validate_feature_archive(path) -> tuple[Dataset, list[str]]:
    """Load an archive, verifying magic, version, checksums and geometry.

    Returns the dataset plus a list of non-fatal warnings (unknown files or
    manifest keys). Structural problems raise ArchiveError subclasses.
    """
    root = Path(path)
    warnings: list[str] = []
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ArchiveError(f"no manifest.json under {root}")
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))

    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"archive format version {version!r}, reader supports {FORMAT_VERSION!r}")

    known_keys = {"format_version", "split_sizes", "num_labels", "label_names",
                  "text_vocab_size", "dims", "max_lens", "checksums",
                  "text_embedding_rows"}
    for key in doc:
        if key not in known_keys:
            warnings.append(f"manifest.json: unknown key {key!r}")

    manifest = DatasetManifest(
        split_sizes={k: int(v) for k, v in doc["split_sizes"].items()},
        num_labels=int(doc["num_labels"]),
        label_names=list(doc["label_names"]),
        text_vocab_size=int(doc["text_vocab_size"]),
        d_t=int(doc["dims"]["text"]), d_v=int(doc["dims"]["video"]),
        d_a=int(doc["dims"]["audio"]),
        l_t=int(doc["max_lens"]["text"]), l_v=int(doc["max_lens"]["video"]),
        l_a=int(doc["max_lens"]["audio"]),
    )

    expected_files = dict(_PAYLOADS)
    has_embeddings = "text_embedding_rows" in doc
    if has_embeddings:
        expected_files.update(_OPTIONAL_PAYLOADS)
    checksums = doc.get("checksums", {})
    for name in list(expected_files) + ["index.json"]:
        fpath = root / name
        if not fpath.is_file():
            raise ArchiveError(f"archive missing {name}")
        if name not in checksums:
            raise ChecksumError(f"manifest has no checksum for {name}")
        actual = _sha256(fpath)
        if actual != checksums[name]:
            raise ChecksumError(f"{name}: sha256 mismatch (file is corrupt or truncated)")
    # run.json / export_report.json are tool-run records legitimately
    # colocated with an archive
    known = set(expected_files) | {"index.json", "manifest.json", "run.json",
                                   "export_report.json"}
    for extra in sorted(p.name for p in root.iterdir() if p.name not in known):
        warnings.append(f"unexpected file in archive: {extra}")

    index = json.loads((root / "index.json").read_text(encoding="utf-8"))
    payloads = {name: _read_payload(root / name, code) for name, code in expected_files.items()}

    rec_bytes = {
        "text": manifest.l_t * 4,
        "video": manifest.l_v * manifest.d_v * 4,
        "audio": manifest.l_a * manifest.d_a * 4,
        "label": 4,
    }
    sizes = {"text": len(payloads["text.bin"]), "video": len(payloads["video.bin"]),
             "audio": len(payloads["audio.bin"]), "label": len(payloads["labels.bin"])}
    total = sum(manifest.split_sizes.get(s, 0) for s in SPLITS)
    for key in rec_bytes:
        expected = total * rec_bytes[key]
        if sizes[key] != expected:
            raise ChecksumError(
                f"{key} payload is {sizes[key]} bytes, manifest geometry implies "
                f"{expected} ({total} records of {rec_bytes[key]} bytes)")

    splits: dict = {}
    for split in SPLITS:
        records = index.get(split, [])
        if len(records) != manifest.split_sizes.get(split, 0):
            raise ArchiveError(
                f"index lists {len(records)} {split} records, manifest says "
                f"{manifest.split_sizes.get(split, 0)}")
        samples = []
        for i, rec in enumerate(records):
            samples.append(_decode_sample(payloads, manifest, rec_bytes, split, i, rec))
        splits[split] = samples

    embeddings = _decode_embeddings(doc, payloads, manifest) if has_embeddings else None
    return Dataset(manifest, splits, text_embeddings=embeddings), warnings


def _decode_sample(payloads, m: DatasetManifest, rec_bytes, split, i, rec) -> ModalityBundle:
    lens = rec["true_lens"]
    if len(lens) != 3:
        raise ArchiveError(f"{split}[{i}]: malformed true_lens {lens}")
    for key, fname in (("text", "text.bin"), ("video", "video.bin"),
                       ("audio", "audio.bin"), ("label", "labels.bin")):
        off = rec[f"{key}_offset"]
        if off % rec_bytes[key] or off + rec_bytes[key] > len(payloads[fname]):
            raise ChecksumError(f"{split}[{i}]: {key} offset {off} outside {fname} payload")
    text = np.frombuffer(payloads["text.bin"], dtype="<i4",
                         count=m.l_t, offset=rec["text_offset"]).copy()
    video = np.frombuffer(payloads["video.bin"], dtype="<f4",
                          count=m.l_v * m.d_v, offset=rec["video_offset"])
    audio = np.frombuffer(payloads["audio.bin"], dtype="<f4",
                          count=m.l_a * m.d_a, offset=rec["audio_offset"])
    label = int(np.frombuffer(payloads["labels.bin"], dtype="<i4",
                              count=1, offset=rec["label_offset"])[0])
    if not 0 <= label < m.num_labels:
        raise ArchiveError(f"{split}[{i}]: label {label} outside [0, {m.num_labels})")
    lt, lv, la = (int(x) for x in lens)
    if not (0 < lt <= m.l_t and 0 < lv <= m.l_v and 0 < la <= m.l_a):
        raise ArchiveError(f"{split}[{i}]: true lengths {lens} exceed max lens")
    if (text >= m.text_vocab_size).any() or (text < 0).any():
        raise ArchiveError(f"{split}[{i}]: token id outside vocabulary")
    return ModalityBundle(
        text_ids=text.astype(np.int32),
        video_feats=video.reshape(m.l_v, m.d_v).astype(np.float32),
        audio_feats=audio.reshape(m.l_a, m.d_a).astype(np.float32),
        true_lens=(lt, lv, la),
        label=label,
    )


def _decode_embeddings(doc, payloads, m: DatasetManifest) -> np.ndarray:
    rows = int(doc["text_embedding_rows"])
    body = payloads["text_embeddings.bin"]
    if len(body) != rows * m.d_t * 4:
        raise ChecksumError(
            f"text_embeddings.bin payload is {len(body)} bytes, expected "
            f"{rows}x{m.d_t} float32 = {rows * m.d_t * 4}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, m.d_t).astype(np.float32)
