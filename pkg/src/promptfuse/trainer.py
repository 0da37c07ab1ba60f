"""Training loop, optimizer, checkpointing and evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig, config_from_dict, config_to_dict
from .data import Dataset, DatasetManifest, ModalityBundle, TRAIN, VAL
from .errors import ArchiveError, ConfigError, TrainingDivergedError, VersionError
from .losses import LossReport
from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .model import PromptFusionModel
from .tensor import Param

CHECKPOINT_MAGIC = b"MTCK"
CHECKPOINT_VERSION = 1


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    def __init__(self, params: list[Param], lr: float, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.data -= (self.lr * (update + self.weight_decay * p.data)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.reset_grad()


@dataclass
class Checkpoint:
    """Everything needed to rebuild and re-evaluate a trained model."""

    config: dict
    manifest: dict
    epoch: int
    best_val_acc: float
    params: dict = field(repr=False)

    def to_model(self, dtype=np.float32) -> PromptFusionModel:
        # pretrained_embeddings only seeds a fresh table; stored params win here
        cfg_dict = dict(self.config, pretrained_embeddings=False)
        cfg = config_from_dict("train", cfg_dict)
        manifest = DatasetManifest(**self.manifest)
        model = PromptFusionModel(manifest, cfg, dtype=dtype)
        model.load_state_arrays(self.params)
        return model


def manifest_to_dict(m: DatasetManifest) -> dict:
    return {
        "format_version": m.format_version,
        "split_sizes": dict(m.split_sizes),
        "num_labels": m.num_labels,
        "label_names": list(m.label_names),
        "text_vocab_size": m.text_vocab_size,
        "d_t": m.d_t, "d_v": m.d_v, "d_a": m.d_a,
        "l_t": m.l_t, "l_v": m.l_v, "l_a": m.l_a,
    }


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield range(start, min(start + size, n))


def predict(model: PromptFusionModel, samples: list[ModalityBundle],
            batch_size: int) -> np.ndarray:
    """argmax label ids from the normal branch; never reads sample labels."""
    preds = []
    for batch in _batches(len(samples), batch_size):
        logits = model.predict_logits([samples[i] for i in batch])
        preds.append(logits.argmax(axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate_model(model: PromptFusionModel, samples: list[ModalityBundle],
                   batch_size: int | None = None) -> MetricsReport:
    if not samples:
        raise ConfigError("cannot evaluate an empty split")
    batch_size = batch_size or model.cfg.eval_batch_size
    preds = predict(model, samples, batch_size)
    truth = np.array([s.label for s in samples], dtype=np.int64)
    return compute_metrics(confusion_matrix(truth, preds, model.manifest.num_labels))


def evaluate(checkpoint: Checkpoint | PromptFusionModel,
             samples: list[ModalityBundle],
             batch_size: int | None = None) -> MetricsReport:
    model = checkpoint.to_model() if isinstance(checkpoint, Checkpoint) else checkpoint
    return evaluate_model(model, samples, batch_size)


def train(cfg: TrainConfig, dataset: Dataset, out_dir=None,
          ) -> tuple[Checkpoint, list[dict]]:
    """Fit on dataset.train, select on dataset.val accuracy, keep the best.

    Returns the best checkpoint and the per-epoch history (loss components
    plus validation metrics). Deterministic for a fixed config."""
    cfg.validate()
    train_samples = dataset.splits.get(TRAIN, [])
    val_samples = dataset.splits.get(VAL, []) or train_samples
    if not train_samples:
        raise ConfigError("training split is empty")

    model = PromptFusionModel(dataset.manifest, cfg,
                              initial_embeddings=dataset.text_embeddings)
    optimizer = AdamW(model.trainable_params(), cfg.learning_rate,
                      cfg.weight_decay, (cfg.beta1, cfg.beta2))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5F0F]))

    best_state = model.state_arrays()
    best_epoch = -1
    best_acc = -1.0
    history: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(train_samples))
        sums = np.zeros(2)
        n_batches = 0
        for batch in _batches(len(order), cfg.batch_size):
            bundles = [train_samples[i] for i in order[batch]]
            optimizer.zero_grad()
            loss, report = model.batch_loss(bundles)
            if not math.isfinite(report.total):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}: contrastive={report.contrastive}, "
                    f"classification={report.classification}")
            loss.backward()
            optimizer.step()
            sums += (report.contrastive, report.classification)
            n_batches += 1
            step += 1
        epoch_report = LossReport(sums[0] / n_batches, sums[1] / n_batches)
        val_metrics = evaluate_model(model, val_samples, cfg.eval_batch_size)
        history.append({
            "epoch": epoch,
            "loss_contrastive": epoch_report.contrastive,
            "loss_classification": epoch_report.classification,
            "loss_total": epoch_report.total,
            "val": val_metrics.as_dict(),
        })
        if val_metrics.acc > best_acc:
            best_acc = val_metrics.acc
            best_epoch = epoch
            best_state = model.state_arrays()
        elif epoch - best_epoch >= cfg.patience:
            break

    checkpoint = Checkpoint(
        config=config_to_dict(cfg),
        manifest=manifest_to_dict(dataset.manifest),
        epoch=best_epoch,
        best_val_acc=max(best_acc, 0.0),
        params=best_state,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(checkpoint, out)
        with (out / "history.jsonl").open("w", encoding="utf-8") as fh:
            for row in history:
                fh.write(json.dumps(row) + "\n")
    return checkpoint, history


def save_checkpoint(ckpt: Checkpoint, out_dir) -> Path:
    """checkpoint.bin (MTCK header + float32 tensors) plus checkpoint.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    order = list(ckpt.params)
    header = {
        "config": ckpt.config,
        "manifest": ckpt.manifest,
        "epoch": ckpt.epoch,
        "best_val_acc": ckpt.best_val_acc,
        "params": [{"name": name,
                    "rows": int(ckpt.params[name].shape[0]),
                    "cols": int(ckpt.params[name].shape[1])}
                   for name in order],
    }
    blob = json.dumps(header).encode("utf-8")
    path = out / "checkpoint.bin"
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(bytes([CHECKPOINT_VERSION]))
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        for name in order:
            fh.write(np.ascontiguousarray(ckpt.params[name], dtype="<f4").tobytes())
    summary = dict(header)
    summary["file"] = path.name
    (out / "checkpoint.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if path.is_dir():
        path = path / "checkpoint.bin"
    raw = path.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ArchiveError(f"{path.name}: missing MTCK magic header")
    if raw[4] != CHECKPOINT_VERSION:
        raise VersionError(f"checkpoint version {raw[4]}, reader supports {CHECKPOINT_VERSION}")
    blob_len = int.from_bytes(raw[5:9], "little")
    header = json.loads(raw[9:9 + blob_len].decode("utf-8"))
    offset = 9 + blob_len
    params = {}
    for meta in header["params"]:
        count = meta["rows"] * meta["cols"]
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        params[meta["name"]] = arr.reshape(meta["rows"], meta["cols"]).astype(np.float32)
        offset += count * 4
    if offset != len(raw):
        raise ArchiveError(f"{path.name}: {len(raw) - offset} trailing bytes")
    return Checkpoint(
        config=header["config"],
        manifest=header["manifest"],
        epoch=header["epoch"],
        best_val_acc=header["best_val_acc"],
        params=params,
    )
