"""Backbone registry: pretrained encoders with deterministic offline stand-ins.

Every backbone is addressed by the pretrained model's published name and
reports that model's true output width. When the real weights are loadable
(package installed and weights cached locally) the real model runs in eval
mode; otherwise a deterministic content-hash stand-in of the same width takes
over so pipelines stay runnable and testable offline. `resolve_*` with
backend="real" refuses to fall back.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

TEXT_WIDTHS = {"bert-base-uncased": 768, "bert-large-uncased": 1024}
VIDEO_WIDTHS = {"swin_b": 1024, "swin_t": 768}
AUDIO_WIDTHS = {"wav2vec2-base-960h": 768, "wav2vec2-large-960h": 1024}

_TOKEN_RE = re.compile(r"[a-z0-9']+|\[mask\]")


class BackboneUnavailable(RuntimeError):
    """The requested real backbone cannot be loaded in this environment."""


def _seeded_rng(*keys: str) -> np.random.Generator:
    digest = hashlib.sha256("::".join(keys).encode("utf-8")).digest()
    return np.random.default_rng(np.frombuffer(digest[:16], dtype=np.uint64))


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class HashTextEmbedder:
    """Embedding-layer stand-in: one fixed random vector per token string."""

    def __init__(self, name: str):
        if name not in TEXT_WIDTHS:
            raise BackboneUnavailable(f"unknown text backbone {name!r}")
        self.name = name
        self.width = TEXT_WIDTHS[name]
        self.kind = "offline"

    def token_vector(self, token: str) -> np.ndarray:
        rng = _seeded_rng("text", self.name, token)
        return (rng.standard_normal(self.width) / np.sqrt(self.width)).astype(np.float32)

    def embed(self, text: str, max_tokens: int) -> tuple[list[str], np.ndarray]:
        """Token strings (truncated) and the (1 + n) x width [CLS]+token matrix."""
        tokens = tokenize(text)[:max_tokens]
        rows = [self.token_vector("[cls]")]
        rows.extend(self.token_vector(t) for t in tokens)
        return tokens, np.stack(rows)


class HashImageEncoder:
    """Frame-feature stand-in: thumbnail statistics under a fixed projection."""

    GRID = 16

    def __init__(self, name: str):
        if name not in VIDEO_WIDTHS:
            raise BackboneUnavailable(f"unknown video backbone {name!r}")
        self.name = name
        self.width = VIDEO_WIDTHS[name]
        self.kind = "offline"
        rng = _seeded_rng("video", name)
        self._proj = (rng.standard_normal((3 * self.GRID * self.GRID, self.width))
                      / np.sqrt(3 * self.GRID * self.GRID)).astype(np.float32)

    def encode_frame(self, image) -> np.ndarray:
        from PIL import Image

        thumb = image.convert("RGB").resize((self.GRID, self.GRID), Image.BILINEAR)
        flat = np.asarray(thumb, dtype=np.float32).reshape(-1) / 255.0
        return (flat - flat.mean()) @ self._proj


class HashAudioEncoder:
    """Waveform-feature stand-in: windowed spectral stats under a projection."""

    BANDS = 64

    def __init__(self, name: str):
        if name not in AUDIO_WIDTHS:
            raise BackboneUnavailable(f"unknown audio backbone {name!r}")
        self.name = name
        self.width = AUDIO_WIDTHS[name]
        self.kind = "offline"
        rng = _seeded_rng("audio", name)
        self._proj = (rng.standard_normal((self.BANDS + 3, self.width))
                      / np.sqrt(self.BANDS + 3)).astype(np.float32)

    def encode_windows(self, signal: np.ndarray, num_windows: int) -> np.ndarray:
        """(num_windows x width) features over equal contiguous windows."""
        if signal.size == 0:
            raise ValueError("empty audio signal")
        chunks = np.array_split(signal.astype(np.float32), num_windows)
        feats = np.empty((num_windows, self.width), dtype=np.float32)
        for i, chunk in enumerate(chunks):
            if chunk.size == 0:
                chunk = np.zeros(4, dtype=np.float32)
            spectrum = np.abs(np.fft.rfft(chunk, n=2 * self.BANDS))[:self.BANDS]
            norm = np.linalg.norm(spectrum) + 1e-8
            stats = np.array([chunk.mean(), chunk.std(),
                              float(np.mean(np.abs(np.diff(np.sign(chunk)))) if
                                    chunk.size > 1 else 0.0)], dtype=np.float32)
            feats[i] = np.concatenate([spectrum / norm, stats]) @ self._proj
        return feats


class HfTextEmbedder:
    """bert-style embedding-layer extraction via transformers (cached weights)."""

    def __init__(self, name: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise BackboneUnavailable(f"transformers/torch not installed: {exc}") from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(name, local_files_only=True)
            model = AutoModel.from_pretrained(name, local_files_only=True)
        except Exception as exc:
            raise BackboneUnavailable(f"no cached weights for {name!r}: {exc}") from exc
        self._torch = torch
        self._embeddings = model.get_input_embeddings()
        model.eval()
        self.name = name
        self.width = int(self._embeddings.weight.shape[1])
        self.kind = "pretrained"

    def embed(self, text: str, max_tokens: int) -> tuple[list[str], np.ndarray]:
        enc = self._tokenizer(text, truncation=True, max_length=max_tokens + 2)
        ids = enc["input_ids"]
        tokens = self._tokenizer.convert_ids_to_tokens(ids)[1:-1][:max_tokens]
        keep = ids[:1 + len(tokens)]                       # [CLS] + tokens
        with self._torch.no_grad():
            vecs = self._embeddings(self._torch.tensor(keep)).numpy()
        return tokens, vecs.astype(np.float32)

    def token_vector(self, token: str) -> np.ndarray:
        token_id = self._tokenizer.convert_tokens_to_ids(token)
        with self._torch.no_grad():
            return self._embeddings(self._torch.tensor([token_id]))[0] \
                .numpy().astype(np.float32)


class TorchvisionImageEncoder:
    """swin last-hidden-layer features (pooled) via torchvision."""

    def __init__(self, name: str):
        try:
            import torch
            import torchvision.models as tvm
            from torchvision.models import Swin_B_Weights, Swin_T_Weights
        except ImportError as exc:
            raise BackboneUnavailable(f"torchvision/torch not installed: {exc}") from exc
        weights = {"swin_b": ("swin_b", "Swin_B_Weights"),
                   "swin_t": ("swin_t", "Swin_T_Weights")}.get(name)
        if weights is None:
            raise BackboneUnavailable(f"unknown video backbone {name!r}")
        try:
            ctor = getattr(tvm, weights[0])
            weight_enum = {"Swin_B_Weights": Swin_B_Weights,
                           "Swin_T_Weights": Swin_T_Weights}[weights[1]].IMAGENET1K_V1
            model = ctor(weights=weight_enum)
        except Exception as exc:
            raise BackboneUnavailable(f"no cached weights for {name!r}: {exc}") from exc
        self._torch = torch
        model.head = torch.nn.Identity()     # keep the last hidden layer output
        model.eval()
        self._model = model
        self._preprocess = weight_enum.transforms()
        self.name = name
        self.width = VIDEO_WIDTHS[name]
        self.kind = "pretrained"

    def encode_frame(self, image) -> np.ndarray:
        with self._torch.no_grad():
            batch = self._preprocess(image.convert("RGB")).unsqueeze(0)
            return self._model(batch)[0].numpy().astype(np.float32)


class HfAudioEncoder:
    """wav2vec2 last-hidden-layer features via transformers (cached weights)."""

    SAMPLE_RATE = 16_000

    def __init__(self, name: str):
        try:
            import torch
            from transformers import Wav2Vec2Model
        except ImportError as exc:
            raise BackboneUnavailable(f"transformers/torch not installed: {exc}") from exc
        try:
            model = Wav2Vec2Model.from_pretrained(f"facebook/{name}",
                                                  local_files_only=True)
        except Exception as exc:
            raise BackboneUnavailable(f"no cached weights for {name!r}: {exc}") from exc
        self._torch = torch
        model.eval()
        self._model = model
        self.name = name
        self.width = AUDIO_WIDTHS[name]
        self.kind = "pretrained"

    def encode_windows(self, signal: np.ndarray, num_windows: int) -> np.ndarray:
        with self._torch.no_grad():
            wav = self._torch.tensor(signal, dtype=self._torch.float32).unsqueeze(0)
            hidden = self._model(wav).last_hidden_state[0].numpy()
        # average the frame states into the requested number of windows
        chunks = np.array_split(hidden, num_windows)
        return np.stack([c.mean(axis=0) if len(c) else np.zeros(self.width)
                         for c in chunks]).astype(np.float32)


def _resolve(backend: str, real_ctor, stub_ctor, name: str):
    if backend == "offline":
        return stub_ctor(name)
    try:
        return real_ctor(name)
    except BackboneUnavailable:
        if backend == "real":
            raise
        return stub_ctor(name)


def resolve_text(name: str, backend: str = "auto"):
    return _resolve(backend, HfTextEmbedder, HashTextEmbedder, name)


def resolve_video(name: str, backend: str = "auto"):
    return _resolve(backend, TorchvisionImageEncoder, HashImageEncoder, name)


def resolve_audio(name: str, backend: str = "auto"):
    return _resolve(backend, HfAudioEncoder, HashAudioEncoder, name)
