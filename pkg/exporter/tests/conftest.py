import json
import math
import wave
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

LABELS = ("complain", "praise", "ask for help", "inform")

TRANSCRIPTS = [
    "you never listen to a word I say",
    "this is honestly the best meal ever",
    "could you give me a hand with this box",
    "the meeting moved to thursday afternoon",
    "I cannot believe you broke it again",
    "what a fantastic catch that was",
    "please help me find my keys",
    "the train leaves from platform two",
]


def write_wav(path: Path, freq: float, seconds: float = 0.3, rate: int = 8000,
              seed: int = 0) -> None:
    t = np.arange(int(seconds * rate)) / rate
    rng = np.random.default_rng(seed)
    signal = 0.6 * np.sin(2 * math.pi * freq * t) + 0.05 * rng.standard_normal(t.size)
    pcm = (np.clip(signal, -1, 1) * 32767).astype(np.int16)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


def write_frames(dirpath: Path, base_color: tuple, count: int = 4, seed: int = 0) -> None:
    dirpath.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        pixels = rng.integers(0, 40, size=(24, 24, 3), dtype=np.uint8)
        pixels = (pixels + np.array(base_color, dtype=np.uint8)).clip(0, 255)
        Image.fromarray(pixels.astype(np.uint8), "RGB").save(dirpath / f"f{i:03d}.png")


def build_corpus(root: Path, count: int = 24) -> Path:
    """A tiny on-disk media corpus plus its JSONL manifest."""
    colors = [(200, 30, 30), (30, 200, 30), (30, 30, 200), (180, 180, 30)]
    freqs = [220.0, 440.0, 660.0, 880.0]
    records = []
    for i in range(count):
        label_idx = i % len(LABELS)
        frames = root / f"clip_{i:03d}"
        write_frames(frames, colors[label_idx], count=3 + i % 4, seed=i)
        audio = root / f"clip_{i:03d}.wav"
        write_wav(audio, freqs[label_idx], seconds=0.25 + 0.05 * (i % 3), seed=i)
        split = "train" if i < count - 8 else ("val" if i < count - 4 else "test")
        records.append({
            "id": f"clip_{i:03d}",
            "text": TRANSCRIPTS[i % len(TRANSCRIPTS)],
            "video": frames.name,
            "audio": audio.name,
            "label": LABELS[label_idx],
            "split": split,
        })
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(json.dumps(r) for r in records), encoding="utf-8")
    return manifest


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return build_corpus(root)
