"""Training configuration: a flat, rigid schema with JSON round-tripping."""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from .data import SynthConfig
from .errors import ConfigError
from .pairs import PROMPT_MODES


@dataclass
class TrainConfig:
    # optimization
    batch_size: int = 16
    eval_batch_size: int = 8
    epochs: int = 50
    patience: int = 10
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    # objective
    tau: float = 0.07
    # architecture
    alpha_tv: float = 1.0
    alpha_ta: float = 1.0
    prompt_len: int = 3          # D learnable tokens; also the aligned length L
    width: int = 24              # H, the shared aligned feature width
    token_dim: int = 0           # d_p; 0 means "use the text embedding width"
    encoder_blocks: int = 2
    heads: int = 4
    gate_beta: float = 1.0
    gate_index: int = 0
    # ablations and experiment modes
    sbma_on: bool = True
    map_on: bool = True
    tcl_on: bool = True
    prompt_mode: str = "modality_aware"
    stop_grad_label: bool = False
    pool_prompt: bool = True
    swap_roles: bool = False
    zero_nonverbal: bool = False
    pretrained_embeddings: bool = False

    def validate(self) -> None:
        positive = ("learning_rate", "weight_decay", "tau", "alpha_tv", "alpha_ta",
                    "gate_beta", "beta1", "beta2")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        at_least_one = ("batch_size", "eval_batch_size", "prompt_len", "width",
                        "encoder_blocks", "heads")
        for name in at_least_one:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0 or self.patience < 0:
            raise ConfigError("epochs and patience must be non-negative")
        if self.width % self.heads:
            raise ConfigError(f"width {self.width} not divisible by {self.heads} heads")
        if not 0 <= self.gate_index < self.encoder_blocks:
            raise ConfigError(
                f"gate_index {self.gate_index} outside [0, {self.encoder_blocks})")
        if self.prompt_mode not in PROMPT_MODES:
            raise ConfigError(f"prompt_mode {self.prompt_mode!r} not one of {PROMPT_MODES}")
        if self.tcl_on and self.batch_size < 2:
            warnings.warn("NT-Xent with batch_size < 2 has no negatives; "
                          "the contrastive term will be zero", stacklevel=2)


_SCHEMAS = {"train": TrainConfig, "synth": SynthConfig}


def _coerce_value(name: str, raw, target_type):
    if target_type is bool:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.lower() in ("true", "false", "1", "0"):
            return raw.lower() in ("true", "1")
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if target_type is int:
        if isinstance(raw, bool) or (not isinstance(raw, int) and not
                                     (isinstance(raw, str) and raw.lstrip("-").isdigit())):
            raise ConfigError(f"{name}: expected an integer, got {raw!r}")
        return int(raw)
    if target_type is float:
        try:
            if isinstance(raw, bool):
                raise TypeError
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    if target_type is str:
        return str(raw)
    return raw


def config_from_dict(kind: str, values: dict):
    """Build a config dataclass, rejecting unknown keys and bad types."""
    cls = _SCHEMAS[kind]
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    types = {"int": int, "float": float, "str": str, "bool": bool}
    cleaned = {}
    for key, raw in values.items():
        if key not in fields:
            raise ConfigError(f"unknown {kind} config key {key!r}")
        cleaned[key] = _coerce_value(key, raw, types.get(fields[key], None))
    cfg = cls(**cleaned)
    cfg.validate()
    return cfg


def load_config(kind: str, path=None, overrides: dict | None = None):
    """Config from an optional JSON file plus `--set` style overrides."""
    values: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        values.update(doc)
    if overrides:
        values.update(overrides)
    return config_from_dict(kind, values)


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def parse_overrides(pairs: list[str]) -> dict:
    """Parse repeated `key=value` strings (dotted keys collapse to the leaf)."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        key = key.split(".")[-1].strip()
        out[key] = value.strip()
    return out
