"""Prompt-conditioned multimodal fusion with token-level contrastive learning.

The package trains a small classifier over (text ids, video features, audio
features) bundles: nonverbal features are aligned to a set of learnable
tokens, fused into a prompt by cross-modality attention, spliced into the
token sequence next to a [MASK] slot, and refined by a shared encoder whose
normal branch also receives a bounded nonverbal shift. Training combines
cross-entropy on the pooled tokens with NT-Xent between the refined [MASK]
token and the refined label token of an augmented twin sequence.
"""

from .config import TrainConfig
from .data import (Dataset, DatasetManifest, ModalityBundle, SynthConfig,
                   generate_synthetic)
from .archive import (read_feature_archive, validate_feature_archive,
                      write_feature_archive)
from .estimator import PromptFusionClassifier
from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .model import PromptFusionModel
from .tensor import Param, Tensor, grad_check
from .trainer import Checkpoint, evaluate, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "Dataset",
    "DatasetManifest",
    "MetricsReport",
    "ModalityBundle",
    "Param",
    "PromptFusionClassifier",
    "PromptFusionModel",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "compute_metrics",
    "confusion_matrix",
    "evaluate",
    "generate_synthetic",
    "grad_check",
    "load_checkpoint",
    "read_feature_archive",
    "save_checkpoint",
    "train",
    "validate_feature_archive",
    "write_feature_archive",
]
