import os

# keep BLAS single-threaded: matrices are tiny and the acceptance suite
# runs training jobs in parallel worker processes
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from promptfuse.config import TrainConfig
from promptfuse.data import SynthConfig, generate_synthetic
from promptfuse.model import PromptFusionModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TINY_SYNTH = dict(train_size=8, val_size=4, test_size=4,
                  l_t=5, l_v=4, l_a=6, d_v=6, d_a=5, d_t=16, seed=3)
TINY_TRAIN = dict(prompt_len=3, width=8, heads=2, encoder_blocks=2, batch_size=4,
                  eval_batch_size=4)


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_synthetic(SynthConfig(**TINY_SYNTH))


@pytest.fixture
def tiny_model(tiny_dataset):
    """Small float64 model, convenient for gradient checks."""
    return PromptFusionModel(tiny_dataset.manifest, TrainConfig(**TINY_TRAIN),
                             dtype=np.float64)


def make_tiny_model(dtype=np.float64, **overrides):
    dataset = generate_synthetic(SynthConfig(**TINY_SYNTH))
    cfg = TrainConfig(**{**TINY_TRAIN, **overrides})
    return PromptFusionModel(dataset.manifest, cfg, dtype=dtype), dataset
