import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from maco.config import RunConfig
from maco.datagen import SceneSpec, build_vocabulary, generate_corpus
from maco.model import MacoModel


@pytest.fixture(scope="session")
def vocab():
    return build_vocabulary()


@pytest.fixture(scope="session")
def tiny_config():
    """Miniature geometry used by fast model-level tests."""
    return RunConfig(
        image_side=16,
        patch_size=4,
        width=8,
        image_depth=1,
        text_depth=1,
        decoder_depth=1,
        heads=2,
        proj_dim=8,
        max_text_len=10,
        mask_ratio=0.5,
        batch_size=4,
        epochs=2,
        n_train=8,
        n_val=4,
        n_test=4,
        seed=11,
    ).validate()


@pytest.fixture()
def tiny_model(tiny_config, vocab):
    return MacoModel(tiny_config, vocab_size=len(vocab), pad_id=vocab.pad_id, seed=3)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SceneSpec(), 32, seed=909)


def rng(seed=0):
    return np.random.default_rng(seed)
