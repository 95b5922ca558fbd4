"""
Shared fixtures: small mask-compliant codebooks, toy datasets and the default mask
"""
import numpy as np
import pytest

from codebook import CodebookConfig, CodebookManager
from metrics import default_mask
from semantic_codec import generate_dataset

# 64-sample blocks keep an 8-12 MHz sine nearly constant in energy per block
SMALL_FREQ_RANGE = (8.0e6, 12.0e6)
SMALL_VARIANCE = 0.25 / 64


@pytest.fixture(scope="session")
def mask():
    return default_mask()


@pytest.fixture(scope="session")
def small_codebook(mask):
    cb_config = CodebookConfig(block_len=64, num_blocks=4, num_entries=12, freq_range=SMALL_FREQ_RANGE,
                               power_variance=SMALL_VARIANCE, seed=3)
    return CodebookManager.build_codebook(cb_config, mask)


@pytest.fixture(scope="session")
def osdm_codebook(mask):
    cb_config = CodebookConfig(block_len=64, num_blocks=1, num_entries=40, freq_range=SMALL_FREQ_RANGE,
                               power_variance=0.0, seed=5)
    return CodebookManager.build_codebook(cb_config, mask)


@pytest.fixture(scope="session")
def tiny_dataset():
    """4 concepts and 2 relations: a 32-triplet vocabulary"""
    return generate_dataset(concepts=4, relations=2, graph_count=20, triplets_per_graph=3, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
