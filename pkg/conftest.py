"""
Shared Test Fixtures
Seeded synthetic images, a tiny DnCNN bundle and small oracle corpora
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from data.oracle import parse_pattern, synth_inject, synth_real_images, write_oracle_corpus
from models.denoiser import DenoiserTrainConfig, GaussianHighpass, train_dncnn

SMALL_SIZE = 32


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale run (S=128, full step counts)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def highpass():
    return GaussianHighpass(3.0)


@pytest.fixture(scope="session")
def tiny_denoiser():
    """Depth-3, width-4 DnCNN trained for two epochs on 16×16 images"""
    images = synth_real_images(6, 16, seed=11)
    cfg = DenoiserTrainConfig(epochs=2, lr=1e-3, crop=8, n_images=6, batch_size=3, depth=3, width=4, pad=4)
    return train_dncnn(images, cfg, verbose=False)


@pytest.fixture(scope="session")
def checkerboard_sets():
    """(real, generated) 32×32 image lists, 24 each, checkerboard:2 at 4/255"""
    real = synth_real_images(24, SMALL_SIZE, seed=0)
    bases = synth_real_images(24, SMALL_SIZE, seed=1, noise_sigma=0.0)
    generated = synth_inject(bases, parse_pattern("checkerboard:2", amplitude=4.0), seed=2)
    return real, generated


@pytest.fixture(scope="session")
def oracle_manifest(tmp_path_factory):
    """On-disk oracle corpus: 16 real + 16 checkerboard images at 32×32"""
    root = tmp_path_factory.mktemp("oracle")
    return write_oracle_corpus(str(root), parse_pattern("checkerboard:2"), count=16, size=SMALL_SIZE, seed=0)
