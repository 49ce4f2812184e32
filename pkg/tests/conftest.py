"""Shared pytest setup: code/ on sys.path, single-threaded BLAS, opt-in slow suites."""

import os
import sys

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

CODE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "code")
sys.path.insert(0, CODE_DIR)

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run acceptance tests marked slow")
    parser.addoption("--runlong", action="store_true", default=False,
                     help="run multi-hour reproductions marked long")


def pytest_collection_modifyitems(config, items):
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    skip_long = pytest.mark.skip(reason="needs --runlong")
    for item in items:
        if "long" in item.keywords and not config.getoption("--runlong"):
            item.add_marker(skip_long)
        elif "slow" in item.keywords and not config.getoption("--runslow"):
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def spectrum_factory():
    """Build a Spectrum from raw levels (sorted, shifted to be nonnegative)."""
    from billiard_spectrum import Spectrum

    def make(levels, **provenance):
        levels = np.sort(np.asarray(levels, dtype=float))
        levels = levels - min(levels.min(), 0.0)
        return Spectrum(levels, levels.size, dict({"source": "test"}, **provenance))

    return make


@pytest.fixture
def cache_dir(tmp_path):
    path = tmp_path / "spectra"
    path.mkdir()
    return str(path)
