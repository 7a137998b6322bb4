import sys

import numpy as np
import pytest

from posinduce.datasets import fixture_path
from posinduce.lattice import ChainPotentials


def random_potentials(rng, n_tags, length, scale=2.0, with_inf=False):
    """Random chain log-potentials; optionally forbid a few transitions."""
    trans = rng.normal(scale=scale, size=(n_tags, n_tags))
    if with_inf:
        mask = rng.random((n_tags, n_tags)) < 0.2
        mask[np.arange(n_tags), rng.integers(n_tags, size=n_tags)] = False
        trans[mask] = -np.inf
    return ChainPotentials(
        start=rng.normal(scale=scale, size=n_tags),
        transition=trans,
        stop=rng.normal(scale=scale, size=n_tags),
        emission=rng.normal(scale=scale, size=(length, n_tags)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixture_files():
    names = ("toy.conll", "toy.txt", "toy_tagmap.txt", "toy.clusters", "toy.vec", "toy.bin")
    return {name: fixture_path(name) for name in names}


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
