from __future__ import annotations

import sys

import numpy as np
import pytest

from squashlab.harness.data import export_idx, make_blobs, stratified_split
from squashlab.hqnn import Dataset, Readout, init_model, train


def _mnist_arrays():
    mnist = pytest.importorskip("mlxtend.data")
    images, labels = mnist.mnist_data()
    return images.reshape(-1, 28, 28).astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """The bundled 5000-image MNIST subset as standard IDX files.

    Stratified 80/20 split per digit with a fixed seed, so MNIST-2 has 800
    training and 200 test images.
    """
    images, labels = _mnist_arrays()
    rng = np.random.default_rng(0)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = rng.permutation(np.flatnonzero(labels == digit))
        cut = len(idx) // 5
        test_idx.append(idx[:cut])
        train_idx.append(idx[cut:])
    out = tmp_path_factory.mktemp("mnist")
    for split, idx in (("train", train_idx), ("test", test_idx)):
        idx = np.sort(np.concatenate(idx))
        export_idx(images[idx], labels[idx], out, split)
    return out


@pytest.fixture(scope="session")
def blob_splits():
    return stratified_split(make_blobs(50, 2, 2, 0.3, seed=0), 0.2, seed=0)


@pytest.fixture(scope="session")
def trained_blobs(blob_splits):
    train_set, test_set = blob_splits
    model = init_model(2, 2, Readout.HEAD, hidden=8, seed=0)
    model, history = train(model, train_set, test_set, epochs=20, lr=0.5, seed=0)
    return model, history


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dataset():
    x = np.array([[0.1, -0.2, 0.3], [0.5, 0.4, -0.1], [-0.3, 0.2, 0.0], [0.0, 0.9, -0.5]])
    return Dataset(x, np.array([0, 1, 1, 0]), 2, "tiny")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
