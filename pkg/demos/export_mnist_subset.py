"""Write mlxtend's bundled 5000-image MNIST subset as IDX files.

Usage: ``python3 demos/export_mnist_subset.py DIR``. Needs ``mlxtend``
(installed by the ``test`` extra). The split is stratified 80/20 per digit
with seed 0, the same split the test suite uses.
"""
import sys

import numpy as np
from mlxtend.data import mnist_data

from squashlab.harness.data import export_idx

out = sys.argv[1] if len(sys.argv) > 1 else "data/mnist"
images, labels = mnist_data()
images = images.reshape(-1, 28, 28).astype(np.uint8)
labels = labels.astype(np.uint8)
rng = np.random.default_rng(0)
train_idx, test_idx = [], []
for digit in range(10):
    idx = rng.permutation(np.flatnonzero(labels == digit))
    test_idx.append(idx[:len(idx) // 5])
    train_idx.append(idx[len(idx) // 5:])
for split, idx in (("train", train_idx), ("test", test_idx)):
    idx = np.sort(np.concatenate(idx))
    for path in export_idx(images[idx], labels[idx], out, split):
        print(path)
