"""Shared fixtures: small IDX file pairs and the scikit-learn digits split.

The digits set (8x8, 1797 samples) is the desk-scale stand-in used by the
slower behavioural tests; unit tests use tiny synthetic arrays instead.
"""

from __future__ import annotations

import os

import numpy as np
import pytest

from xbartrain.dataset import Dataset, write_idx_images, write_idx_labels

DIGITS_TRAIN = 1437
DIGITS_SPLIT_SEED = 42

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@pytest.fixture(scope="session")
def digits_data():
    """(train, test) Datasets: 1437/360 split of the 8x8 digits corpus."""
    sklearn_datasets = pytest.importorskip("sklearn.datasets")
    raw = sklearn_datasets.load_digits()
    images = (raw.data / 16.0).astype(np.float32)
    labels = raw.target.astype(np.int64)
    order = np.random.default_rng(DIGITS_SPLIT_SEED).permutation(len(labels))
    images, labels = images[order], labels[order]
    train = Dataset(images[:DIGITS_TRAIN], labels[:DIGITS_TRAIN], split="train")
    test = Dataset(images[DIGITS_TRAIN:], labels[DIGITS_TRAIN:], split="test")
    return train, test


@pytest.fixture(scope="session")
def mnist_dir():
    """Directory with the four classic IDX files, or skip.

    Point XBARTRAIN_MNIST_DIR at a local copy to enable the full-scale
    checks; they are skipped (not faked) when the data is absent.
    """
    root = os.environ.get("XBARTRAIN_MNIST_DIR")
    if not root:
        pytest.skip("XBARTRAIN_MNIST_DIR not set; full-scale MNIST checks need the IDX files")
    missing = [f for f in MNIST_FILES.values() if not os.path.exists(os.path.join(root, f))]
    if missing:
        pytest.skip(f"XBARTRAIN_MNIST_DIR is missing {', '.join(missing)}")
    return root


def make_idx_pair(directory, images, labels):
    """Write (images, labels) as an IDX file pair, returning the two paths."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    img_path = os.path.join(directory, f"{len(labels)}-images-idx3-ubyte")
    lbl_path = os.path.join(directory, f"{len(labels)}-labels-idx1-ubyte")
    write_idx_images(img_path, images)
    write_idx_labels(lbl_path, labels)
    return img_path, lbl_path


@pytest.fixture()
def tiny_idx_pair(tmp_path):
    """Two 4x4 images with known pixel values, as IDX files on disk."""
    rng = np.random.default_rng(11)
    images = rng.integers(0, 256, size=(2, 4, 4)).astype(np.uint8)
    labels = np.array([3, 7], dtype=np.uint8)
    return make_idx_pair(tmp_path, images, labels)
