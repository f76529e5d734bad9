"""Shared fixtures: IDX file writers and a synthetic MNIST-like corpus."""
import struct

import numpy as np
import pytest


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a (n, rows, cols) uint8 array in MNIST IDX image format."""
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x00000803, n, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, digits: np.ndarray) -> None:
    """Write a (n,) uint8 array in MNIST IDX label format."""
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", 0x00000801, len(digits)))
        fh.write(digits.astype(np.uint8).tobytes())


def make_digit_corpus(n: int, seed: int, noise: float = 1.0, side: int = 28):
    """MNIST-shaped synthetic digits: per-digit template plus pixel noise.

    Stands in for the real IDX files (not redistributable here); the task is
    learnable but not trivially separable, so probe pipelines behave like
    they do on real data.
    """
    rng = np.random.default_rng(seed)
    templates = np.random.default_rng(1234).uniform(0, 1, size=(10, side, side))
    digits = rng.integers(0, 10, n).astype(np.uint8)
    images = templates[digits] + noise * rng.standard_normal((n, side, side))
    images = np.clip(images, 0.0, 1.0)
    return (images * 255).astype(np.uint8), digits


@pytest.fixture
def mnist_like_files(tmp_path):
    """Small synthetic train/test IDX quadruple; returns the four paths."""
    paths = {}
    for split, n, seed in (("train", 600, 0), ("test", 400, 1)):
        images, digits = make_digit_corpus(n, seed)
        img_path = tmp_path / f"{split}-images-idx3-ubyte"
        lab_path = tmp_path / f"{split}-labels-idx1-ubyte"
        write_idx_images(img_path, images)
        write_idx_labels(lab_path, digits)
        paths[split] = (img_path, lab_path)
    return paths
