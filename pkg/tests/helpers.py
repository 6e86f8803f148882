"""Shared fixtures-by-hand for the test suite."""

import numpy as np

from hashlab.dataset import SyntheticConfig, generate_synthetic


def make_dataset(
    seed=11,
    landmarks=30,
    per_landmark=(4, 8),
    flip=0.05,
    slope=0.0,
    length=512,
):
    cfg = SyntheticConfig(
        n_landmarks=landmarks,
        descriptors_per_landmark=per_landmark,
        base_flip_prob=flip,
        flip_prob_slope=slope,
        length=length,
        seed=seed,
    )
    return generate_synthetic(cfg)


def two_blob_bits(seed=3, n_per=40, length=64, flip=0.03):
    """Two tight clusters: a random centroid and its complement."""
    rng = np.random.default_rng(seed)
    c = (rng.random(length) > 0.5).astype(np.uint8)
    flips = (rng.random((2 * n_per, length)) < flip).astype(np.uint8)
    blob_a = np.bitwise_xor(c, flips[:n_per])
    blob_b = np.bitwise_xor(1 - c, flips[n_per:])
    return np.vstack([blob_a, blob_b])
