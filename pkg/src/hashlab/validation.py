"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from hashlab import bits
from hashlab.bits import BinaryCode
from hashlab.dataset import LabeledDataset


def as_bit_matrix(X) -> np.ndarray:
    """Coerce estimator input to an (n, length) uint8 0/1 matrix.

    Accepts a LabeledDataset, a 2-D array of 0/1 values, or a sequence of
    equal-length BinaryCode objects.
    """
    if isinstance(X, LabeledDataset):
        return X.unpack_bits()
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], BinaryCode):
        return LabeledDataset.from_codes(X, np.zeros(len(X))).unpack_bits()
    m = np.asarray(X)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("expected a non-empty 2-D bit matrix")
    bits._check_length(m.shape[1])
    if not np.isin(m, (0, 1)).all():
        raise ValueError("descriptor matrix must contain only 0 and 1")
    return m.astype(np.uint8)


def labels_from(X, y) -> np.ndarray | None:
    """Labels for a training input: explicit y wins, else dataset labels."""
    if y is not None:
        y = np.asarray(y, dtype=np.int64)
        if y.ndim != 1:
            raise ValueError("labels must be 1-D")
        return y
    if isinstance(X, LabeledDataset):
        return X.labels.copy()
    return None


def check_code_length(code_length: int, input_dim: int | None = None) -> int:
    code_length = int(code_length)
    bits._check_length(code_length)
    if input_dim is not None and code_length > input_dim:
        raise ValueError(
            f"code length {code_length} exceeds descriptor length {input_dim}"
        )
    return code_length
