"""Labelled descriptor datasets: synthetic generation, file I/O, splitting.

The on-disk container (BHDS) is little-endian: magic "BHDS", version u16,
descriptor bit length u16, record count u64, then one record per descriptor
of a u64 label followed by ceil(length/8) packed bytes, MSB-first per byte.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from hashlab import bits
from hashlab.bits import BinaryCode
from hashlab.numeric import rng_from_seed

MAGIC = b"BHDS"
VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


class DatasetFormatError(ValueError):
    """A dataset file that cannot be parsed."""


class BadMagicError(DatasetFormatError):
    """Leading magic or version does not identify a readable BHDS file."""


class TruncatedFileError(DatasetFormatError):
    """File ends before the declared records do."""


class InconsistentCountError(DatasetFormatError):
    """Declared record count disagrees with the file contents."""


class LabeledDataset:
    """Uniform-length binary descriptors with non-negative integer labels."""

    def __init__(self, packed: np.ndarray, length: int, labels: np.ndarray):
        length = bits._check_length(length)
        packed = np.asarray(packed, dtype=np.uint8)
        labels = np.asarray(labels, dtype=np.int64)
        if packed.ndim != 2 or packed.shape[1] != (length + 7) // 8:
            raise ValueError("packed matrix shape does not match the bit length")
        if labels.ndim != 1 or labels.shape[0] != packed.shape[0]:
            raise ValueError("labels and descriptors must have equal counts")
        if packed.shape[0] == 0:
            raise ValueError("dataset must contain at least one descriptor")
        if (labels < 0).any():
            raise ValueError("labels must be non-negative")
        packed = packed.copy()
        packed[:, -1] &= bits._tail_mask(length)
        packed.flags.writeable = False
        labels.flags.writeable = False
        self.packed = packed
        self.length = length
        self.labels = labels

    @classmethod
    def from_codes(cls, codes, labels) -> "LabeledDataset":
        codes = list(codes)
        if not codes:
            raise ValueError("dataset must contain at least one descriptor")
        length = codes[0].length
        if any(c.length != length for c in codes):
            raise ValueError("descriptors must share one length")
        return cls(np.stack([c.packed for c in codes]), length, np.asarray(labels))

    def __len__(self) -> int:
        return self.packed.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.length == other.length
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.packed, other.packed)
        )

    def descriptor(self, i: int) -> BinaryCode:
        return BinaryCode(self.packed[i], self.length)

    def unpack_bits(self) -> np.ndarray:
        """All descriptors as an (n, length) 0/1 uint8 matrix."""
        return bits.unpack_rows(self.packed, self.length)

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(self.packed[indices], self.length, self.labels[indices])

    def export_csv(self, path: str) -> None:
        """Write `label,hex_descriptor` rows for auditing."""
        lines = ["label,hex_descriptor"]
        for label, row in zip(self.labels, self.packed):
            lines.append(f"{label},{row.tobytes().hex()}")
        _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


@dataclass(frozen=True)
class SyntheticConfig:
    """Recipe for a landmark-structured random descriptor set.

    Each landmark draws one uniform random centroid descriptor and a count of
    noisy copies from descriptors_per_landmark; bit i of a copy is flipped
    independently with probability min(0.49, base_flip_prob + flip_prob_slope * i),
    so later bits can be configured to carry more noise than earlier bits.
    """

    n_landmarks: int
    descriptors_per_landmark: tuple[int, int]
    base_flip_prob: float = 0.0
    flip_prob_slope: float = 0.0
    length: int = 512
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.descriptors_per_landmark
        if self.n_landmarks < 2:
            raise ValueError("need at least 2 landmarks")
        if not 1 <= lo <= hi:
            raise ValueError("descriptors_per_landmark must satisfy 1 <= min <= max")
        if not 0.0 <= self.base_flip_prob < 0.5:
            raise ValueError("base_flip_prob must be in [0, 0.5)")
        if self.flip_prob_slope < 0.0:
            raise ValueError("flip_prob_slope must be non-negative")
        bits._check_length(self.length)

    def flip_probabilities(self) -> np.ndarray:
        i = np.arange(self.length, dtype=np.float64)
        return np.minimum(0.49, self.base_flip_prob + self.flip_prob_slope * i)


def generate_synthetic(config: SyntheticConfig) -> LabeledDataset:
    """Draw a dataset from the recipe; deterministic for a given seed."""
    rng = rng_from_seed(config.seed)
    lo, hi = config.descriptors_per_landmark
    counts = rng.integers(lo, hi + 1, size=config.n_landmarks)
    centroids = rng.integers(0, 2, size=(config.n_landmarks, config.length), dtype=np.uint8)
    labels = np.repeat(np.arange(config.n_landmarks, dtype=np.int64), counts)
    probs = config.flip_probabilities()

    total = int(counts.sum())
    expanded = np.repeat(centroids, counts, axis=0)
    packed = np.empty((total, (config.length + 7) // 8), dtype=np.uint8)
    for start in range(0, total, 8192):  # chunked to bound the float draw
        stop = min(start + 8192, total)
        flips = rng.random((stop - start, config.length)) < probs
        packed[start:stop] = np.packbits(expanded[start:stop] ^ flips, axis=1)
    return LabeledDataset(packed, config.length, labels)


def _atomic_write_bytes(path: str, payload: bytes) -> None:
    # Write into a sibling temp file then rename, so readers never see a
    # half-written file.
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(ds: LabeledDataset, path: str) -> None:
    """Serialize to a BHDS file (atomic replace on existing paths)."""
    header = _HEADER.pack(MAGIC, VERSION, ds.length, len(ds))
    records = np.empty(
        len(ds),
        dtype=np.dtype([("label", "<u8"), ("desc", "u1", (ds.packed.shape[1],))]),
    )
    records["label"] = ds.labels
    records["desc"] = ds.packed
    _atomic_write_bytes(path, header + records.tobytes())


def load_dataset(path: str) -> LabeledDataset:
    """Parse a BHDS file.

    Raises:
        BadMagicError: wrong magic bytes or unsupported version.
        TruncatedFileError: file shorter than its declared records.
        InconsistentCountError: zero records or trailing bytes.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than a BHDS header")
    magic, version, length, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: not a BHDS file (magic {magic!r})")
    if version != VERSION:
        raise BadMagicError(f"{path}: unsupported BHDS version {version}")
    if not 1 <= length <= bits.MAX_LENGTH:
        raise DatasetFormatError(f"{path}: invalid descriptor length {length}")
    if count == 0:
        raise InconsistentCountError(f"{path}: declared record count is zero")
    nbytes = (length + 7) // 8
    body = blob[_HEADER.size :]
    expected = count * (8 + nbytes)
    if len(body) < expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} record bytes, found {len(body)}"
        )
    if len(body) > expected:
        raise InconsistentCountError(
            f"{path}: {len(body) - expected} trailing bytes after {count} records"
        )
    records = np.frombuffer(
        body, dtype=np.dtype([("label", "<u8"), ("desc", "u1", (nbytes,))])
    )
    labels = records["label"].astype(np.int64)
    if (records["label"] > np.iinfo(np.int64).max).any():
        raise DatasetFormatError(f"{path}: label exceeds the supported range")
    return LabeledDataset(records["desc"], length, labels)


def split_by_label(
    ds: LabeledDataset, train_fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Split into train/test with disjoint label sets.

    Distinct labels are shuffled by the seed, then the cut falls at the first
    prefix whose descriptor share reaches train_fraction (clamped so the test
    side keeps at least one label).

    Raises:
        ValueError: if the dataset has a single distinct label or
            train_fraction is outside (0, 1).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    distinct = np.unique(ds.labels)
    if distinct.size < 2:
        raise ValueError("cannot split a dataset with a single distinct label")
    rng = rng_from_seed(seed)
    order = rng.permutation(distinct.size)
    shuffled = distinct[order]
    counts = np.array([(ds.labels == lab).sum() for lab in shuffled])
    fractions = np.cumsum(counts) / len(ds)
    cut = int(np.argmax(fractions >= train_fraction)) + 1
    cut = min(cut, distinct.size - 1)  # keep the test side non-empty
    train_labels = set(shuffled[:cut].tolist())
    mask = np.array([lab in train_labels for lab in ds.labels.tolist()])
    return ds.subset(np.nonzero(mask)[0]), ds.subset(np.nonzero(~mask)[0])


def sample_queries(
    ds: LabeledDataset, n: int, seed: int, require_mate: bool = True
) -> np.ndarray:
    """Sample query indices uniformly without replacement.

    With require_mate (the default) only elements whose label occurs at least
    twice are eligible, so every query has a correct answer besides itself.
    All eligible indices are returned when n is at least their count.

    Raises:
        ValueError: if n < 1, or require_mate is set and no element is mated.
    """
    if n < 1:
        raise ValueError("query count must be positive")
    if require_mate:
        _, inverse, counts = np.unique(ds.labels, return_inverse=True, return_counts=True)
        eligible = np.nonzero(counts[inverse] >= 2)[0]
        if eligible.size == 0:
            raise ValueError("no element has a same-label mate")
    else:
        eligible = np.arange(len(ds))
    rng = rng_from_seed(seed)
    if n >= eligible.size:
        return eligible.copy()
    return eligible[rng.choice(eligible.size, size=n, replace=False)]
