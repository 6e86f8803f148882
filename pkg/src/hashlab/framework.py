"""Estimator base class, hash-function families, and the model container.

Every hasher is an sklearn-style estimator: constructor stores parameters,
fit() learns state into trailing-underscore attributes, transform() maps an
(n, input_dim) bit matrix to an (n, code_length) bit matrix.  The sign rule
is uniform: a real-valued score strictly greater than zero yields bit 1.

Fitted models serialize to BHMO files: little-endian magic "BHMO", version,
method tag, dimensions, bit-mapping byte, then named numpy arrays.  Loading
reproduces bit-identical encodings.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from hashlab import bits, validation
from hashlab.bits import BinaryCode
from hashlab.dataset import LabeledDataset, _atomic_write_bytes
from hashlab.numeric import rng_from_seed

MODEL_MAGIC = b"BHMO"
MODEL_VERSION = 1

_MAPPING_BYTES = {"raw": 0, bits.ZERO_ONE: 1, bits.PLUS_MINUS_ONE: 2}
_BYTE_MAPPINGS = {v: k for k, v in _MAPPING_BYTES.items()}

_REGISTRY: dict[str, type] = {}


class ModelFormatError(ValueError):
    """A model file that cannot be parsed."""


class TrainingError(RuntimeError):
    """A trainer that cannot produce a model from the given data."""


class DegenerateDataError(TrainingError):
    """Training data without usable variance."""


def register(cls):
    """Class decorator wiring a hasher into the save/load registry."""
    if not cls.method_tag:
        raise ValueError(f"{cls.__name__} has no method tag")
    _REGISTRY[cls.method_tag] = cls
    return cls


def method_registry() -> dict[str, type]:
    """All registered hasher classes, keyed by method tag."""
    from . import supervised, unsupervised  # noqa: F401  (fills the registry)

    return dict(_REGISTRY)


class BaseHasher(BaseEstimator, TransformerMixin):
    """Shared encode plumbing; subclasses implement fit and _encode_bits."""

    method_tag = ""
    uses_raw_bits = False  # True for methods that read descriptor bits directly

    def _check_fitted(self):
        if getattr(self, "input_dim_", None) is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted")

    def _check_dim(self, m: np.ndarray):
        if m.shape[1] != self.input_dim_:
            raise ValueError(
                f"descriptor length {m.shape[1]} does not match "
                f"model input dimension {self.input_dim_}"
            )

    def transform(self, X) -> np.ndarray:
        """Encode descriptors to an (n, code_length) uint8 bit matrix."""
        self._check_fitted()
        m = validation.as_bit_matrix(X)
        self._check_dim(m)
        out = self._encode_bits(m)
        return out.astype(np.uint8)

    def encode(self, code: BinaryCode) -> BinaryCode:
        """Encode one descriptor."""
        row = self.transform(np.unpackbits(code.packed)[None, : code.length])
        return bits.pack(row[0])

    def encode_dataset(self, ds: LabeledDataset) -> LabeledDataset:
        """Encode every descriptor, preserving order and labels."""
        codes = bits.pack_rows(self.transform(ds))
        return LabeledDataset(codes, self.code_length, ds.labels)

    # training helpers ----------------------------------------------------

    def _training_bits(self, X, y=None, min_count: int | None = None):
        m = validation.as_bit_matrix(X)
        validation.check_code_length(self.code_length)
        needed = max(self.code_length + 1, min_count or 0)
        if m.shape[0] < needed:
            raise TrainingError(
                f"{self.method_tag}: needs at least {needed} descriptors, got {m.shape[0]}"
            )
        return m, validation.labels_from(X, y)

    def _mapped(self, m: np.ndarray) -> np.ndarray:
        return bits.to_real_rows(m, self.bit_mapping)

    def _center_fit(self, x: np.ndarray) -> np.ndarray:
        if getattr(self, "center", True):
            self.mean_ = x.mean(axis=0)
        else:
            self.mean_ = np.zeros(x.shape[1])
        return x - self.mean_

    def _require_variance(self, xc: np.ndarray):
        if float((xc**2).sum()) <= 1e-12 * xc.shape[0]:
            raise DegenerateDataError(
                f"{self.method_tag}: training data has no variance"
            )

    def _finish_fit(self, m: np.ndarray):
        self.bit_balance_ = self._encode_bits(m).mean(axis=0)
        if not hasattr(self, "warnings_"):
            self.warnings_ = []
        return self

    def _rng(self) -> np.random.Generator:
        return rng_from_seed(getattr(self, "seed", 0))

    def _encode_bits(self, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # serialization hooks -------------------------------------------------

    def _state_arrays(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def _restore_state(self, arrays: dict[str, np.ndarray]) -> None:
        raise NotImplementedError


@register
class TruncationHasher(BaseHasher):
    """Baseline: the code is the first code_length bits of the descriptor."""

    method_tag = "trunc"
    uses_raw_bits = True

    def __init__(self, code_length: int = 64):
        self.code_length = code_length

    def fit(self, X, y=None):
        m = validation.as_bit_matrix(X)
        validation.check_code_length(self.code_length, m.shape[1])
        self.input_dim_ = m.shape[1]
        return self._finish_fit(m)

    def _encode_bits(self, m: np.ndarray) -> np.ndarray:
        return m[:, : self.code_length]

    def _state_arrays(self):
        return {}

    def _restore_state(self, arrays):
        pass


@register
class LinearHasher(BaseHasher):
    """Compound hash of hyperplane functions: bit k = [w_k . x + b_k > 0]."""

    method_tag = "linear"

    def __init__(
        self,
        code_length: int = 64,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    @classmethod
    def from_components(
        cls,
        weights: np.ndarray,
        biases: np.ndarray,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        mean: np.ndarray | None = None,
    ) -> "LinearHasher":
        """Assemble a ready-to-encode model from explicit (w, b) functions."""
        weights = np.asarray(weights, dtype=np.float64)
        biases = np.asarray(biases, dtype=np.float64)
        if weights.ndim != 2 or biases.shape != (weights.shape[1],):
            raise ValueError("expected weights (dim, k) and biases (k,)")
        model = cls(
            code_length=weights.shape[1],
            bit_mapping=bit_mapping,
            center=mean is not None,
        )
        model.input_dim_ = weights.shape[0]
        model.weights_ = weights
        model.biases_ = biases
        model.mean_ = (
            np.zeros(weights.shape[0]) if mean is None else np.asarray(mean, np.float64)
        )
        model.warnings_ = []
        return model

    def _scores(self, m: np.ndarray) -> np.ndarray:
        return (self._mapped(m) - self.mean_) @ self.weights_ + self.biases_

    def _encode_bits(self, m: np.ndarray) -> np.ndarray:
        return self._scores(m) > 0

    def _state_arrays(self):
        return {"weights": self.weights_, "biases": self.biases_}

    def _restore_state(self, arrays):
        self.weights_ = arrays["weights"]
        self.biases_ = arrays["biases"]
        if self.weights_.shape != (self.input_dim_, self.code_length):
            raise ModelFormatError("weight matrix shape mismatch")


@register
class KernelHasher(BaseHasher):
    """Kernelized hash: bit k = [sum_t w_tk * K(anchor_t, x) + b_k > 0].

    The kernel is Gaussian, K(a, x) = exp(-|a - x|^2 / (2 * bandwidth^2)).
    """

    method_tag = "kernel"

    def __init__(
        self,
        code_length: int = 64,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        center: bool = True,
        seed: int = 0,
    ):
        self.code_length = code_length
        self.bit_mapping = bit_mapping
        self.center = center
        self.seed = seed

    @classmethod
    def from_components(
        cls,
        anchors: np.ndarray,
        weights: np.ndarray,
        biases: np.ndarray,
        bandwidth: float,
        bit_mapping: str = bits.PLUS_MINUS_ONE,
        mean: np.ndarray | None = None,
    ) -> "KernelHasher":
        anchors = np.asarray(anchors, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        biases = np.asarray(biases, dtype=np.float64)
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if anchors.ndim != 2 or weights.shape[0] != anchors.shape[0]:
            raise ValueError("expected anchors (t, dim) and weights (t, k)")
        model = cls(
            code_length=weights.shape[1],
            bit_mapping=bit_mapping,
            center=mean is not None,
        )
        model.input_dim_ = anchors.shape[1]
        model.anchors_ = anchors
        model.weights_ = weights
        model.biases_ = biases
        model.bandwidth_ = float(bandwidth)
        model.mean_ = (
            np.zeros(anchors.shape[1]) if mean is None else np.asarray(mean, np.float64)
        )
        model.warnings_ = []
        return model

    def _kernel_values(self, m: np.ndarray) -> np.ndarray:
        x = self._mapped(m) - self.mean_
        d2 = (
            (x**2).sum(axis=1)[:, None]
            - 2.0 * x @ self.anchors_.T
            + (self.anchors_**2).sum(axis=1)
        )
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 / (2.0 * self.bandwidth_**2))

    def _scores(self, m: np.ndarray) -> np.ndarray:
        return self._kernel_values(m) @ self.weights_ + self.biases_

    def _encode_bits(self, m: np.ndarray) -> np.ndarray:
        return self._scores(m) > 0

    def _state_arrays(self):
        return {
            "anchors": self.anchors_,
            "weights": self.weights_,
            "biases": self.biases_,
            "bandwidth": np.array([self.bandwidth_]),
        }

    def _restore_state(self, arrays):
        self.anchors_ = arrays["anchors"]
        self.weights_ = arrays["weights"]
        self.biases_ = arrays["biases"]
        self.bandwidth_ = float(arrays["bandwidth"][0])


# BHMO serialization ------------------------------------------------------

_DTYPE_CODES = {0: "<f8", 1: "<i8", 2: "u1"}
_CODE_FOR_KIND = {"f": 0, "i": 1, "u": 2}


def _encode_array(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    code = _CODE_FOR_KIND.get(arr.dtype.kind)
    if code is None:
        raise ValueError(f"unsupported array dtype {arr.dtype} for {name!r}")
    arr = arr.astype(_DTYPE_CODES[code])
    head = struct.pack("<B", len(name)) + name.encode("ascii")
    head += struct.pack("<BB", code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return head + arr.tobytes()


def save_model(model: BaseHasher, path: str) -> None:
    """Serialize a fitted hasher to a BHMO file (atomic write)."""
    model._check_fitted()
    mapping = "raw" if model.uses_raw_bits else model.bit_mapping
    arrays: dict[str, np.ndarray] = {}
    if not model.uses_raw_bits:
        arrays["mean"] = model.mean_
    balance = getattr(model, "bit_balance_", None)
    if balance is not None:
        arrays["bit_balance"] = np.asarray(balance, dtype=np.float64)
    notes = "\n".join(getattr(model, "warnings_", []))
    if notes:
        arrays["warnings"] = np.frombuffer(notes.encode(), dtype=np.uint8)
    arrays.update(model._state_arrays())

    tag = model.method_tag.encode("ascii")
    blob = MODEL_MAGIC + struct.pack(
        "<HB", MODEL_VERSION, len(tag)
    ) + tag + struct.pack(
        "<HHBH",
        model.input_dim_,
        model.code_length,
        _MAPPING_BYTES[mapping],
        len(arrays),
    )
    blob += b"".join(_encode_array(k, v) for k, v in arrays.items())
    _atomic_write_bytes(path, blob)


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ModelFormatError(f"{self.path}: truncated model file")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path: str) -> BaseHasher:
    """Load a BHMO file back into a ready-to-encode hasher.

    Raises:
        ModelFormatError: wrong magic/version, unknown method tag, or a
            truncated or inconsistent payload.
    """
    # The registry is filled by the method modules at import time.
    from hashlab import supervised, unsupervised  # noqa: F401

    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    if reader.take(4) != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a BHMO file")
    version, tag_len = reader.unpack("<HB")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported BHMO version {version}")
    tag = reader.take(tag_len).decode("ascii")
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise ModelFormatError(f"{path}: unknown method tag {tag!r}")
    input_dim, code_length, mapping_byte, n_arrays = reader.unpack("<HHBH")
    if mapping_byte not in _BYTE_MAPPINGS:
        raise ModelFormatError(f"{path}: unknown bit-mapping byte {mapping_byte}")

    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = reader.unpack("<B")
        name = reader.take(name_len).decode("ascii")
        code, ndim = reader.unpack("<BB")
        if code not in _DTYPE_CODES:
            raise ModelFormatError(f"{path}: unknown dtype code {code}")
        shape = reader.unpack(f"<{ndim}Q") if ndim else ()
        dtype = np.dtype(_DTYPE_CODES[code])
        n_items = int(np.prod(shape)) if shape else 1
        data = reader.take(n_items * dtype.itemsize)
        arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
    if reader.pos != len(reader.blob):
        raise ModelFormatError(f"{path}: trailing bytes after model payload")

    model = cls(code_length=code_length)
    model.input_dim_ = int(input_dim)
    if not model.uses_raw_bits:
        model.bit_mapping = _BYTE_MAPPINGS[mapping_byte]
        model.center = "mean" in arrays
        model.mean_ = arrays.pop("mean", np.zeros(input_dim))
    balance = arrays.pop("bit_balance", None)
    model.bit_balance_ = balance
    notes = arrays.pop("warnings", None)
    model.warnings_ = (
        notes.tobytes().decode().split("\n") if notes is not None else []
    )
    try:
        model._restore_state(arrays)
    except KeyError as exc:
        raise ModelFormatError(f"{path}: missing model array {exc}") from exc
    return model
