"""hashlab: trainable compact binary codes for binary feature descriptors.

Train a compound hash function on a corpus of fixed-length binary
descriptors, compress each descriptor to a short code, and measure how much
nearest-neighbour search precision the compression costs compared with
simply truncating the descriptor.
"""

from hashlab.bits import (
    MAX_LENGTH,
    PLUS_MINUS_ONE,
    ZERO_ONE,
    BinaryCode,
    hamming,
    hamming_to_all,
    pack,
    pack_rows,
    to_real,
    to_real_rows,
    truncate,
    truncate_rows,
    unpack,
    unpack_rows,
)
from hashlab.dataset import (
    DatasetFormatError,
    LabeledDataset,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    sample_queries,
    save_dataset,
    split_by_label,
)
from hashlab.evaluation import (
    DEFAULT_QUERY_COUNT,
    EvalReport,
    EvalRow,
    ReportFormatError,
    dataset_fingerprint,
    pivot_report,
    precision_at_1,
    read_report_csv,
    run_sweep,
    truncation_baseline,
    write_pivot_csv,
    write_report_csv,
)
from hashlab.framework import (
    BaseHasher,
    DegenerateDataError,
    KernelHasher,
    LinearHasher,
    ModelFormatError,
    NotFittedError,
    TrainingError,
    TruncationHasher,
    load_model,
    method_registry,
    save_model,
)
from hashlab.supervised import (
    DISSIMILAR,
    ENCODINGS,
    SIMILAR,
    BtsplhHasher,
    FastTreeHasher,
    PairBudgetError,
    SimilarityPairs,
    SplhHasher,
    encode_similarity,
)
from hashlab.unsupervised import (
    DensitySensitiveHasher,
    IsotropicHasher,
    ItqHasher,
    KernelLshHasher,
    RandomHyperplaneHasher,
    SpectralHasher,
    SphericalHasher,
    equalize_variances,
)

__all__ = [
    # binary codes
    "MAX_LENGTH",
    "PLUS_MINUS_ONE",
    "ZERO_ONE",
    "BinaryCode",
    "hamming",
    "hamming_to_all",
    "pack",
    "pack_rows",
    "to_real",
    "to_real_rows",
    "truncate",
    "truncate_rows",
    "unpack",
    "unpack_rows",
    # datasets
    "DatasetFormatError",
    "LabeledDataset",
    "SyntheticConfig",
    "generate_synthetic",
    "load_dataset",
    "sample_queries",
    "save_dataset",
    "split_by_label",
    # estimator framework and serialization
    "BaseHasher",
    "DegenerateDataError",
    "KernelHasher",
    "LinearHasher",
    "ModelFormatError",
    "NotFittedError",
    "TrainingError",
    "TruncationHasher",
    "load_model",
    "method_registry",
    "save_model",
    # unsupervised trainers
    "DensitySensitiveHasher",
    "IsotropicHasher",
    "ItqHasher",
    "KernelLshHasher",
    "RandomHyperplaneHasher",
    "SpectralHasher",
    "SphericalHasher",
    "equalize_variances",
    # supervised trainers and pair encodings
    "DISSIMILAR",
    "ENCODINGS",
    "SIMILAR",
    "BtsplhHasher",
    "FastTreeHasher",
    "PairBudgetError",
    "SimilarityPairs",
    "SplhHasher",
    "encode_similarity",
    # evaluation
    "DEFAULT_QUERY_COUNT",
    "EvalReport",
    "EvalRow",
    "ReportFormatError",
    "dataset_fingerprint",
    "pivot_report",
    "precision_at_1",
    "read_report_csv",
    "run_sweep",
    "truncation_baseline",
    "write_pivot_csv",
    "write_report_csv",
]

__version__ = "0.1.0"
