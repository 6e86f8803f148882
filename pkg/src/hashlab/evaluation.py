"""Precision-at-1 search evaluation: linear scans, length sweeps, reports.

A query scores 1 when its nearest neighbour by Hamming distance (the query
itself excluded) carries the same label.  Distance ties resolve to the lower
index by default; an alternative mode scores 1 when any tied neighbour
matches.  Sweeps share one fixed query sample across every method and code
length so comparisons are paired, and they keep going when a trainer fails,
recording the error in the report row instead.
"""

from __future__ import annotations

import csv
import io
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import clone

from . import bits
from .dataset import LabeledDataset, _atomic_write_bytes, sample_queries
from .framework import BaseHasher, TrainingError

DEFAULT_QUERY_COUNT = 20_000

REPORT_COLUMNS = ("method", "code_length", "precision_at_1", "queries",
                  "seed", "wall_ms", "note")

# cap on scan buffer elements; keeps distance chunks around tens of megabytes
_SCAN_BUDGET = 1 << 23


class ReportFormatError(ValueError):
    """A report CSV does not follow the expected layout."""


@dataclass(frozen=True)
class EvalRow:
    """One measured (method, code length) cell of a report."""

    method: str
    code_length: int
    precision: float | None
    queries: int
    fingerprint: str
    seed: int
    wall_ms: float | None = None
    note: str = ""

    def __post_init__(self):
        if self.precision is not None and not 0.0 <= self.precision <= 1.0:
            raise ValueError("precision must lie in [0, 1]")
        if self.precision is None and not self.note:
            raise ValueError("a failed row must carry an error note")
        if self.queries < 1:
            raise ValueError("query count must be positive")


@dataclass
class EvalReport:
    """An ordered collection of evaluation rows."""

    rows: list[EvalRow] = field(default_factory=list)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def method_names(self) -> list[str]:
        """Method names in first-appearance order."""
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.method, None)
        return list(seen)


def dataset_fingerprint(ds: LabeledDataset) -> str:
    """Short content hash identifying the evaluated dataset."""
    import hashlib

    digest = hashlib.sha256()
    digest.update(np.int64(ds.length).tobytes())
    digest.update(ds.packed.tobytes())
    digest.update(ds.labels.tobytes())
    return digest.hexdigest()[:12]


def _scan_words(packed: np.ndarray) -> np.ndarray:
    """View packed codes as uint64 words, zero-padding to a word boundary."""
    n, n_bytes = packed.shape
    padded_bytes = ((n_bytes + 7) // 8) * 8
    if padded_bytes != n_bytes:
        widened = np.zeros((n, padded_bytes), dtype=np.uint8)
        widened[:, :n_bytes] = packed
        packed = widened
    return np.ascontiguousarray(packed).view(np.uint64)


def precision_at_1(
    codes: LabeledDataset, queries, *, any_tie_matches: bool = False
) -> float:
    """Mean precision-at-1 of a full linear scan for each query index.

    Each query is scored against every other element; the query itself is
    excluded from its own scan.  With any_tie_matches the score is 1 when
    any neighbour at the minimum distance has the query's label; otherwise
    the single neighbour with the lowest index among the tied ones decides.

    Raises:
        ValueError: on an empty query list, an out-of-range index, or a
            dataset with fewer than two elements.
    """
    queries = np.asarray(queries, dtype=np.int64)
    if queries.ndim != 1 or queries.size == 0:
        raise ValueError("query list must be a non-empty index sequence")
    n = len(codes)
    if n < 2:
        raise ValueError("a scan needs at least two elements")
    if queries.min() < 0 or queries.max() >= n:
        raise ValueError("query index out of range")
    words = _scan_words(codes.packed)
    labels = codes.labels
    beyond = codes.length + 1  # larger than any real distance
    chunk = max(1, _SCAN_BUDGET // (n * words.shape[1]))
    hits = 0
    for start in range(0, queries.size, chunk):
        part = queries[start:start + chunk]
        dists = np.bitwise_count(words[part][:, None, :] ^ words[None, :, :])
        dists = dists.sum(axis=2, dtype=np.int64)
        dists[np.arange(part.size), part] = beyond
        if any_tie_matches:
            nearest = dists.min(axis=1)
            match = labels[None, :] == labels[part][:, None]
            hits += int(((dists == nearest[:, None]) & match).any(axis=1).sum())
        else:
            nearest = dists.argmin(axis=1)
            hits += int((labels[nearest] == labels[part]).sum())
    return hits / queries.size


def _check_lengths(lengths, limit: int) -> list[int]:
    out = []
    for k in lengths:
        k = int(k)
        if not 1 <= k <= limit:
            raise ValueError(
                f"code length {k} outside the valid range 1..{limit}"
            )
        out.append(k)
    if not out:
        raise ValueError("at least one code length is required")
    return sorted(out)


def truncation_baseline(
    test: LabeledDataset,
    lengths,
    *,
    queries=None,
    query_count: int = DEFAULT_QUERY_COUNT,
    seed: int = 0,
    any_tie_matches: bool = False,
    timing: bool = False,
) -> EvalReport:
    """Precision of plain bit truncation at each requested length.

    Rows come back sorted by ascending length.  When queries is omitted a
    mated sample of query_count indices (capped at the dataset size) is
    drawn with the seed.
    """
    lengths = _check_lengths(lengths, test.length)
    if queries is None:
        queries = sample_queries(test, min(query_count, len(test)), seed)
    queries = np.asarray(queries, dtype=np.int64)
    stamp = dataset_fingerprint(test)
    rows = []
    for k in lengths:
        started = time.perf_counter()
        shortened = LabeledDataset(
            bits.truncate_rows(test.packed, test.length, k), k, test.labels
        )
        score = precision_at_1(shortened, queries, any_tie_matches=any_tie_matches)
        elapsed = (time.perf_counter() - started) * 1000.0 if timing else None
        rows.append(EvalRow("trunc", k, score, queries.size, stamp, seed, elapsed))
    return EvalReport(rows)


def _sweep_cell(
    prototype: BaseHasher,
    code_length: int,
    train: LabeledDataset,
    test: LabeledDataset,
    queries: np.ndarray,
    any_tie_matches: bool,
) -> tuple[float | None, float, str]:
    started = time.perf_counter()
    try:
        model = clone(prototype)
        model.set_params(code_length=code_length)
        model.fit(train)
        encoded = model.encode_dataset(test)
        score = precision_at_1(encoded, queries, any_tie_matches=any_tie_matches)
        note = ""
    except (TrainingError, ValueError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        score, note = None, f"{type(exc).__name__}: {exc}"
    return score, (time.perf_counter() - started) * 1000.0, note


def run_sweep(
    train: LabeledDataset,
    test: LabeledDataset,
    methods,
    lengths,
    *,
    queries=None,
    query_count: int = DEFAULT_QUERY_COUNT,
    seed: int = 0,
    jobs: int = 1,
    any_tie_matches: bool = False,
    timing: bool = False,
) -> EvalReport:
    """Train each method at each length and measure search precision.

    methods is a sequence of (name, hasher prototype) pairs; every cell
    clones its prototype with the cell's code length, fits it on the train
    split, encodes the test split, and scans one query sample shared by all
    cells.  A failing trainer contributes a row with an empty precision and
    the error text in its note.  With jobs > 1 the cells run on a thread
    pool; row order always follows the configuration order.
    """
    methods = list(methods)
    if not methods:
        raise ValueError("at least one method is required")
    lengths = _check_lengths(lengths, test.length)
    overlap = np.intersect1d(np.unique(train.labels), np.unique(test.labels))
    if overlap.size:
        warnings.warn(
            f"train and test share {overlap.size} labels; "
            "precision will be optimistic",
            stacklevel=2,
        )
    if queries is None:
        queries = sample_queries(test, min(query_count, len(test)), seed)
    queries = np.asarray(queries, dtype=np.int64)
    stamp = dataset_fingerprint(test)

    cells = [
        (name, prototype, k) for name, prototype in methods for k in lengths
    ]

    def work(cell):
        _, prototype, k = cell
        return _sweep_cell(prototype, k, train, test, queries, any_tie_matches)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, cells))
    else:
        outcomes = [work(cell) for cell in cells]

    rows = []
    for (name, _, k), (score, wall, note) in zip(cells, outcomes):
        rows.append(
            EvalRow(name, k, score, queries.size, stamp, seed,
                    wall if timing else None, note)
        )
    return EvalReport(rows)


def write_report_csv(report: EvalReport, path: str) -> None:
    """Write the plot-ready report: one row per (method, length) cell.

    Precision carries six decimal places; the wall_ms field stays empty for
    rows measured without timing, keeping repeat runs byte-identical.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report:
        writer.writerow([
            row.method,
            row.code_length,
            "" if row.precision is None else f"{row.precision:.6f}",
            row.queries,
            row.seed,
            "" if row.wall_ms is None else f"{row.wall_ms:.1f}",
            row.note,
        ])
    _atomic_write_bytes(path, buffer.getvalue().encode())


def read_report_csv(path: str) -> EvalReport:
    """Parse a report CSV back into rows (fingerprints are not stored)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ReportFormatError("report file is empty") from None
        if tuple(header) != REPORT_COLUMNS:
            raise ReportFormatError(
                f"unexpected report header: {','.join(header)}"
            )
        rows = []
        for record in reader:
            if len(record) != len(REPORT_COLUMNS):
                raise ReportFormatError(
                    f"report row has {len(record)} fields, "
                    f"expected {len(REPORT_COLUMNS)}"
                )
            method, k, score, queries, seed, wall, note = record
            try:
                rows.append(
                    EvalRow(
                        method,
                        int(k),
                        None if score == "" else float(score),
                        int(queries),
                        "",
                        int(seed),
                        None if wall == "" else float(wall),
                        note,
                    )
                )
            except ValueError as exc:
                raise ReportFormatError(f"bad report row: {exc}") from exc
    return EvalReport(rows)


def pivot_report(
    report: EvalReport,
) -> tuple[list[int], list[str], list[list[float | None]]]:
    """Arrange rows as a (length x method) precision table.

    Lengths sort ascending; methods keep first-appearance order.  Cells
    covered by several rows (for example one per seed) average; failed and
    absent cells stay empty.
    """
    lengths = sorted({row.code_length for row in report})
    names = report.method_names()
    sums: dict[tuple[str, int], list[float]] = {}
    for row in report:
        if row.precision is not None:
            sums.setdefault((row.method, row.code_length), []).append(row.precision)
    table = [
        [
            (sum(values) / len(values))
            if (values := sums.get((name, k))) else None
            for name in names
        ]
        for k in lengths
    ]
    return lengths, names, table


def write_pivot_csv(report: EvalReport, path: str) -> None:
    """Write the pivoted series table: one column per method."""
    lengths, names, table = pivot_report(report)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["code_length", *names])
    for k, row in zip(lengths, table):
        writer.writerow(
            [k, *("" if cell is None else f"{cell:.6f}" for cell in row)]
        )
    _atomic_write_bytes(path, buffer.getvalue().encode())
