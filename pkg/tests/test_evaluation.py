"""Scan precision, sweeps, and report files against brute-force oracles."""

import numpy as np
import pytest
from helpers import make_dataset

from hashlab import bits
from hashlab.dataset import LabeledDataset, sample_queries
from hashlab.evaluation import (
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
from hashlab.framework import TruncationHasher
from hashlab.unsupervised import ItqHasher, KernelLshHasher


def quadratic_precision(ds, queries, any_tie=False):
    """Independent double-loop scan with the same tie conventions."""
    total = 0
    for q in queries:
        best, tied = None, []
        for j in range(len(ds)):
            if j == q:
                continue
            d = bits.hamming(ds.descriptor(q), ds.descriptor(j))
            if best is None or d < best:
                best, tied = d, [j]
            elif d == best:
                tied.append(j)
        if any_tie:
            total += any(ds.labels[j] == ds.labels[q] for j in tied)
        else:
            total += ds.labels[tied[0]] == ds.labels[q]
    return total / len(queries)


def random_instance(seed, n, length=24):
    rng = np.random.default_rng(seed)
    x = (rng.random((n, length)) < 0.5).astype(np.uint8)
    labels = rng.integers(0, max(2, n // 6), n)
    return LabeledDataset(bits.pack_rows(x), length, labels)


class TestPrecisionAt1:
    def test_two_elements_same_label(self):
        ds = random_instance(0, 2)
        ds = LabeledDataset(ds.packed, ds.length, np.array([4, 4]))
        assert precision_at_1(ds, [0, 1]) == 1.0

    def test_two_elements_different_labels(self):
        ds = random_instance(0, 2)
        ds = LabeledDataset(ds.packed, ds.length, np.array([4, 5]))
        assert precision_at_1(ds, [0, 1]) == 0.0

    def test_matches_quadratic_oracle_exactly(self):
        for seed, n in [(1, 60), (2, 121), (3, 250), (4, 37), (5, 180)]:
            ds = random_instance(seed, n)
            queries = np.arange(n)
            assert precision_at_1(ds, queries) == quadratic_precision(ds, queries)

    def test_any_tie_mode_matches_quadratic_oracle(self):
        for seed, n in [(6, 90), (7, 150)]:
            ds = random_instance(seed, n, length=12)  # short codes force ties
            queries = np.arange(n)
            assert precision_at_1(
                ds, queries, any_tie_matches=True
            ) == quadratic_precision(ds, queries, any_tie=True)

    def test_tie_breaks_to_the_lower_index(self):
        rows = np.zeros((4, 8), np.uint8)
        rows[1, 6:] = 1  # distance 2, wrong label
        rows[2, 4:6] = 1  # distance 2, right label
        rows[3, :] = 1
        ds = LabeledDataset(bits.pack_rows(rows), 8, np.array([0, 1, 0, 0]))
        assert precision_at_1(ds, [0]) == 0.0
        assert precision_at_1(ds, [0], any_tie_matches=True) == 1.0

    def test_the_query_itself_is_excluded(self):
        rows = np.zeros((3, 8), np.uint8)
        rows[1, 0] = 1
        rows[2, :4] = 1
        ds = LabeledDataset(bits.pack_rows(rows), 8, np.array([0, 1, 1]))
        # without self-exclusion every query would score 1.0 trivially
        assert precision_at_1(ds, [0]) == 0.0

    def test_empty_query_list_rejected(self):
        ds = random_instance(0, 5)
        with pytest.raises(ValueError, match="empty"):
            precision_at_1(ds, [])

    def test_out_of_range_query_rejected(self):
        ds = random_instance(0, 5)
        with pytest.raises(ValueError, match="range"):
            precision_at_1(ds, [5])

    def test_single_element_dataset_rejected(self):
        ds = random_instance(0, 2).subset([0])
        with pytest.raises(ValueError, match="two elements"):
            precision_at_1(ds, [0])

    def test_wide_codes_cross_the_word_boundary(self):
        # 72 bits = 9 packed bytes, exercising the zero-padded last word
        for seed in (8, 9):
            ds = random_instance(seed, 80, length=72)
            queries = np.arange(80)
            assert precision_at_1(ds, queries) == quadratic_precision(ds, queries)


class TestTruncationBaseline:
    def test_lengths_come_back_ascending(self):
        ds = make_dataset(seed=1)
        report = truncation_baseline(ds, [256, 32, 128, 64], seed=0)
        assert [row.code_length for row in report] == [32, 64, 128, 256]
        assert all(row.method == "trunc" for row in report)

    def test_full_length_equals_raw_precision(self):
        ds = make_dataset(seed=1)
        queries = sample_queries(ds, len(ds), 0)
        report = truncation_baseline(ds, [ds.length], queries=queries)
        assert report.rows[0].precision == precision_at_1(ds, queries)

    def test_noiseless_data_is_perfect_at_every_length(self):
        ds = make_dataset(seed=2, flip=0.0)
        report = truncation_baseline(ds, [32, 64, 128, 256, 512], seed=0)
        assert [row.precision for row in report] == [1.0] * 5

    def test_length_beyond_descriptor_rejected(self):
        ds = make_dataset(seed=1)
        with pytest.raises(ValueError, match="range"):
            truncation_baseline(ds, [1024])

    def test_wall_time_only_recorded_when_asked(self):
        ds = make_dataset(seed=1)
        plain = truncation_baseline(ds, [32], seed=0)
        timed = truncation_baseline(ds, [32], seed=0, timing=True)
        assert plain.rows[0].wall_ms is None
        assert timed.rows[0].wall_ms >= 0.0


@pytest.fixture(scope="module")
def splits():
    from hashlab.dataset import split_by_label

    return split_by_label(make_dataset(seed=21, landmarks=48), 0.5, seed=0)


class TestRunSweep:
    def test_sweep_matches_truncation_baseline(self, splits):
        train, test = splits
        sweep = run_sweep(
            train, test, [("trunc", TruncationHasher())], [32, 64], seed=5
        )
        base = truncation_baseline(test, [32, 64], seed=5)
        assert [(r.method, r.code_length, r.precision, r.queries, r.seed)
                for r in sweep] == \
               [(r.method, r.code_length, r.precision, r.queries, r.seed)
                for r in base]

    def test_same_seed_repeats_identically(self, splits):
        train, test = splits
        methods = [("trunc", TruncationHasher()), ("itq", ItqHasher(seed=3))]
        a = run_sweep(train, test, methods, [32, 64], seed=1)
        b = run_sweep(train, test, methods, [32, 64], seed=1)
        assert a.rows == b.rows

    def test_single_method_sweep_equals_direct_pipeline(self, splits):
        train, test = splits
        proto = ItqHasher(seed=3)
        sweep = run_sweep(train, test, [("itq", proto)], [48], seed=2)
        queries = sample_queries(test, len(test), 2)
        model = ItqHasher(seed=3, code_length=48).fit(train)
        direct = precision_at_1(model.encode_dataset(test), queries)
        assert sweep.rows[0].precision == direct

    def test_failed_trainer_leaves_a_noted_row(self, splits):
        train, test = splits
        methods = [
            ("trunc", TruncationHasher()),
            ("bad", KernelLshHasher(n_anchors=1)),
        ]
        report = run_sweep(train, test, methods, [32], seed=0)
        good, bad = report.rows
        assert good.precision is not None
        assert bad.precision is None
        assert "DegenerateDataError" in bad.note
        assert bad.method == "bad" and bad.code_length == 32

    def test_row_order_follows_configuration_not_completion(self, splits):
        train, test = splits
        methods = [("itq", ItqHasher(seed=3)), ("trunc", TruncationHasher())]
        report = run_sweep(train, test, methods, [64, 32], seed=0, jobs=4)
        assert [(r.method, r.code_length) for r in report] == [
            ("itq", 32), ("itq", 64), ("trunc", 32), ("trunc", 64)
        ]

    def test_thread_count_does_not_change_results(self, splits):
        train, test = splits
        methods = [("trunc", TruncationHasher()), ("itq", ItqHasher(seed=3))]
        serial = run_sweep(train, test, methods, [32, 64], seed=1, jobs=1)
        parallel = run_sweep(train, test, methods, [32, 64], seed=1, jobs=4)
        assert serial.rows == parallel.rows

    def test_label_overlap_warns(self, splits):
        _, test = splits
        with pytest.warns(UserWarning, match="share"):
            run_sweep(test, test, [("trunc", TruncationHasher())], [32], seed=0)

    def test_empty_method_list_rejected(self, splits):
        train, test = splits
        with pytest.raises(ValueError, match="method"):
            run_sweep(train, test, [], [32])


class TestReportFiles:
    def small_report(self):
        return EvalReport([
            EvalRow("trunc", 32, 0.5, 100, "abc", 7),
            EvalRow("trunc", 64, 0.75, 100, "abc", 7),
            EvalRow("itq", 32, 0.625, 100, "abc", 7),
            EvalRow("itq", 64, None, 100, "abc", 7, note="TrainingError: x"),
        ])

    def test_round_trip_preserves_rows(self, tmp_path):
        path = str(tmp_path / "r.csv")
        write_report_csv(self.small_report(), path)
        back = read_report_csv(path)
        for orig, read in zip(self.small_report(), back):
            assert (orig.method, orig.code_length, orig.precision,
                    orig.queries, orig.seed, orig.wall_ms, orig.note) == \
                   (read.method, read.code_length, read.precision,
                    read.queries, read.seed, read.wall_ms, read.note)

    def test_exact_file_layout(self, tmp_path):
        path = str(tmp_path / "r.csv")
        write_report_csv(EvalReport([EvalRow("itq", 32, 0.25, 10, "f", 3)]), path)
        expected = (
            "method,code_length,precision_at_1,queries,seed,wall_ms,note\n"
            "itq,32,0.250000,10,3,,\n"
        )
        assert (tmp_path / "r.csv").read_text() == expected

    def test_rewrite_is_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        write_report_csv(self.small_report(), a)
        write_report_csv(self.small_report(), b)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("method,precision\nitq,0.5\n")
        with pytest.raises(ReportFormatError, match="header"):
            read_report_csv(str(path))

    def test_short_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "method,code_length,precision_at_1,queries,seed,wall_ms,note\n"
            "itq,32,0.5\n"
        )
        with pytest.raises(ReportFormatError, match="fields"):
            read_report_csv(str(path))

    def test_unparseable_number_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "method,code_length,precision_at_1,queries,seed,wall_ms,note\n"
            "itq,thirty,0.5,10,0,,\n"
        )
        with pytest.raises(ReportFormatError, match="bad report row"):
            read_report_csv(str(path))

    def test_row_invariants_enforced(self):
        with pytest.raises(ValueError, match="precision"):
            EvalRow("m", 32, 1.5, 10, "f", 0)
        with pytest.raises(ValueError, match="note"):
            EvalRow("m", 32, None, 10, "f", 0)
        with pytest.raises(ValueError, match="query"):
            EvalRow("m", 32, 0.5, 0, "f", 0)


class TestPivot:
    def test_three_methods_by_four_lengths(self):
        rows = [
            EvalRow(m, k, 0.05 * i, 10, "f", 0)
            for i, (m, k) in enumerate(
                (m, k) for m in ("a", "b", "c") for k in (32, 64, 128, 256)
            )
        ]
        lengths, names, table = pivot_report(EvalReport(rows))
        assert lengths == [32, 64, 128, 256]
        assert names == ["a", "b", "c"]
        assert len(table) == 4 and all(len(r) == 3 for r in table)
        assert table[0] == [0.0, pytest.approx(0.2), pytest.approx(0.4)]

    def test_hand_pivot_equality(self):
        report = EvalReport([
            EvalRow("x", 64, 0.5, 10, "f", 0),
            EvalRow("y", 32, 0.25, 10, "f", 0),
            EvalRow("x", 32, 1.0, 10, "f", 0),
        ])
        assert pivot_report(report) == (
            [32, 64], ["x", "y"], [[1.0, 0.25], [0.5, None]]
        )

    def test_repeated_cells_average(self):
        report = EvalReport([
            EvalRow("x", 32, 0.5, 10, "f", 0),
            EvalRow("x", 32, 0.7, 10, "f", 1),
        ])
        _, _, table = pivot_report(report)
        assert table[0][0] == pytest.approx(0.6)

    def test_failed_cells_stay_empty(self):
        report = EvalReport([
            EvalRow("x", 32, None, 10, "f", 0, note="TrainingError: x"),
        ])
        assert pivot_report(report)[2] == [[None]]

    def test_single_method_series_file(self, tmp_path):
        report = EvalReport([
            EvalRow("itq", 32, 0.25, 10, "f", 0),
            EvalRow("itq", 64, 0.5, 10, "f", 0),
        ])
        path = tmp_path / "series.csv"
        write_pivot_csv(report, str(path))
        assert path.read_text() == "code_length,itq\n32,0.250000\n64,0.500000\n"


class TestFingerprint:
    def test_stable_and_content_sensitive(self):
        ds = make_dataset(seed=1)
        other = make_dataset(seed=2)
        assert dataset_fingerprint(ds) == dataset_fingerprint(ds)
        assert dataset_fingerprint(ds) != dataset_fingerprint(other)

    def test_label_changes_alter_the_fingerprint(self):
        ds = make_dataset(seed=1)
        relabeled = LabeledDataset(ds.packed, ds.length, ds.labels + 1)
        assert dataset_fingerprint(ds) != dataset_fingerprint(relabeled)
