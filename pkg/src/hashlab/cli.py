"""Command-line front end: generate data, train hashers, evaluate, report.

Every run is reproducible: all randomness flows from explicit seeds, and all
output files are written atomically.  Exit codes separate failure classes —
2 for usage problems, 3 for unreadable or unwritable files, 4 for training
or numeric failures.
"""

from __future__ import annotations

import configparser
import functools
import time
from dataclasses import dataclass, field

import click
import numpy as np

from .dataset import (
    DatasetFormatError,
    LabeledDataset,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    sample_queries,
    save_dataset,
)
from .evaluation import (
    DEFAULT_QUERY_COUNT,
    EvalReport,
    EvalRow,
    ReportFormatError,
    dataset_fingerprint,
    precision_at_1,
    read_report_csv,
    run_sweep,
    truncation_baseline,
    write_pivot_csv,
    write_report_csv,
)
from .framework import (
    BaseHasher,
    ModelFormatError,
    TrainingError,
    TruncationHasher,
    load_model,
    method_registry,
    save_model,
)
from .numeric import rng_from_seed

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_TRAINING = 4

DEFAULT_SWEEP_LENGTHS = (32, 64, 128, 256)


class _ExitError(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _guard(fn):
    """Map library failures onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DatasetFormatError, ModelFormatError, ReportFormatError) as exc:
            raise _ExitError(str(exc), EXIT_IO) from exc
        except OSError as exc:
            raise _ExitError(str(exc), EXIT_IO) from exc
        except (TrainingError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise _ExitError(str(exc), EXIT_TRAINING) from exc
        except configparser.Error as exc:
            raise _ExitError(str(exc), EXIT_USAGE) from exc
        except ValueError as exc:
            raise _ExitError(str(exc), EXIT_USAGE) from exc

    return wrapper


def _trainable_methods() -> dict[str, type]:
    return {
        tag: cls for tag, cls in method_registry().items()
        if hasattr(cls, "fit")
    }


def _resolve_method(tag: str) -> BaseHasher:
    methods = _trainable_methods()
    cls = methods.get(tag)
    if cls is None:
        known = ", ".join(sorted(methods))
        raise click.UsageError(f"unknown method '{tag}'; choose one of: {known}")
    return cls()


def _coerce(text: str, current):
    """Cast a config/flag string to the type of a parameter's default."""
    if isinstance(current, bool):
        return text.lower() in {"1", "true", "yes", "on"}
    if isinstance(current, int) and not isinstance(current, bool):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if current is None:
        if text.lower() == "none":
            return None
        for cast in (int, float):
            try:
                return cast(text)
            except ValueError:
                pass
    return text


def _apply_params(model: BaseHasher, settings: dict[str, str]) -> BaseHasher:
    defaults = model.get_params()
    typed = {}
    for key, text in settings.items():
        if key not in defaults:
            raise click.UsageError(
                f"{model.method_tag} has no parameter '{key}'"
            )
        typed[key] = _coerce(text, defaults[key])
    model.set_params(**typed)
    return model


def _parse_lengths(text: str) -> list[int]:
    try:
        lengths = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.UsageError(f"bad length list '{text}'") from None
    if not lengths:
        raise click.UsageError("length list is empty")
    return lengths


@dataclass
class RunConfig:
    """Declarative sweep description parsed from a key = value file."""

    train: str | None = None
    test: str | None = None
    lengths: list[int] = field(default_factory=lambda: list(DEFAULT_SWEEP_LENGTHS))
    seed: int = 0
    query_count: int = DEFAULT_QUERY_COUNT
    jobs: int = 1
    methods: list[tuple[str, BaseHasher]] = field(default_factory=list)


def parse_run_config(path: str) -> RunConfig:
    """Read a sweep configuration: a [run] section plus [method X] sections."""
    parser = configparser.ConfigParser(interpolation=None)
    with open(path) as handle:
        parser.read_file(handle)
    config = RunConfig()
    if parser.has_section("run"):
        run = parser["run"]
        config.train = run.get("train", config.train)
        config.test = run.get("test", config.test)
        if "lengths" in run:
            config.lengths = _parse_lengths(run["lengths"])
        config.seed = run.getint("seed", config.seed)
        config.query_count = run.getint("query_count", config.query_count)
        config.jobs = run.getint("jobs", config.jobs)
    for section in parser.sections():
        if not section.startswith("method"):
            continue
        parts = section.split(None, 1)
        if len(parts) != 2:
            raise click.UsageError(
                f"method section needs a tag: [{section}]"
            )
        tag = parts[1].strip()
        settings = dict(parser[section])
        name = settings.pop("name", tag)
        config.methods.append((name, _apply_params(_resolve_method(tag), settings)))
    return config


@click.group()
@click.version_option(package_name="hashlab")
def main():
    """Train compact binary hash codes and benchmark search precision."""


@main.command()
@click.option("--landmarks", type=int, default=1000, show_default=True,
              help="number of distinct labels")
@click.option("--per", default="4,8", show_default=True,
              help="descriptors per landmark: COUNT or MIN,MAX")
@click.option("--flip", type=float, default=0.0, show_default=True,
              help="base per-bit flip probability (must stay below 0.5)")
@click.option("--slope", type=float, default=0.0, show_default=True,
              help="extra flip probability per bit position")
@click.option("--length", type=int, default=512, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_guard
def gen(landmarks, per, flip, slope, length, seed, output):
    """Generate a labelled synthetic descriptor dataset (BHDS file)."""
    parts = [int(p) for p in per.split(",")]
    per_landmark = (parts[0], parts[-1]) if len(parts) <= 2 else None
    if per_landmark is None:
        raise click.UsageError(f"bad --per value '{per}'")
    config = SyntheticConfig(
        n_landmarks=landmarks,
        descriptors_per_landmark=per_landmark,
        base_flip_prob=flip,
        flip_prob_slope=slope,
        length=length,
        seed=seed,
    )
    ds = generate_synthetic(config)
    save_dataset(ds, output)
    intra, inter = _distance_summary(ds, seed)
    click.echo(f"records: {len(ds)}")
    click.echo(f"labels: {np.unique(ds.labels).size}")
    click.echo(f"mean intra-label distance: {intra:.1f}")
    click.echo(f"mean inter-label distance: {inter:.1f}")
    click.echo(f"wrote {output}")


def _distance_summary(ds: LabeledDataset, seed: int) -> tuple[float, float]:
    """Mean Hamming distance of sampled same-label and cross-label pairs."""
    rng = rng_from_seed(seed)
    cap = 20_000

    def mean_distance(a: np.ndarray, b: np.ndarray) -> float:
        if a.size == 0:
            return float("nan")
        if a.size > cap:
            pick = rng.choice(a.size, cap, replace=False)
            a, b = a[pick], b[pick]
        diff = np.bitwise_count(ds.packed[a] ^ ds.packed[b])
        return float(diff.sum(axis=1).mean())

    order = np.argsort(ds.labels, kind="stable")
    neighbours = ds.labels[order]
    same = neighbours[:-1] == neighbours[1:]
    intra = mean_distance(order[:-1][same], order[1:][same])

    i = rng.integers(0, len(ds), cap)
    j = rng.integers(0, len(ds), cap)
    differ = ds.labels[i] != ds.labels[j]
    inter = mean_distance(i[differ], j[differ])
    return intra, inter


@main.command()
@click.argument("method")
@click.option("-k", "--code-length", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=None,
              help="override the method's random seed")
@click.option("-i", "--input", "input_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--pairs", "pair_encoding", default=None,
              help="pair encoding for supervised methods "
                   "(none, hard_triplets, knn, fasthash_budget)")
@click.option("--eta", type=float, default=None,
              help="unsupervised-term weight (splh)")
@click.option("--lam", type=float, default=None,
              help="unsupervised-term weight (btsplh)")
@click.option("-p", "--param", "params", multiple=True, metavar="KEY=VALUE",
              help="extra hyper-parameter; repeatable")
@_guard
def train(method, code_length, seed, input_path, output, pair_encoding,
          eta, lam, params):
    """Train METHOD on a BHDS dataset and write a BHMO model file."""
    model = _resolve_method(method)
    settings: dict[str, str] = {}
    for item in params:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.UsageError(f"--param needs KEY=VALUE, got '{item}'")
        settings[key.strip()] = value.strip()
    if pair_encoding is not None:
        settings["encoding"] = pair_encoding
    if eta is not None:
        settings["eta"] = str(eta)
    if lam is not None:
        settings["lam"] = str(lam)
    if seed is not None:
        settings["seed"] = str(seed)
    settings["code_length"] = str(code_length)
    _apply_params(model, settings)

    ds = load_dataset(input_path)
    started = time.perf_counter()
    model.fit(ds)
    elapsed = time.perf_counter() - started
    save_model(model, output)

    balance = model.bit_balance_
    click.echo(f"trained {method} with {model.code_length} bits "
               f"on {len(ds)} descriptors in {elapsed:.2f}s")
    iterations = getattr(model, "iterations_", None)
    if iterations is not None:
        click.echo(f"iterations: {iterations}")
    click.echo(f"bit balance: min {balance.min():.3f} "
               f"mean {balance.mean():.3f} max {balance.max():.3f}")
    for note in getattr(model, "warnings_", []):
        click.echo(f"warning: {note}", err=True)
    click.echo(f"wrote {output}")


@main.command("eval")
@click.option("--test", "test_path", required=True,
              type=click.Path(dir_okay=False), help="test dataset (BHDS)")
@click.option("-m", "--model", "model_paths", multiple=True,
              type=click.Path(dir_okay=False), help="fitted model; repeatable")
@click.option("--train", "train_path", default=None,
              type=click.Path(dir_okay=False),
              help="training dataset for sweep mode")
@click.option("--sweep", "sweep_lengths", default=None,
              help="comma-separated code lengths; trains every method at each")
@click.option("--method", "method_tags", multiple=True,
              help="method to sweep; repeatable")
@click.option("--config", "config_path", default=None,
              type=click.Path(dir_okay=False),
              help="sweep configuration file")
@click.option("--queries", "query_count", type=int, default=None,
              help=f"query sample size  [default: {DEFAULT_QUERY_COUNT}]")
@click.option("--seed", type=int, default=None,
              help="query sampling seed  [default: 0]")
@click.option("--jobs", type=int, default=None, envvar="HASHLAB_THREADS",
              help="parallel sweep cells  [default: 1; env HASHLAB_THREADS]")
@click.option("--timing", is_flag=True, help="record wall times in the report")
@click.option("--tie-mode", type=click.Choice(["first", "any"]),
              default="first", show_default=True,
              help="nearest-neighbour tie rule: lowest index, or any match")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_guard
def evaluate(test_path, model_paths, train_path, sweep_lengths, method_tags,
             config_path, query_count, seed, jobs, timing, tie_mode, output):
    """Measure search precision and write the report CSV.

    Two modes: pass fitted models with -m to evaluate them next to the
    truncation baseline, or pass --sweep/--method/--config with --train to
    train every method at every length first.
    """
    config = parse_run_config(config_path) if config_path else RunConfig()
    sweep_mode = bool(sweep_lengths or method_tags or config.methods)
    if model_paths and sweep_mode:
        raise click.UsageError("choose either -m models or sweep options")
    if not model_paths and not sweep_mode:
        raise click.UsageError("nothing to evaluate: pass -m or sweep options")

    test = load_dataset(test_path)
    seed = config.seed if seed is None else seed
    query_count = config.query_count if query_count is None else query_count
    jobs = config.jobs if jobs is None else jobs
    any_tie = tie_mode == "any"

    if sweep_mode:
        train_path = train_path or config.train
        if train_path is None:
            raise click.UsageError("sweep mode needs --train (or config train)")
        train_ds = load_dataset(train_path)
        methods = list(config.methods)
        for tag in method_tags:
            methods.append((tag, _resolve_method(tag)))
        if not any(isinstance(proto, TruncationHasher) for _, proto in methods):
            methods.insert(0, ("trunc", TruncationHasher()))
        lengths = (_parse_lengths(sweep_lengths) if sweep_lengths
                   else config.lengths)
        report = run_sweep(
            train_ds, test, methods, lengths,
            query_count=query_count, seed=seed, jobs=max(1, jobs),
            any_tie_matches=any_tie, timing=timing,
        )
    else:
        report = _evaluate_models(
            model_paths, test, query_count, seed, any_tie, timing
        )

    write_report_csv(report, output)
    for row in report:
        shown = "failed" if row.precision is None else f"{row.precision:.4f}"
        click.echo(f"{row.method} @ {row.code_length} bits: {shown}")
        if row.note:
            click.echo(f"  note: {row.note}", err=True)
    click.echo(f"wrote {output}")


def _evaluate_models(model_paths, test, query_count, seed, any_tie, timing):
    """Score fitted models beside the truncation baseline at their lengths."""
    queries = sample_queries(test, min(query_count, len(test)), seed)
    models = [load_model(path) for path in model_paths]
    lengths = sorted({model.code_length for model in models})
    report = truncation_baseline(
        test, lengths, queries=queries, seed=seed,
        any_tie_matches=any_tie, timing=timing,
    )
    stamp = dataset_fingerprint(test)
    for model in models:
        started = time.perf_counter()
        encoded = model.encode_dataset(test)
        score = precision_at_1(encoded, queries, any_tie_matches=any_tie)
        wall = (time.perf_counter() - started) * 1000.0 if timing else None
        report.rows.append(
            EvalRow(model.method_tag, model.code_length, score,
                    queries.size, stamp, seed, wall)
        )
    return report


@main.command()
@click.option("-i", "--input", "input_path", required=True,
              type=click.Path(dir_okay=False), help="report CSV from eval")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@_guard
def report(input_path, output):
    """Pivot a report CSV into a plot-ready series table.

    The output has one row per code length and one column per method, so
    any plotting tool can draw precision against code length directly.
    """
    parsed = read_report_csv(input_path)
    write_pivot_csv(parsed, output)
    methods = parsed.method_names()
    lengths = sorted({row.code_length for row in parsed})
    click.echo(f"{len(lengths)} lengths x {len(methods)} methods")
    click.echo(f"wrote {output}")


if __name__ == "__main__":
    main()
