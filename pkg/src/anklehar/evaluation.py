"""Leave-one-subject-out benchmark: metrics, fold runs, aggregation, reports.

Report schema version 1.  Output files written by :func:`emit_report`:

``table1.csv``
    model, mean_accuracy, mean_loss, std_accuracy, range_accuracy,
    mean_epochs, n_folds, n_failed.
``folds.csv``
    one row per (model, fold): model, fold, test_subject, accuracy, loss,
    epochs_run, best_epoch, n_test, seed, failed, error.
``plotdata.dat``
    gnuplot whitespace columns ``model fold accuracy loss epochs``, one row
    per successful fold.
``report.json``
    the full :class:`BenchmarkReport`, readable with :meth:`BenchmarkReport.from_json`.

The text files start with ``#`` comment lines carrying the schema version,
tool version, config hash and master seed.  Accuracy is in percent and the
standard deviation over folds is the population one.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .data.dataset import FoldAssignment, WindowedDataset, config_hash, fit_normalizer, make_loso_folds
from .nn.model import ParameterBundle
from .rng import derive_seed
from .trainer import TrainConfig, TrainConfigError, TrainingDivergence, TrainTrace, evaluate, fit
from .zoo import MODEL_NAMES, build_model, resolve_models

SCHEMA_VERSION = 1
NORMALIZATIONS = ("per-fold", "global")


def accuracy(predictions, labels) -> float:
    """Percentage of predictions equal to the labels."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"{predictions.shape} predictions vs {labels.shape} labels")
    if labels.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return 100.0 * float(np.mean(predictions == labels))


def confusion_matrix(predictions, labels, num_classes: int = 4) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError(f"{predictions.shape} predictions vs {labels.shape} labels")
    for arr in (predictions, labels):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"class index outside 0..{num_classes - 1}")
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(m, (labels, predictions), 1)
    return m


def error_reduction(base: float, new: float) -> float:
    """Relative decrease in misclassification rate, in percent.

    ``100 * ((100 - base) - (100 - new)) / (100 - base)`` for accuracies in percent.
    """
    if base >= 100.0:
        raise ValueError("error reduction is undefined for a base accuracy of 100%")
    return 100.0 * (new - base) / (100.0 - base)


@dataclass(frozen=True)
class AggregateStats:
    model: str
    mean_accuracy: float
    std_accuracy: float
    range_accuracy: float
    min_accuracy: float
    max_accuracy: float
    mean_loss: float
    mean_epochs: float
    n_folds: int
    n_failed: int = 0


def aggregate_stats(accuracies, losses, epochs, model: str = "", n_failed: int = 0) -> AggregateStats:
    """Mean, population std and max-min range over successful folds."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.size == 0:
        raise ValueError(f"no successful folds to aggregate for {model or 'model'}")
    # sorting makes the sums independent of fold order
    acc = np.sort(acc)
    loss = np.sort(np.asarray(losses, dtype=np.float64))
    ep = np.sort(np.asarray(epochs, dtype=np.float64))
    return AggregateStats(
        model=model,
        mean_accuracy=float(acc.mean()),
        std_accuracy=float(acc.std()),
        range_accuracy=float(acc[-1] - acc[0]),
        min_accuracy=float(acc[0]),
        max_accuracy=float(acc[-1]),
        mean_loss=float(loss.mean()),
        mean_epochs=float(ep.mean()),
        n_folds=int(acc.size),
        n_failed=n_failed,
    )


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything a fold run depends on besides the dataset."""

    train: TrainConfig = field(default_factory=TrainConfig)
    normalization: str = "per-fold"
    dropout_rate: float = 0.3

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise TrainConfigError(f"normalization must be one of {NORMALIZATIONS}")

    @property
    def master_seed(self) -> int:
        return self.train.master_seed

    def to_dict(self) -> dict:
        return {"train": self.train.to_dict(), "normalization": self.normalization,
                "dropout_rate": self.dropout_rate}

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkConfig":
        return cls(TrainConfig(**doc.get("train", {})), doc.get("normalization", "per-fold"),
                   doc.get("dropout_rate", 0.3))

    def hash(self) -> str:
        return config_hash(self.to_dict())


@dataclass
class FoldReport:
    model: str
    fold: int
    test_subject: int
    accuracy: float | None  # None for a failed fold
    loss: float | None
    epochs_run: int
    best_epoch: int
    confusion: list
    n_test: int
    wall_time: float
    config_hash: str
    seed: int
    failed: bool = False
    error: str = ""

    def without_timing(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d


def fold_seed(master_seed: int, model: str, fold: int) -> int:
    return derive_seed(master_seed, model, fold)


def split_fold(dataset: WindowedDataset, fold: FoldAssignment):
    """(train, test) subsets; raises if any window leaks across the split."""
    test_mask = dataset.subjects == fold.test_subject
    train_mask = np.isin(dataset.subjects, fold.train_subjects)
    train, test = dataset.select(train_mask), dataset.select(test_mask)
    if set(train.subjects.tolist()) & set(test.subjects.tolist()):
        raise AssertionError("train and test windows share a subject")
    if not np.all(test.subjects == fold.test_subject):
        raise AssertionError("test window from a training subject")
    return train, test


@dataclass
class FoldResult:
    report: FoldReport
    params: ParameterBundle | None
    normalizer: object
    trace: TrainTrace | None


def train_fold(model: str, fold: FoldAssignment, dataset: WindowedDataset, config: BenchmarkConfig) -> FoldResult:
    """Fit one model on one fold and evaluate it on the held-out subject.

    A divergent or unusable fold yields a report with ``failed=True``.
    """
    spec = build_model(model, config.dropout_rate)
    seed = fold_seed(config.master_seed, model, fold.index)
    train, test = split_fold(dataset, fold)
    if config.normalization == "per-fold":
        norm = fit_normalizer(train.x, f"fold {fold.index}: subjects {list(fold.train_subjects)}")
    else:
        norm = fit_normalizer(dataset.x, "all subjects (global)")
    chash = config.hash()
    start = time.perf_counter()
    try:
        trace, params = fit(spec, norm.apply(train.x), train.onehot(), config.train, seed=seed)
        _, loss, pred = evaluate(spec, params, norm.apply(test.x), test.onehot())
    except (TrainingDivergence, TrainConfigError) as exc:
        report = FoldReport(model, fold.index, fold.test_subject, None, None, 0, 0, [], len(test),
                            time.perf_counter() - start, chash, seed, failed=True, error=str(exc))
        return FoldResult(report, None, norm, None)
    report = FoldReport(
        model=model,
        fold=fold.index,
        test_subject=fold.test_subject,
        accuracy=accuracy(pred, test.labels),
        loss=loss,
        epochs_run=trace.epochs_run,
        best_epoch=trace.best_epoch,
        confusion=confusion_matrix(pred, test.labels).tolist(),
        n_test=len(test),
        wall_time=time.perf_counter() - start,
        config_hash=chash,
        seed=seed,
    )
    return FoldResult(report, params, norm, trace)


def run_fold(model: str, fold: FoldAssignment, dataset: WindowedDataset, config: BenchmarkConfig) -> FoldReport:
    return train_fold(model, fold, dataset, config).report


@dataclass
class BenchmarkReport:
    folds: list[FoldReport]
    aggregates: dict[str, AggregateStats]
    error_reduction: dict[str, dict[str, float]]
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "folds": [asdict(f) for f in self.folds],
            "aggregates": {k: asdict(v) for k, v in self.aggregates.items()},
            "error_reduction": self.error_reduction,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkReport":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {doc.get('schema_version')}")
        return cls(
            folds=[FoldReport(**f) for f in doc["folds"]],
            aggregates={k: AggregateStats(**v) for k, v in doc["aggregates"].items()},
            error_reduction=doc["error_reduction"],
            provenance=doc["provenance"],
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkReport":
        return cls.from_dict(json.loads(text))

    def models(self) -> list[str]:
        seen = []
        for f in self.folds:
            if f.model not in seen:
                seen.append(f.model)
        return seen


def aggregate_folds(folds: list[FoldReport]) -> dict[str, AggregateStats]:
    """Per-model aggregates over successful folds; models with no success are omitted."""
    out = {}
    for model in dict.fromkeys(f.model for f in folds):
        ok = [f for f in folds if f.model == model and not f.failed]
        failed = sum(1 for f in folds if f.model == model and f.failed)
        if ok:
            out[model] = aggregate_stats([f.accuracy for f in ok], [f.loss for f in ok],
                                         [f.epochs_run for f in ok], model, failed)
    return out


def error_reduction_matrix(aggregates: dict[str, AggregateStats]) -> dict[str, dict[str, float]]:
    """``m[base][new]`` for every pair whose base accuracy is below 100%."""
    m = {}
    for base, a in aggregates.items():
        if a.mean_accuracy >= 100.0:
            continue
        m[base] = {new: error_reduction(a.mean_accuracy, b.mean_accuracy)
                   for new, b in aggregates.items() if new != base}
    return m


def _environment() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "platform": platform.platform(),
            "tool_version": __version__}


def _run_task(args):
    return run_fold(*args)


def run_benchmark(models, dataset: WindowedDataset, config: BenchmarkConfig, jobs: int = 1) -> BenchmarkReport:
    """Every (model, LOSO fold) pair, then aggregates and error reductions.

    Fold seeds depend only on (master seed, model, fold), so ``jobs > 1``
    gives the same report as a serial run apart from wall times.
    """
    models = resolve_models(models)
    folds = make_loso_folds(dataset.subject_ids())
    tasks = [(m, f, dataset, config) for m in models for f in folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_task, tasks))
    else:
        reports = [_run_task(t) for t in tasks]
    reports.sort(key=lambda r: (models.index(r.model), r.fold))
    aggregates = aggregate_folds(reports)
    provenance = {
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "master_seed": config.master_seed,
        "dataset": dataset.provenance,
        "subjects": dataset.subject_ids(),
        "models": models,
        "std": "population",
        "accuracy_units": "percent",
        "n_failed_folds": sum(r.failed for r in reports),
        "environment": _environment(),
    }
    return BenchmarkReport(reports, aggregates, error_reduction_matrix(aggregates), provenance)


def load_reference() -> dict:
    """Published comparison values shipped with the package."""
    return json.loads(resources.files("anklehar").joinpath("reference.json").read_text())


def _header(report: BenchmarkReport) -> str:
    p = report.provenance
    return (f"# schema_version={SCHEMA_VERSION} tool_version={p.get('environment', {}).get('tool_version', '')} "
            f"config_hash={p.get('config_hash', '')} master_seed={p.get('master_seed', '')}\n")


def table1_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    buf.write(_header(report))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "mean_accuracy", "mean_loss", "std_accuracy", "range_accuracy", "mean_epochs",
                "n_folds", "n_failed"])
    for model in report.models():
        a = report.aggregates.get(model)
        if a is None:
            failed = sum(f.failed for f in report.folds if f.model == model)
            w.writerow([model, "", "", "", "", "", 0, failed])
            continue
        w.writerow([model, repr(a.mean_accuracy), repr(a.mean_loss), repr(a.std_accuracy),
                    repr(a.range_accuracy), repr(a.mean_epochs), a.n_folds, a.n_failed])
    return buf.getvalue()


def folds_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    buf.write(_header(report))
    w = csv.writer(buf, lineterminator="\n")
    cols = ["model", "fold", "test_subject", "accuracy", "loss", "epochs_run", "best_epoch", "n_test", "seed",
            "failed", "error"]
    w.writerow(cols)
    for f in report.folds:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(f, c) for c in cols)])
    return buf.getvalue()


def plotdata(report: BenchmarkReport) -> str:
    lines = [_header(report).rstrip("\n"), "# model fold accuracy loss epochs"]
    for f in report.folds:
        if not f.failed:
            lines.append(f"{f.model} {f.fold} {f.accuracy!r} {f.loss!r} {f.epochs_run}")
    return "\n".join(lines) + "\n"


FILENAMES = {"csv": ("table1.csv", "folds.csv"), "json": ("report.json",), "plotdata": ("plotdata.dat",)}


def emit_report(report: BenchmarkReport, out_dir, formats=("csv", "json", "plotdata")) -> list[Path]:
    """Write the requested formats under ``out_dir`` with fixed file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt not in FILENAMES:
            raise ValueError(f"unknown report format {fmt!r}")
        if fmt == "csv":
            contents = (table1_csv(report), folds_csv(report))
        elif fmt == "json":
            contents = (report.to_json(),)
        else:
            contents = (plotdata(report),)
        for name, text in zip(FILENAMES[fmt], contents):
            path = out / name
            path.write_text(text)
            written.append(path)
    return written


def comparison_table(report: BenchmarkReport, reference: dict | None = None) -> str:
    """Measured means next to the published ones; informational only."""
    ref = (reference or load_reference())["table1"]
    lines = [f"{'model':<11} {'acc %':>7} {'ref':>6} {'d acc':>7} {'loss':>7} {'ref':>6} {'d loss':>7} {'folds':>6}"]
    for model in report.models():
        a = report.aggregates.get(model)
        r = ref.get(model)
        if a is None:
            lines.append(f"{model:<11} all folds failed")
            continue
        if r is None:
            lines.append(f"{model:<11} {a.mean_accuracy:7.2f} {'':>6} {'':>7} {a.mean_loss:7.3f}")
            continue
        d_acc, d_loss = a.mean_accuracy - r["accuracy"], a.mean_loss - r["loss"]
        lines.append(f"{model:<11} {a.mean_accuracy:7.2f} {r['accuracy']:6.1f} {d_acc:+7.2f} "
                     f"{a.mean_loss:7.3f} {r['loss']:6.2f} {d_loss:+7.3f} {a.n_folds:>3}/{a.n_folds + a.n_failed}")
    return "\n".join(lines)


__all__ = [
    "AggregateStats", "BenchmarkConfig", "BenchmarkReport", "FoldReport", "MODEL_NAMES", "accuracy",
    "aggregate_stats", "comparison_table", "confusion_matrix", "emit_report", "error_reduction", "run_benchmark",
    "run_fold", "train_fold",
]
