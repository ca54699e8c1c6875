"""Command-line entry point: ``anklehar <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 verification
failure, 5 training failure.

Settings come from built-in defaults, then an optional ``--config`` JSON file,
then command-line flags (flags win).  The JSON file may hold any of the keys
of :class:`CliConfig`; ``train`` is an object with :class:`TrainConfig`
fields.  The resolved configuration is written next to every output together
with its hash.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from .data.cache import CacheError, read_cache, write_cache
from .data.dataset import Normalizer, config_hash, ingest_directory, make_loso_folds
from .data.pamap2 import CLASS_NAMES, DataError
from .data.synthetic import generate_synthetic
from .evaluation import (
    BenchmarkConfig,
    BenchmarkReport,
    accuracy,
    comparison_table,
    confusion_matrix,
    emit_report,
    run_benchmark,
    split_fold,
    train_fold,
)
from .nn.gradcheck import run_layer_suites
from .nn.serialize import WeightFileError, load_weights, save_weights
from .search import CnnSearchSpace, dense_family, hybrid_family, solve_conv_architecture
from .trainer import TrainConfig, TrainConfigError, TrainingDivergence, evaluate
from .zoo import EXPECTED_COUNTS, MODEL_NAMES, UnknownModelError, build_model, format_count_table, manifest_json
from .zoo import resolve_models, verify_param_counts

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VERIFY = 4
EXIT_TRAINING = 5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CliConfig:
    data_dir: str = ""
    cache: str = "windows.cache"
    models: str = "all"
    train: dict = field(default_factory=dict)
    window_length: int = 200
    stride: int = 60
    max_gap: int = 10
    master_seed: int = 0
    out: str = "out"
    deterministic: bool = False
    jobs: int = 1
    synthetic: bool = False
    synthetic_subjects: int = 8
    synthetic_windows_per_class: int = 100
    normalization: str = "per-fold"
    dropout_rate: float = 0.3

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(**{**self.train, "master_seed": self.master_seed})
        except TypeError as exc:
            raise ConfigError(f"bad train settings: {exc}") from None

    def benchmark_config(self) -> BenchmarkConfig:
        return BenchmarkConfig(self.train_config(), self.normalization, self.dropout_rate)

    def resolved(self) -> dict:
        """Fully explicit settings, with train defaults materialised."""
        d = asdict(self)
        d["train"] = self.train_config().to_dict()
        return d

    def hash(self) -> str:
        return config_hash(self.resolved())


TRAIN_FLAGS = {f.name for f in fields(TrainConfig)} - {"master_seed"}


def load_config(args) -> CliConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    cfg = CliConfig()
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from None
        known = {f.name for f in fields(CliConfig)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **doc)
    overrides = {}
    for f in fields(CliConfig):
        value = getattr(args, f.name, None)
        if value is not None and f.name != "train":
            overrides[f.name] = value
    train = dict(cfg.train)
    for name in TRAIN_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            train[name] = value
    unknown = set(train) - TRAIN_FLAGS
    if unknown:
        raise ConfigError(f"unknown train settings: {sorted(unknown)}")
    cfg = replace(cfg, **overrides, train=train)
    if cfg.deterministic:
        cfg = replace(cfg, jobs=1)
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    cfg.train_config()
    return cfg


def _stamp(cfg: CliConfig) -> dict:
    return {"tool_version": __version__, "config_hash": cfg.hash(), "master_seed": cfg.master_seed,
            "config": cfg.resolved()}


def _write_config(cfg: CliConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(_stamp(cfg), indent=2, sort_keys=True) + "\n")


def load_dataset(cfg: CliConfig):
    if cfg.synthetic:
        return generate_synthetic(cfg.synthetic_subjects, cfg.synthetic_windows_per_class, cfg.master_seed,
                                  cfg.window_length, cfg.stride)
    path = Path(cfg.cache)
    if not path.is_file():
        raise DataError(f"cache {path} not found; run `anklehar ingest` or pass --synthetic")
    ds = read_cache(path.read_bytes())
    ds.check_provenance()
    return ds


def _print_counts(ds) -> None:
    print(f"{'subject':<8} " + " ".join(f"{c:>11}" for c in CLASS_NAMES))
    for subject, counts in ds.counts().items():
        print(f"{subject:<8} " + " ".join(f"{counts[c]:>11}" for c in CLASS_NAMES))
    print(f"total windows: {len(ds)}")


def cmd_ingest(args) -> int:
    cfg = load_config(args)
    if not cfg.data_dir:
        raise ConfigError("ingest needs --data-dir")
    ds = ingest_directory(cfg.data_dir, cfg.window_length, cfg.stride, cfg.max_gap)
    Path(cfg.cache).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.cache).write_bytes(write_cache(ds))
    _print_counts(ds)
    print(f"wrote {cfg.cache} (config hash {ds.provenance['config_hash']})")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = load_config(args)
    ds = generate_synthetic(cfg.synthetic_subjects, cfg.synthetic_windows_per_class, cfg.master_seed,
                            cfg.window_length, cfg.stride)
    Path(cfg.cache).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.cache).write_bytes(write_cache(ds))
    _print_counts(ds)
    print(f"wrote {cfg.cache}")
    return EXIT_OK


def cmd_params(args) -> int:
    expected = dict(EXPECTED_COUNTS)
    if args.manifest:
        try:
            doc = json.loads(Path(args.manifest).read_text())
            expected.update({m["name"]: int(m["expected"]) for m in doc["models"]})
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from None
    rows = verify_param_counts(expected)
    print(format_count_table(rows))
    if args.write_manifest:
        Path(args.write_manifest).write_text(manifest_json())
    failures = [r.name for r in rows if r.hard_failure]
    if failures:
        print(f"parameter count mismatch: {', '.join(failures)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_solve_cnn(args) -> int:
    if args.family == "cnn":
        space = CnnSearchSpace()
    elif args.family == "hybrid":
        space = hybrid_family(args.cell)
    else:
        space = dense_family()
    result = solve_conv_architecture(args.target, space, k_nearest=args.limit)
    print(f"target {args.target}: {len(result.exact)} exact matches over {result.evaluated_trunks} trunks")
    shown = result.exact[: args.limit] if len(result.exact) else result.nearest
    label = "exact" if len(result.exact) else "nearest"
    for c in shown:
        print(f"  [{label}] count={c.count} delta={c.delta:+d}  {c.describe()}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = run_layer_suites(instances=args.instances, seed=args.seed, tolerance=args.tolerance)
    ok = True
    for suite, err in worst.items():
        passed = err < args.tolerance
        ok &= passed
        print(f"{suite:<18} max rel err {err:.3e}  {'pass' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


def _fold_for(ds, index):
    folds = make_loso_folds(ds.subject_ids())
    if not 0 <= index < len(folds):
        raise ConfigError(f"fold {index} outside 0..{len(folds) - 1}")
    return folds[index]


def cmd_train(args) -> int:
    cfg = load_config(args)
    model = resolve_models(args.model)[0]
    ds = load_dataset(cfg)
    fold = _fold_for(ds, args.fold)
    result = train_fold(model, fold, ds, cfg.benchmark_config())
    out = Path(cfg.out)
    _write_config(cfg, out)
    if result.report.failed:
        print(f"{model} fold {fold.index} failed: {result.report.error}", file=sys.stderr)
        return EXIT_TRAINING
    stem = out / f"{model}_fold{fold.index}"
    spec = build_model(model, cfg.dropout_rate)
    stem.with_suffix(".weights").write_bytes(save_weights(result.params, spec))
    stem.with_suffix(".trace.csv").write_text(result.trace.to_csv())
    meta = {**_stamp(cfg), "model": model, "fold": fold.index, "test_subject": fold.test_subject,
            "normalizer": result.normalizer.to_dict(), "report": result.report.without_timing()}
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    r = result.report
    print(f"{model} fold {fold.index} (test subject {fold.test_subject}): accuracy {r.accuracy:.2f}% "
          f"loss {r.loss:.4f} epochs {r.epochs_run} (best {r.best_epoch})")
    print(f"wrote {stem.with_suffix('.weights')}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = load_config(args)
    models = resolve_models(cfg.models)
    bench = cfg.benchmark_config()
    ds = load_dataset(cfg)  # data and config errors surface before any training
    report = run_benchmark(models, ds, bench, jobs=cfg.jobs)
    report.provenance["cli"] = _stamp(cfg)
    out = Path(cfg.out)
    _write_config(cfg, out)
    for path in emit_report(report, out):
        print(f"wrote {path}")
    print(comparison_table(report))
    n_failed = report.provenance["n_failed_folds"]
    if n_failed:
        print(f"{n_failed} fold(s) failed; see folds.csv", file=sys.stderr)
    return EXIT_TRAINING if not report.aggregates else EXIT_OK


def cmd_report(args) -> int:
    if args.weights:
        return _report_weights(args)
    path = Path(args.report)
    try:
        report = BenchmarkReport.from_json(path.read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from None
    if args.out:
        for p in emit_report(report, args.out):
            print(f"wrote {p}")
    print(comparison_table(report))
    return EXIT_OK


def _report_weights(args) -> int:
    weights = Path(args.weights)
    meta_path = weights.with_suffix(".json")
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read training metadata {meta_path}: {exc}") from None
    cfg = replace(CliConfig(), **meta["config"])
    spec = build_model(meta["model"], cfg.dropout_rate)
    params = load_weights(weights.read_bytes(), spec)
    ds = load_dataset(cfg)
    _, test = split_fold(ds, _fold_for(ds, meta["fold"]))
    norm = Normalizer.from_dict(meta["normalizer"])
    _, loss, pred = evaluate(spec, params, norm.apply(test.x), test.onehot())
    print(f"{meta['model']} fold {meta['fold']} (test subject {meta['test_subject']}): "
          f"accuracy {accuracy(pred, test.labels):.2f}% loss {loss:.4f}")
    m = confusion_matrix(pred, test.labels)
    print("confusion (rows true, columns predicted):")
    for name, row in zip(CLASS_NAMES, m):
        print(f"  {name:<11} " + " ".join(f"{v:>5}" for v in row))
    return EXIT_OK


def _common(p, data=True):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", dest="master_seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", help="output directory (default out)")
    if data:
        p.add_argument("--cache", help="dataset cache path (default windows.cache)")
        p.add_argument("--synthetic", action="store_true", default=None, help="use generated data instead of a cache")
        p.add_argument("--synthetic-subjects", type=int, help="synthetic subject count (default 8)")
        p.add_argument("--synthetic-windows-per-class", type=int, help="synthetic windows per class (default 100)")
        p.add_argument("--window-length", type=int, help="window length in samples (default 200)")
        p.add_argument("--stride", type=int, help="window stride in samples (default 60)")


def _training(p):
    p.add_argument("--learning-rate", type=float, help="Adam step size (default 1e-3)")
    p.add_argument("--batch-size", type=int, help="mini-batch size (default 64)")
    p.add_argument("--max-epochs", type=int, help="epoch limit (default 1000)")
    p.add_argument("--patience", type=int, help="early-stopping patience (default 20)")
    p.add_argument("--validation-fraction", type=float, help="held-out share of training windows (default 0.1)")
    p.add_argument("--normalization", choices=("per-fold", "global"), help="normaliser scope (default per-fold)")
    p.add_argument("--dropout-rate", type=float, help="dropout after hidden layers (default 0.3)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anklehar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse PAMAP2 subject files into a window cache")
    _common(p)
    p.add_argument("--data-dir", help="directory holding subject101.dat ... subject108.dat")
    p.add_argument("--max-gap", type=int, help="longest interpolated dropout in samples (default 10)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write a synthetic window cache")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("params", help="verify zoo parameter counts")
    p.add_argument("--manifest", help="zoo manifest JSON whose expected counts to check against")
    p.add_argument("--write-manifest", help="write the zoo manifest JSON here")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("solve-cnn", help="enumerate architectures matching a parameter count")
    p.add_argument("--target", type=int, default=EXPECTED_COUNTS["CNN"], help="parameter count (default 51308)")
    p.add_argument("--family", default="cnn", choices=("cnn", "hybrid", "dense"), help="search family (default cnn)")
    p.add_argument("--cell", default="SimpleRNN", choices=("SimpleRNN", "LSTM", "GRU"),
                   help="recurrent cell for the hybrid family")
    p.add_argument("--limit", type=int, default=10, help="matches to print (default 10)")
    p.set_defaults(func=cmd_solve_cnn)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check of every layer type")
    p.add_argument("--instances", type=int, default=10, help="random instances per layer (default 10)")
    p.add_argument("--tolerance", type=float, default=1e-6, help="max relative error (default 1e-6)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="train one model on one LOSO fold and save its weights")
    _common(p)
    _training(p)
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    p.add_argument("--fold", type=int, default=0, help="fold index (default 0)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("benchmark", help="leave-one-subject-out benchmark over zoo models")
    _common(p)
    _training(p)
    p.add_argument("--models", help="comma-separated model names or 'all' (default all)")
    p.add_argument("--jobs", type=int, help="parallel fold workers (default 1)")
    p.add_argument("--deterministic", action="store_true", default=None, help="force sequential execution")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="re-emit a benchmark report or evaluate saved weights")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--report", help="report.json written by benchmark")
    src.add_argument("--weights", help="weights file written by train")
    p.add_argument("--out", help="directory to re-emit report files into")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TrainConfigError, UnknownModelError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CacheError, WeightFileError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergence as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
