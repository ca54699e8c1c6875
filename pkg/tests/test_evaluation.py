"""Metrics, fold runs, benchmark aggregation and report output."""

import itertools
import json

import numpy as np
import pytest

import oracles
from anklehar import evaluation
from anklehar.data import generate_synthetic, make_loso_folds
from anklehar.evaluation import (
    BenchmarkConfig,
    BenchmarkReport,
    accuracy,
    aggregate_folds,
    aggregate_stats,
    confusion_matrix,
    emit_report,
    error_reduction,
    load_reference,
    run_benchmark,
    run_fold,
    split_fold,
    train_fold,
)
from anklehar.trainer import TrainConfig, TrainingDivergence

FAST = BenchmarkConfig(TrainConfig(max_epochs=20, patience=5, batch_size=32, master_seed=7))


@pytest.fixture(scope="module")
def synth():
    return generate_synthetic(seed=1)


@pytest.fixture(scope="module")
def two_subjects():
    return generate_synthetic(num_subjects=2, windows_per_class=20, seed=2)


# accuracy and confusion

def test_accuracy_examples():
    assert accuracy([0, 1, 2, 3], [0, 1, 2, 3]) == 100.0
    assert accuracy([0, 1, 2, 3, 0], [0, 1, 2, 0, 1]) == 60.0


def test_accuracy_random_predictions_near_chance():
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(4), 25_000)
    assert abs(accuracy(rng.integers(0, 4, size=labels.size), labels) - 25.0) < 1.0


def test_accuracy_rejects_empty_and_mismatched():
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([0, 1], [0])


def test_confusion_examples():
    np.testing.assert_array_equal(confusion_matrix([0, 1, 2, 3, 3], [0, 1, 2, 3, 3]), np.diag([1, 1, 1, 2]))
    m = confusion_matrix([2], [1])
    assert m[1, 2] == 1 and m.sum() == 1


def test_confusion_matches_loop_oracle_and_accuracy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 60))
        pred, labels = rng.integers(0, 4, size=n), rng.integers(0, 4, size=n)
        m = confusion_matrix(pred, labels)
        np.testing.assert_array_equal(m, oracles.confusion(pred.tolist(), labels.tolist(), 4))
        assert abs(100.0 * np.trace(m) / m.sum() - accuracy(pred, labels)) < 1e-12


def test_confusion_out_of_range_class():
    with pytest.raises(ValueError):
        confusion_matrix([4], [0])


# aggregates

def test_aggregate_hand_example():
    a = aggregate_stats([90, 92, 94], [0.3, 0.2, 0.1], [10, 20, 30])
    assert a.mean_accuracy == 92.0 and a.range_accuracy == 4.0
    np.testing.assert_allclose(a.std_accuracy, np.sqrt(8 / 3), rtol=1e-15)
    assert round(a.std_accuracy, 3) == 1.633
    assert a.min_accuracy <= a.mean_accuracy <= a.max_accuracy
    np.testing.assert_allclose([a.mean_loss, a.mean_epochs], [0.2, 20.0], rtol=1e-15)


def test_aggregate_single_and_constant():
    one = aggregate_stats([87.5], [0.4], [12])
    assert one.std_accuracy == 0.0 and one.range_accuracy == 0.0
    assert aggregate_stats([80.0] * 5, [0.1] * 5, [3] * 5).std_accuracy == 0.0


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate_stats([], [], [])


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(2)
    acc, loss, ep = rng.uniform(60, 100, 6), rng.uniform(0, 1, 6), rng.integers(1, 400, 6)
    ref = aggregate_stats(acc, loss, ep)
    for perm in itertools.islice(itertools.permutations(range(6)), 0, None, 37):
        p = list(perm)
        assert aggregate_stats(acc[p], loss[p], ep[p]) == ref


# error reduction

def test_error_reduction_examples():
    assert round(error_reduction(86.9, 90.1), 1) == 24.4
    assert round(error_reduction(84.6, 89.2), 1) == 29.9
    assert error_reduction(91.0, 91.0) == 0.0


def test_error_reduction_sign_follows_accuracy():
    rng = np.random.default_rng(3)
    for a, b in rng.uniform(0, 99.9, size=(200, 2)):
        assert (error_reduction(a, b) > 0) == (b > a)


def test_error_reduction_base_100_rejected():
    with pytest.raises(ValueError):
        error_reduction(100.0, 99.0)


def test_reference_file_has_table1():
    ref = load_reference()
    assert set(ref["table1"]) == {"Shallow_NN", "DL", "RNN", "LSTM", "GRU", "CNN", "CNN_RNN", "CNN_GRU",
                                  "CNN_LSTM"}
    assert ref["table1"]["CNN_LSTM"]["accuracy"] == 91.5 and ref["table1"]["CNN_RNN"]["accuracy"] == 90.1


# folds

def test_split_fold_is_leak_free(synth):
    for fold in make_loso_folds(synth.subject_ids()):
        train, test = split_fold(synth, fold)
        assert set(test.subjects.tolist()) == {fold.test_subject}
        assert fold.test_subject not in set(train.subjects.tolist())
        assert len(train) + len(test) == len(synth)


def test_run_fold_shallow_high_accuracy_and_reproducible(synth):
    fold = make_loso_folds(synth.subject_ids())[3]
    a = run_fold("Shallow_NN", fold, synth, FAST)
    b = run_fold("Shallow_NN", fold, synth, FAST)
    assert a.accuracy >= 90.0
    assert a.test_subject == fold.test_subject and a.n_test == int(np.sum(synth.subjects == fold.test_subject))
    assert a.without_timing() == b.without_timing()
    assert sum(map(sum, a.confusion)) == a.n_test
    assert a.seed == evaluation.fold_seed(7, "Shallow_NN", 3)


def test_global_normalization_variant_runs(synth):
    cfg = BenchmarkConfig(FAST.train, normalization="global")
    fold = make_loso_folds(synth.subject_ids())[0]
    result = train_fold("Shallow_NN", fold, synth, cfg)
    assert "global" in result.normalizer.fitted_on
    assert result.report.config_hash != FAST.hash()


def test_divergent_fold_is_flagged_not_raised(two_subjects, monkeypatch):
    def diverge(*args, **kwargs):
        raise TrainingDivergence("non-finite gradient in layer 1 (Dense) at epoch 1")

    monkeypatch.setattr(evaluation, "fit", diverge)
    report = run_benchmark(["DL"], two_subjects, FAST)
    assert all(f.failed and f.accuracy is None for f in report.folds)
    assert "DL" not in report.aggregates
    assert "non-finite" in report.folds[0].error
    assert "DL,,,,,,0,2" in evaluation.table1_csv(report)


# benchmark and report files

@pytest.fixture(scope="module")
def small_report(two_subjects):
    return run_benchmark(["Shallow_NN", "DL"], two_subjects, FAST)


def test_benchmark_one_report_per_model_fold(small_report):
    assert [(f.model, f.fold) for f in small_report.folds] == [("Shallow_NN", 0), ("Shallow_NN", 1),
                                                               ("DL", 0), ("DL", 1)]
    assert small_report.aggregates["Shallow_NN"].n_folds == 2
    assert small_report.provenance["std"] == "population"
    assert small_report.provenance["master_seed"] == 7


def test_benchmark_aggregates_recompute(small_report):
    assert aggregate_folds(small_report.folds) == small_report.aggregates


def test_report_json_round_trip(small_report):
    back = BenchmarkReport.from_json(small_report.to_json())
    assert back == small_report
    assert back.to_json() == small_report.to_json()


def test_report_rejects_unknown_schema(small_report):
    doc = json.loads(small_report.to_json())
    doc["schema_version"] = 99
    with pytest.raises(ValueError, match="schema"):
        BenchmarkReport.from_dict(doc)


def test_emit_report_files(small_report, tmp_path):
    paths = emit_report(small_report, tmp_path)
    assert sorted(p.name for p in paths) == ["folds.csv", "plotdata.dat", "report.json", "table1.csv"]
    table = [ln for ln in (tmp_path / "table1.csv").read_text().splitlines() if not ln.startswith("#")]
    assert table[0].startswith("model,mean_accuracy,mean_loss") and len(table) == 3
    rows = [ln for ln in (tmp_path / "plotdata.dat").read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == sum(not f.failed for f in small_report.folds)
    assert all(len(r.split()) == 5 for r in rows)
    assert BenchmarkReport.from_json((tmp_path / "report.json").read_text()) == small_report
    with pytest.raises(ValueError):
        emit_report(small_report, tmp_path, formats=("xml",))


def test_parallel_matches_serial(two_subjects, small_report):
    parallel = run_benchmark(["Shallow_NN", "DL"], two_subjects, FAST, jobs=2)
    assert [f.without_timing() for f in parallel.folds] == [f.without_timing() for f in small_report.folds]
    assert parallel.aggregates == small_report.aggregates
