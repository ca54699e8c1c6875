"""PAMAP2 parsing, cleaning, segmentation, windowing, normalisation, folds, cache."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pamap2_fixture import line, subject_text
from anklehar.data import (
    ActivitySegment,
    CacheError,
    DataError,
    ParseError,
    build_windows,
    fit_normalizer,
    generate_synthetic,
    ingest_directory,
    interpolate_gaps,
    make_loso_folds,
    parse_dat,
    read_cache,
    segment_by_activity,
    window_count,
    write_cache,
)
from anklehar.data.pamap2 import RecordTable, check_plausible


# parsing

def test_parse_three_line_fixture():
    text = "\n".join([
        line(8.38, 0, [1, 2, 3, 0.1, 0.2, 0.3]),
        line(8.39, 4, [-9.81, 0.5, 2.25, -0.01, 0.02, 1.5]),
        line(8.40, 12, [4, 5, 6, 0.4, 0.5, 0.6], filler=-7.0),
    ])
    table = parse_dat(text.encode(), 101)
    records = list(table)
    assert [r.timestamp for r in records] == [8.38, 8.39, 8.40]
    assert [r.activity_id for r in records] == [0, 4, 12]
    assert records[1].channels == (-9.81, 0.5, 2.25, -0.01, 0.02, 1.5)
    assert records[2].channels == (4.0, 5.0, 6.0, 0.4, 0.5, 0.6)
    assert not any(any(r.missing) for r in records)


def test_parse_nan_flags_channel():
    table = parse_dat(line(1.0, 4, [1, 2, 3, "NaN", 0.2, 0.3]), 101)
    assert table[0].missing == (False, False, False, True, False, False)


def test_parse_wrong_column_count_names_line():
    text = line(1.0, 4, [0] * 6) + "\n" + " ".join(["1"] * 53)
    with pytest.raises(ParseError, match="subject101.dat:2: expected 54 columns, found 53"):
        parse_dat(text, 101, source="subject101.dat")


def test_parse_unreadable_number():
    bad = line(1.0, 4, ["abc", 0, 0, 0, 0, 0])
    with pytest.raises(ParseError) as err:
        parse_dat("\n" + bad, 101)
    assert err.value.line == 2


def test_implausible_values_rejected():
    table = parse_dat(line(1.0, 4, [0, 0, 0, 500.0, 0, 0]), 101)
    with pytest.raises(DataError, match="physical range"):
        check_plausible(table)


# interpolation

def _table(values, activity=4):
    values = np.asarray(values, dtype=float).reshape(-1, 1).repeat(6, axis=1)
    n = len(values)
    return RecordTable(np.arange(n) * 0.01, np.full(n, activity), values, np.isnan(values))


def test_interpolate_single_gap_midpoint():
    out = interpolate_gaps(_table([1.0, np.nan, 3.0]))
    np.testing.assert_allclose(out.channels[1], 2.0, rtol=0, atol=1e-12)
    assert not out.missing.any()


def test_interpolate_leaves_long_runs():
    values = [0.0] + [np.nan] * 11 + [1.0]
    out = interpolate_gaps(_table(values), max_gap=10)
    assert out.missing[1:12].all()
    ten = interpolate_gaps(_table([0.0] + [np.nan] * 10 + [1.0]), max_gap=10)
    np.testing.assert_allclose(ten.channels[1:11, 0], np.arange(1, 11) / 11, rtol=0, atol=1e-12)


def test_interpolate_no_missing_is_identity():
    table = _table(np.random.default_rng(0).normal(size=30))
    out = interpolate_gaps(table)
    assert out.channels.tobytes() == table.channels.tobytes()
    assert out.timestamp.tobytes() == table.timestamp.tobytes()


def test_interpolate_edge_runs_stay_missing():
    out = interpolate_gaps(_table([np.nan, 1.0, 2.0, np.nan]))
    assert out.missing[0].all() and out.missing[3].all()


# segmentation

def test_segment_runs_example():
    labels = [0, 0, 4, 4, 4, 0, 12, 12]
    n = len(labels)
    table = RecordTable(np.arange(n) * 0.01, np.array(labels), np.zeros((n, 6)), np.zeros((n, 6), bool))
    segs = segment_by_activity(table, 101)
    assert [(s.activity, len(s)) for s in segs] == [("walking", 3), ("ascending", 2)]


def test_segment_cut_at_missing_sample():
    values = [1.0] * 5 + [np.nan] * 20 + [1.0] * 4
    segs = segment_by_activity(interpolate_gaps(_table(values)), 101)
    assert [(s.activity, len(s)) for s in segs] == [("walking", 5), ("walking", 4)]


def test_segment_cut_at_time_gap():
    table = _table(np.zeros(6))
    table.timestamp[3:] += 1.0
    assert [len(s) for s in segment_by_activity(table, 101)] == [3, 3]


def test_segment_ignores_other_activities():
    table = _table(np.zeros(50), activity=5)
    assert segment_by_activity(table, 101) == []


# windowing

def _segment(length):
    samples = np.arange(length * 6, dtype=float).reshape(length, 6)
    return ActivitySegment(101, "walking", samples, 0.0)


@pytest.mark.parametrize("length, count", [(200, 1), (199, 0), (1000, 14)])
def test_window_count_examples(length, count):
    assert len(build_windows(_segment(length))) == count == window_count(length)


def test_consecutive_windows_share_140_rows():
    windows = build_windows(_segment(1000))
    for a, b in zip(windows, windows[1:]):
        np.testing.assert_array_equal(a.samples[60:], b.samples[:140])
        assert b.offset - a.offset == 60
    assert all(w.samples.shape == (200, 6) for w in windows)
    np.testing.assert_array_equal(windows[0].label, [0, 1, 0, 0])


@settings(max_examples=200)
@given(st.integers(0, 3000))
def test_window_count_closed_form_matches_enumeration(length):
    enumerated = sum(1 for off in range(length) if off % 60 == 0 and off + 200 <= length)
    expected = (length - 200) // 60 + 1 if length >= 200 else 0
    assert window_count(length) == enumerated == expected


# normalisation

def test_constant_channel_maps_to_zero():
    x = np.random.default_rng(1).normal(size=(5, 200, 6))
    x[..., 2] = 9.81
    norm = fit_normalizer(x)
    assert norm.std[2] == 1e-8
    np.testing.assert_array_equal(norm.apply(x)[..., 2], 0.0)


def test_normalised_training_stats():
    x = np.random.default_rng(2).normal(3.0, 5.0, size=(40, 200, 6))
    z = fit_normalizer(x).apply(x).reshape(-1, 6)
    assert np.abs(z.mean(axis=0)).max() < 1e-9
    assert np.abs(z.std(axis=0) - 1.0).max() < 1e-9


def test_normalising_standardised_data_is_identity():
    x = np.random.default_rng(4).normal(size=(30, 200, 6))
    z = fit_normalizer(x).apply(x)
    np.testing.assert_allclose(fit_normalizer(z).apply(z), z, rtol=0, atol=1e-12)


def test_normalizer_rejects_empty():
    with pytest.raises(ValueError):
        fit_normalizer(np.zeros((0, 200, 6)))


# folds

def test_eight_subject_folds():
    folds = make_loso_folds(range(101, 109))
    assert len(folds) == 8
    assert folds[0].test_subject == 101 and folds[0].train_subjects == tuple(range(102, 109))
    assert sorted(f.test_subject for f in folds) == list(range(101, 109))
    for f in folds:
        assert f.test_subject not in f.train_subjects and len(f.train_subjects) == 7


def test_two_subject_folds_complementary():
    a, b = make_loso_folds([108, 103])
    assert (a.test_subject, a.train_subjects) == (103, (108,))
    assert (b.test_subject, b.train_subjects) == (108, (103,))


def test_duplicate_subjects_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        make_loso_folds([101, 101, 102])


# ingestion and cache

def _write_subjects(tmp_path):
    runs = {
        101: [(0, 30), (4, 520), (0, 10), (12, 260), (13, 199)],
        102: [(3, 380), (5, 400), (13, 200)],
        103: [(4, 1000)],
    }
    for subject, r in runs.items():
        (tmp_path / f"subject{subject}.dat").write_text(subject_text(r, seed=subject))
    return {101: {"standing": 0, "walking": 6, "ascending": 2, "descending": 0},
            102: {"standing": 4, "walking": 0, "ascending": 0, "descending": 1},
            103: {"standing": 0, "walking": 14, "ascending": 0, "descending": 0}}


def test_ingest_counts_match_enumeration(tmp_path):
    expected = _write_subjects(tmp_path)
    ds = ingest_directory(tmp_path)
    assert ds.counts() == expected
    ds.check_provenance()
    assert ds.provenance["stride"] == 60 and ds.provenance["window_length"] == 200


def test_ingest_empty_directory(tmp_path):
    with pytest.raises(DataError, match="no subject files found"):
        ingest_directory(tmp_path)


def test_cache_round_trip_bit_exact(tmp_path):
    _write_subjects(tmp_path)
    ds = ingest_directory(tmp_path)
    blob = write_cache(ds)
    back = read_cache(blob)
    assert back.x.tobytes() == ds.x.tobytes()
    for name in ("labels", "subjects", "window_segment", "offsets", "segments"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ds, name))
    assert back.provenance == ds.provenance and back.provenance["stride"] == 60
    assert write_cache(back) == blob
    assert write_cache(ingest_directory(tmp_path)) == blob


def test_cache_truncated_or_wrong_version():
    blob = write_cache(generate_synthetic(2, 4))
    with pytest.raises(CacheError):
        read_cache(blob[:-10])
    with pytest.raises(CacheError, match="version"):
        read_cache(blob[:4] + b"\x09\x00" + blob[6:])


# synthetic data

def test_synthetic_deterministic_and_shaped():
    a = generate_synthetic(seed=3)
    b = generate_synthetic(seed=3)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.x.shape[1:] == (200, 6)
    onehot = a.onehot()
    np.testing.assert_array_equal(onehot.sum(axis=1), 1.0)
    assert a.subject_ids() == list(range(101, 109))
    a.check_provenance()
    assert not np.array_equal(a.x, generate_synthetic(seed=4).x)


def test_synthetic_windows_per_class_total():
    ds = generate_synthetic(num_subjects=8, windows_per_class=100)
    np.testing.assert_array_equal(np.bincount(ds.labels), [104] * 4)  # ceil(100 / 8) = 13 per subject
