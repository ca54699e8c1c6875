"""Windowed datasets, per-channel normalisation and leave-one-subject-out folds."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pamap2 import (
    CHANNEL_NAMES,
    CHANNEL_UNITS,
    CLASS_NAMES,
    ActivitySegment,
    DataError,
    Window,
    build_windows,
    check_plausible,
    interpolate_gaps,
    parse_dat,
    segment_by_activity,
)

SUBJECTS = tuple(range(101, 109))
NORM_EPS = 1e-8


@dataclass
class WindowedDataset:
    """Windows stored as stacked arrays.

    ``segments`` has one row per source segment: (subject, segment index,
    class label, segment length); ``window_segment`` points each window at its
    row, and ``offsets`` gives the window's first sample within that segment.
    """

    x: np.ndarray  # (N, length, 6) float64
    labels: np.ndarray  # (N,) int64 class index
    subjects: np.ndarray  # (N,) int64
    window_segment: np.ndarray  # (N,) int64
    offsets: np.ndarray  # (N,) int64
    segments: np.ndarray  # (M, 4) int64
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(CLASS_NAMES)

    def onehot(self) -> np.ndarray:
        return np.eye(self.num_classes)[self.labels]

    def subject_ids(self) -> list[int]:
        return sorted(int(s) for s in np.unique(self.subjects))

    def window(self, i: int) -> Window:
        seg = self.segments[self.window_segment[i]]
        return Window(self.x[i], np.eye(self.num_classes)[self.labels[i]], int(self.subjects[i]),
                      int(seg[1]), int(self.offsets[i]))

    def select(self, mask) -> "WindowedDataset":
        """Subset of windows; the segment table and provenance are shared."""
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return WindowedDataset(self.x[idx], self.labels[idx], self.subjects[idx], self.window_segment[idx],
                               self.offsets[idx], self.segments, self.provenance)

    def with_x(self, x) -> "WindowedDataset":
        return WindowedDataset(x, self.labels, self.subjects, self.window_segment, self.offsets,
                               self.segments, self.provenance)

    def counts(self) -> dict[int, dict[str, int]]:
        """Per-subject, per-activity window counts."""
        out = {}
        for s in self.subject_ids():
            labels = self.labels[self.subjects == s]
            out[s] = {name: int(np.sum(labels == i)) for i, name in enumerate(CLASS_NAMES)}
        return out

    def check_provenance(self) -> None:
        """Every window lies inside one segment and agrees with its label and subject."""
        seg = self.segments[self.window_segment]
        length = self.x.shape[1]
        if not (np.all(seg[:, 0] == self.subjects) and np.all(seg[:, 2] == self.labels)
                and np.all(self.offsets >= 0) and np.all(self.offsets + length <= seg[:, 3])):
            raise DataError("window provenance does not match its source segment")


def assemble(segments: list[ActivitySegment], length: int = 200, stride: int = 60,
             provenance: dict | None = None) -> WindowedDataset:
    """Window every segment and stack the result."""
    seg_rows, xs, labels, subjects, seg_ids, offsets = [], [], [], [], [], []
    for row, seg in enumerate(segments):
        seg_rows.append((seg.subject_id, seg.index, seg.label, len(seg)))
        for w in build_windows(seg, length, stride):
            xs.append(w.samples)
            labels.append(seg.label)
            subjects.append(seg.subject_id)
            seg_ids.append(row)
            offsets.append(w.offset)
    prov = {
        "window_length": length,
        "stride": stride,
        "channels": list(CHANNEL_NAMES),
        "units": list(CHANNEL_UNITS),
        "classes": list(CLASS_NAMES),
    }
    prov.update(provenance or {})
    prov["config_hash"] = config_hash({k: v for k, v in prov.items() if k != "config_hash"})
    return WindowedDataset(
        x=np.array(xs, dtype=np.float64).reshape(-1, length, len(CHANNEL_NAMES)),
        labels=np.array(labels, dtype=np.int64),
        subjects=np.array(subjects, dtype=np.int64),
        window_segment=np.array(seg_ids, dtype=np.int64),
        offsets=np.array(offsets, dtype=np.int64),
        segments=np.array(seg_rows, dtype=np.int64).reshape(-1, 4),
        provenance=prov,
    )


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def subject_files(raw_dir: Path, subjects=SUBJECTS) -> list[tuple[int, Path]]:
    raw_dir = Path(raw_dir)
    found = [(s, raw_dir / f"subject{s}.dat") for s in subjects]
    return [(s, p) for s, p in found if p.is_file()]


def ingest_directory(raw_dir, length: int = 200, stride: int = 60, max_gap: int = 10,
                     subjects=SUBJECTS) -> WindowedDataset:
    """parse -> check -> interpolate -> segment -> window for every subject file found."""
    files = subject_files(Path(raw_dir), subjects)
    if not files:
        raise DataError(f"no subject files found in {raw_dir} (expected subject101.dat ... subject108.dat)")
    segments = []
    for subject, path in files:
        table = parse_dat(path.read_bytes(), subject, source=str(path.name))
        check_plausible(table, path.name)
        segments.extend(segment_by_activity(interpolate_gaps(table, max_gap), subject))
    return assemble(segments, length, stride, {
        "source_files": [p.name for _, p in files],
        "max_gap": max_gap,
        "source": "pamap2",
    })


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    fitted_on: str = ""

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "fitted_on": self.fitted_on}

    @classmethod
    def from_dict(cls, doc: dict) -> "Normalizer":
        return cls(np.array(doc["mean"]), np.array(doc["std"]), doc.get("fitted_on", ""))


def fit_normalizer(x, fitted_on: str = "") -> Normalizer:
    """Per-channel mean and population std over every sample of every window.

    The std is floored at 1e-8 so constant channels map to zero.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot fit a normalizer on an empty training set")
    flat = x.reshape(-1, x.shape[-1])
    mean = flat.mean(axis=0)
    # summation rounding leaves a residue that the floored std would blow up
    constant = np.ptp(flat, axis=0) == 0
    mean[constant] = flat[0, constant]
    return Normalizer(mean, np.maximum(flat.std(axis=0), NORM_EPS), fitted_on)


def apply_normalizer(normalizer: Normalizer, x) -> np.ndarray:
    return normalizer.apply(x)


@dataclass(frozen=True)
class FoldAssignment:
    index: int
    test_subject: int
    train_subjects: tuple[int, ...]


def make_loso_folds(subject_ids) -> list[FoldAssignment]:
    ids = [int(s) for s in subject_ids]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate subject ids in {ids}")
    if len(ids) < 2:
        raise ValueError("leave-one-subject-out needs at least two subjects")
    ids.sort()
    return [FoldAssignment(i, s, tuple(t for t in ids if t != s)) for i, s in enumerate(ids)]
