"""PAMAP2 protocol files: parsing, gap filling, activity segmentation, windowing.

Column map of a subject file (0-indexed, 54 space-separated columns):
0 timestamp (s), 1 activity id, 2 heart rate, 3-19 hand IMU, 20-36 chest IMU,
37-53 ankle IMU.  Inside an IMU block: temperature, acc +-16g xyz,
acc +-6g xyz, gyroscope xyz, magnetometer xyz, 4 orientation values.
Only the ankle +-16g accelerometer (m/s^2) and gyroscope (rad/s) are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NUM_COLUMNS = 54
ANKLE_ACC16 = (38, 39, 40)
ANKLE_GYRO = (44, 45, 46)
CHANNEL_COLUMNS = ANKLE_ACC16 + ANKLE_GYRO
CHANNEL_NAMES = ("acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z")
CHANNEL_UNITS = ("m/s^2",) * 3 + ("rad/s",) * 3

SAMPLE_PERIOD = 0.01  # 100 Hz
ACTIVITY_CODES = {3: "standing", 4: "walking", 12: "ascending", 13: "descending"}
CLASS_NAMES = ("standing", "walking", "ascending", "descending")
CLASS_INDEX = {code: CLASS_NAMES.index(name) for code, name in ACTIVITY_CODES.items()}

# Generous physical limits for the ankle sensor; values outside mean a wrong column layout.
MAX_ABS_ACC = 16 * 9.81 * 1.5
MAX_ABS_GYRO = 40.0


class DataError(ValueError):
    """Malformed or implausible input data."""


class ParseError(DataError):
    def __init__(self, line: int, message: str, source: str = ""):
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line}: {message}")
        self.line = line
        self.source = source


@dataclass(frozen=True)
class RawRecord:
    timestamp: float
    activity_id: int
    channels: tuple[float, ...]
    missing: tuple[bool, ...]


@dataclass
class RecordTable:
    """Column-oriented records of one subject file; missing channels hold NaN."""

    timestamp: np.ndarray
    activity: np.ndarray
    channels: np.ndarray
    missing: np.ndarray

    def __len__(self):
        return len(self.timestamp)

    def __getitem__(self, i) -> RawRecord:
        return RawRecord(
            float(self.timestamp[i]),
            int(self.activity[i]),
            tuple(float(v) for v in self.channels[i]),
            tuple(bool(v) for v in self.missing[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def parse_dat(data: bytes | str, subject_id: int, source: str = "") -> RecordTable:
    """Parse one subject's protocol file.

    Raises :class:`ParseError` naming the 1-based line for a wrong column
    count or an unreadable number in a used column.
    """
    text = data.decode() if isinstance(data, bytes) else data
    ts, act, chans = [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != NUM_COLUMNS:
            raise ParseError(lineno, f"expected {NUM_COLUMNS} columns, found {len(cols)}", source)
        try:
            ts.append(float(cols[0]))
            act.append(int(float(cols[1])))
            chans.append([float(cols[c]) for c in CHANNEL_COLUMNS])
        except ValueError as exc:
            raise ParseError(lineno, f"unreadable number ({exc})", source) from None
    channels = np.array(chans, dtype=np.float64).reshape(-1, 6)
    return RecordTable(
        timestamp=np.array(ts, dtype=np.float64),
        activity=np.array(act, dtype=np.int64),
        channels=channels,
        missing=np.isnan(channels),
    )


def check_plausible(table: RecordTable, source: str = "") -> None:
    """Refuse files whose values cannot come from the documented column layout."""
    prefix = f"{source}: " if source else ""
    if len(table) and np.any(np.diff(table.timestamp) < 0):
        raise DataError(f"{prefix}timestamps decrease")
    if np.any((table.activity < 0) | (table.activity > 24)):
        raise DataError(f"{prefix}activity ids outside 0..24")
    acc = table.channels[:, :3]
    gyro = table.channels[:, 3:]
    if np.nanmax(np.abs(acc), initial=0.0) > MAX_ABS_ACC or np.nanmax(np.abs(gyro), initial=0.0) > MAX_ABS_GYRO:
        raise DataError(f"{prefix}ankle accelerometer/gyroscope values outside physical range")


def interpolate_gaps(table: RecordTable, max_gap: int = 10) -> RecordTable:
    """Linearly fill runs of at most ``max_gap`` missing samples per channel.

    Runs touching either end of the file, or longer than ``max_gap``, stay missing.
    """
    if not table.missing.any():
        return RecordTable(table.timestamp.copy(), table.activity.copy(), table.channels.copy(),
                           table.missing.copy())
    channels = table.channels.copy()
    missing = table.missing.copy()
    t = table.timestamp
    n = len(table)
    for ch in range(channels.shape[1]):
        miss = missing[:, ch]
        if not miss.any():
            continue
        padded = np.concatenate([[False], miss, [False]])
        starts = np.flatnonzero(~padded[:-1] & padded[1:])
        ends = np.flatnonzero(padded[:-1] & ~padded[1:])  # exclusive
        for s, e in zip(starts, ends):
            if e - s > max_gap or s == 0 or e == n:
                continue
            left, right = s - 1, e
            w = (t[s:e] - t[left]) / (t[right] - t[left])
            channels[s:e, ch] = channels[left, ch] + w * (channels[right, ch] - channels[left, ch])
            miss[s:e] = False
    return RecordTable(table.timestamp.copy(), table.activity.copy(), channels, missing)


@dataclass
class ActivitySegment:
    subject_id: int
    activity: str
    samples: np.ndarray  # (L, 6)
    start_time: float
    index: int = 0

    @property
    def label(self) -> int:
        return CLASS_NAMES.index(self.activity)

    def __len__(self):
        return len(self.samples)


def segment_by_activity(table: RecordTable, subject_id: int, period: float = SAMPLE_PERIOD) -> list[ActivitySegment]:
    """Maximal runs of one target activity with no missing value and no time gap."""
    n = len(table)
    if n == 0:
        return []
    usable = np.isin(table.activity, list(ACTIVITY_CODES)) & ~table.missing.any(axis=1)
    # a new run starts wherever the previous sample is not a continuation
    cont = np.zeros(n, dtype=bool)
    cont[1:] = (
        usable[1:] & usable[:-1]
        & (table.activity[1:] == table.activity[:-1])
        & (np.diff(table.timestamp) <= 1.5 * period)
    )
    segments = []
    i = 0
    while i < n:
        if not usable[i]:
            i += 1
            continue
        j = i + 1
        while j < n and cont[j]:
            j += 1
        segments.append(ActivitySegment(
            subject_id=subject_id,
            activity=ACTIVITY_CODES[int(table.activity[i])],
            samples=table.channels[i:j].copy(),
            start_time=float(table.timestamp[i]),
            index=len(segments),
        ))
        i = j
    return segments


@dataclass
class Window:
    samples: np.ndarray  # (length, 6)
    label: np.ndarray  # one-hot over the four classes
    subject_id: int
    segment_index: int
    offset: int


def window_count(length: int, window: int = 200, stride: int = 60) -> int:
    return 0 if length < window else (length - window) // stride + 1


def build_windows(segment: ActivitySegment, length: int = 200, stride: int = 60) -> list[Window]:
    if length < 1 or stride < 1:
        raise ValueError("window length and stride must be positive")
    onehot = np.eye(len(CLASS_NAMES))[segment.label]
    return [
        Window(segment.samples[off:off + length].copy(), onehot.copy(), segment.subject_id, segment.index, off)
        for off in range(0, len(segment) - length + 1, stride)
    ]
