"""Desk-scale synthetic stand-in for the ankle IMU recordings.

Each class has its own posture offset per channel, a base stride frequency
with a second harmonic, and a slow amplitude envelope.  Each subject gets a
random per-channel gain and offset and a tempo factor; white noise is added on
top.  Segments are windowed exactly like real data, so windows overlap and
carry segment provenance.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import stream
from .dataset import WindowedDataset, assemble
from .pamap2 import CLASS_NAMES, SAMPLE_PERIOD, ActivitySegment

# standing, walking, ascending, descending
BASE_FREQ = np.array([0.3, 0.9, 0.7, 1.2])
AMPLITUDE = np.array([0.1, 1.0, 0.8, 1.3])
POSTURE = 1.5 * np.array([
    [1.0, 0.5, -0.5, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.5, 0.5, -0.5, 0.0],
    [-0.5, 0.0, 1.0, -0.5, 0.5, 0.5],
    [0.5, -1.0, 0.0, 0.0, 0.5, -0.5],
])
CHANNEL_WEIGHT = np.array([1.0, 0.8, 0.6, 1.2, 0.7, 0.5])
NOISE = 0.15


def _segment_signal(label: int, n: int, gain, offset, tempo, rng) -> np.ndarray:
    t = np.arange(n)[:, None] * SAMPLE_PERIOD
    freq = BASE_FREQ[label] * tempo
    phase = rng.uniform(0, 2 * math.pi, size=6)
    envelope = 1.0 + 0.3 * np.sin(2 * math.pi * 0.2 * t + rng.uniform(0, 2 * math.pi))
    wave = np.sin(2 * math.pi * freq * t + phase) + 0.4 * np.sin(4 * math.pi * freq * t + 2 * phase)
    clean = POSTURE[label] + AMPLITUDE[label] * CHANNEL_WEIGHT * envelope * wave
    return gain * clean + offset + NOISE * rng.standard_normal((n, 6))


def generate_synthetic(num_subjects: int = 8, windows_per_class: int = 100, seed: int = 0,
                       length: int = 200, stride: int = 60) -> WindowedDataset:
    """Labelled, subject-tagged windows over the four activity classes.

    ``windows_per_class`` is the total per class, spread evenly over subjects
    (rounded up), so each (subject, class) pair yields one segment of
    ``ceil(windows_per_class / num_subjects)`` windows.
    """
    per_subject = max(1, math.ceil(windows_per_class / num_subjects))
    seg_len = length + stride * (per_subject - 1)
    segments = []
    for s in range(num_subjects):
        subject = 101 + s
        rng = stream(seed, "synthetic", subject)
        gain = rng.uniform(0.85, 1.15, size=6)
        offset = rng.normal(0.0, 0.15, size=6)
        tempo = rng.uniform(0.9, 1.1)
        for label, name in enumerate(CLASS_NAMES):
            samples = _segment_signal(label, seg_len, gain, offset, tempo, rng)
            segments.append(ActivitySegment(subject, name, samples, start_time=0.0, index=label))
    return assemble(segments, length, stride, {
        "source": "synthetic",
        "seed": seed,
        "num_subjects": num_subjects,
        "windows_per_class": windows_per_class,
        "max_gap": 0,
    })
