"""Ankle IMU data: PAMAP2 ingestion, windowing, normalisation, folds, caching."""

from .cache import CacheError, read_cache, write_cache
from .dataset import (
    FoldAssignment,
    Normalizer,
    WindowedDataset,
    apply_normalizer,
    assemble,
    fit_normalizer,
    ingest_directory,
    make_loso_folds,
)
from .pamap2 import (
    ActivitySegment,
    DataError,
    ParseError,
    RawRecord,
    RecordTable,
    Window,
    build_windows,
    interpolate_gaps,
    parse_dat,
    segment_by_activity,
    window_count,
)
from .synthetic import generate_synthetic
