"""End-to-end delay and loss-ratio aggregation."""
from .aggregate import (
    METRIC_COLUMNS,
    MalformedRecordError,
    MetricAccumulator,
    MetricRow,
    MetricsError,
    TrialRecords,
    aggregate,
    collapse_copies,
    density_summary,
    load_records,
    metrics_csv,
    write_metrics,
)

__all__ = [
    "METRIC_COLUMNS",
    "MalformedRecordError",
    "MetricAccumulator",
    "MetricRow",
    "MetricsError",
    "TrialRecords",
    "aggregate",
    "collapse_copies",
    "density_summary",
    "load_records",
    "metrics_csv",
    "write_metrics",
]
