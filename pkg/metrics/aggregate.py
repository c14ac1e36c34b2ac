"""
Delay and loss aggregation over per-packet records.

Each trial contributes one packet CSV (`class,origin,seq,birth,delivery,
loss_cause,hops,path_id`). Copies of a multipath alert collapse into one
packet: the first arrival defines its delay and it is lost only when no
copy arrived. Delay is averaged over delivered packets only.
"""
from __future__ import annotations

import io
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["class", "origin", "seq", "birth", "delivery", "loss_cause", "hops", "path_id"]
METRIC_COLUMNS = [
    "protocol", "profile", "density", "class",
    "mean_delay_s", "delay_std_s", "loss_ratio", "n_packets", "n_trials",
]
REPORTED_CLASSES = ("alert", "routine")
GROUP_KEYS = ["protocol", "profile", "density", "class"]


class MetricsError(Exception):
    """Base error for metric aggregation."""


class MalformedRecordError(MetricsError):
    """A packet record is missing columns or is neither delivered nor lost."""


@dataclass(frozen=True)
class MetricRow:
    protocol: str
    profile: str
    density: int
    packet_class: str
    mean_delay_s: float
    delay_std_s: float
    loss_ratio: float
    n_packets: int
    n_trials: int


@dataclass(frozen=True)
class TrialRecords:
    """Packet records of one trial plus the cell it belongs to."""

    protocol: str
    profile: str
    density: int
    trial: int
    records: pd.DataFrame


@dataclass(frozen=True)
class _Partial:
    generated: int
    delivered: int
    delay_sum: float


def validate_records(records: pd.DataFrame) -> None:
    missing = [c for c in RECORD_COLUMNS if c not in records.columns]
    if missing:
        raise MalformedRecordError(f"packet records lack columns {missing}")
    delivered = records["delivery"].notna()
    lost = records["loss_cause"].notna() & (records["loss_cause"].astype(str) != "")
    unresolved = ~(delivered | lost)
    if unresolved.any():
        row = records[unresolved].iloc[0]
        raise MalformedRecordError(f"record {row['class']} {row['origin']}/{row['seq']} has neither delivery nor loss")
    early = delivered & (records["delivery"] < records["birth"])
    if early.any():
        row = records[early].iloc[0]
        raise MalformedRecordError(f"record {row['class']} {row['origin']}/{row['seq']} delivered before birth")


def collapse_copies(records: pd.DataFrame) -> pd.DataFrame:
    """One row per end-to-end packet with its first-arrival delay (NaN when lost)."""
    validate_records(records)
    frame = records.assign(delay=records["delivery"] - records["birth"])
    packets = frame.groupby(["class", "origin", "seq"], as_index=False, sort=True).agg(delay=("delay", "min"))
    packets["delivered"] = packets["delay"].notna()
    return packets


class MetricAccumulator:
    """
    Per-(cell, class, trial) partial sums. Trials fold in one at a time and
    accumulators merge, so aggregation is independent of grouping.
    """

    def __init__(self):
        self._partials: dict[tuple[str, str, int, str, int], _Partial] = {}

    def __len__(self) -> int:
        return len(self._partials)

    def add(self, trial: TrialRecords) -> "MetricAccumulator":
        packets = collapse_copies(trial.records)
        for cls in REPORTED_CLASSES:
            subset = packets[packets["class"] == cls]
            key = (trial.protocol, trial.profile, int(trial.density), cls, int(trial.trial))
            if key in self._partials:
                raise MetricsError(f"trial {trial.trial} of {key[:4]} aggregated twice")
            delivered = subset[subset["delivered"]]
            self._partials[key] = _Partial(len(subset), len(delivered), float(delivered["delay"].sum()))
        return self

    def merge(self, other: "MetricAccumulator") -> "MetricAccumulator":
        merged = MetricAccumulator()
        merged._partials = dict(self._partials)
        for key, partial in other._partials.items():
            if key in merged._partials:
                raise MetricsError(f"trial {key[4]} of {key[:4]} present in both accumulators")
            merged._partials[key] = partial
        return merged

    def rows(self) -> list[MetricRow]:
        if not self._partials:
            return []
        frame = pd.DataFrame(
            [(*key, p.generated, p.delivered, p.delay_sum) for key, p in self._partials.items()],
            columns=GROUP_KEYS + ["trial", "generated", "delivered", "delay_sum"],
        )
        frame = frame[frame["generated"] > 0]
        rows = []
        for (protocol, profile, density, cls), group in frame.groupby(GROUP_KEYS, sort=True):
            generated = int(group["generated"].sum())
            delivered = int(group["delivered"].sum())
            mean_delay = float(group["delay_sum"].sum() / delivered) if delivered else float("nan")
            with_delivery = group[group["delivered"] > 0]
            trial_means = (with_delivery["delay_sum"] / with_delivery["delivered"]).to_numpy()
            delay_std = float(np.std(trial_means, ddof=1)) if len(trial_means) > 1 else 0.0
            rows.append(MetricRow(
                protocol=protocol,
                profile=profile,
                density=int(density),
                packet_class=cls,
                mean_delay_s=mean_delay,
                delay_std_s=delay_std,
                loss_ratio=(generated - delivered) / generated,
                n_packets=generated,
                n_trials=int(group["trial"].nunique()),
            ))
        return rows


def aggregate(trials: Iterable[TrialRecords]) -> list[MetricRow]:
    accumulator = MetricAccumulator()
    for trial in trials:
        accumulator.add(trial)
    return accumulator.rows()


def load_records(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise MalformedRecordError(f"cannot read packet records {path}: {exc}") from exc


def metrics_frame(rows: list[MetricRow]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(r) for r in rows], columns=[
        "protocol", "profile", "density", "packet_class",
        "mean_delay_s", "delay_std_s", "loss_ratio", "n_packets", "n_trials",
    ])
    return frame.rename(columns={"packet_class": "class"})[METRIC_COLUMNS]


def metrics_csv(rows: list[MetricRow]) -> str:
    buffer = io.StringIO()
    metrics_frame(rows).to_csv(buffer, index=False, float_format="%.6f", lineterminator="\n")
    return buffer.getvalue()


def write_metrics(rows: list[MetricRow], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(metrics_csv(rows), encoding="utf-8")
    logger.info("wrote %d metric rows to %s (delay over delivered packets only)", len(rows), path)
    return path


def density_summary(rows: list[MetricRow], profile: Optional[str] = None) -> pd.DataFrame:
    """Delay and loss per density, one column per (metric, protocol, class)."""
    frame = metrics_frame(rows)
    if profile is not None:
        frame = frame[frame["profile"] == profile]
    if frame.empty:
        return frame
    return frame.pivot_table(
        index="density",
        columns=["protocol", "class"],
        values=["mean_delay_s", "loss_ratio"],
        aggfunc="first",
    ).sort_index()
