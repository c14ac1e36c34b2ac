"""
Trial artifacts: the application event trace and the per-packet ledger.

Trace lines look like `t=12.000000 node=3 SEND kind=ALE dst=0 level=D`.
Event names:

    BOOT, CONFIGURED          product lifecycle
    SEND / RECV               application messages (kind, dst / src)
    SAMPLE                    sensor reading (value, level)
    LEVEL                     global level change (level)
    COMMAND                   operator command at the sink (action, target)
    ALE_FAILED                alert abandoned after all retries
    GRADIENT                  node adopted a gradient (round, hc)
    MOVE                      mobile node position (x, y)
    ENERGY_DEPLETED           ledger reached 0 J
"""
from __future__ import annotations

import io
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Optional

import pandas as pd

logger = logging.getLogger(__name__)

PACKET_COLUMNS = ["class", "origin", "seq", "birth", "delivery", "loss_cause", "hops", "path_id"]

LOSS_CAUSES = (
    "queue_overflow",
    "mac_backoff",
    "channel",
    "no_route",
    "ttl",
    "dead_end",
    "no_responders",
    "energy",
    "unresolved",
)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def format_event(t: float, node: int, event: str, fields: dict[str, Any]) -> str:
    parts = [f"t={t:.6f}", f"node={node}", event]
    parts += [f"{k}={_fmt(v)}" for k, v in fields.items()]
    return " ".join(parts)


class TraceLog:
    """In-memory, append-only application trace."""

    def __init__(self):
        self.lines: list[str] = []

    def emit(self, t: float, node: int, event: str, **fields: Any) -> None:
        self.lines.append(format_event(t, node, event, fields))

    def __len__(self) -> int:
        return len(self.lines)

    def __iter__(self):
        return iter(self.lines)

    def text(self) -> str:
        return "\n".join(self.lines) + ("\n" if self.lines else "")

    def write(self, path: Path) -> None:
        path.write_text(self.text(), encoding="utf-8")


def parse_trace_line(line: str) -> tuple[Optional[float], int, str, dict[str, str]]:
    """Split a trace (or golden) line into time, node, event and fields."""
    t: Optional[float] = None
    node: Optional[int] = None
    event: Optional[str] = None
    fields: dict[str, str] = {}
    for token in line.split():
        if "=" in token:
            key, value = token.split("=", 1)
            if key == "t" and event is None:
                t = float(value)
            elif key == "node" and event is None:
                node = int(value)
            else:
                fields[key] = value
        elif event is None:
            event = token
    if node is None or event is None:
        raise ValueError(f"not a trace line: {line!r}")
    return t, node, event, fields


@dataclass
class PacketRecord:
    cls: str
    origin: int
    seq: int
    birth: float
    delivery: Optional[float] = None
    loss_cause: Optional[str] = None
    hops: int = 0
    path_id: int = 0

    @property
    def resolved(self) -> bool:
        return self.delivery is not None or self.loss_cause is not None


class PacketLedger:
    """One record per routed copy: (class, origin, seq, path_id)."""

    def __init__(self):
        self._records: dict[tuple[str, int, int, int], PacketRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def born(self, cls: str, origin: int, seq: int, birth: float, path_id: int = 0) -> PacketRecord:
        record = PacketRecord(cls, origin, seq, birth, path_id=path_id)
        self._records[(cls, origin, seq, path_id)] = record
        return record

    def get(self, cls: str, origin: int, seq: int, path_id: int = 0) -> Optional[PacketRecord]:
        return self._records.get((cls, origin, seq, path_id))

    def delivered(self, cls: str, origin: int, seq: int, path_id: int, now: float, hops: int) -> None:
        record = self.get(cls, origin, seq, path_id)
        if record is None or record.resolved:
            return
        record.delivery = now
        record.hops = hops

    def lost(self, cls: str, origin: int, seq: int, path_id: int, cause: str, hops: int = 0) -> None:
        if cause not in LOSS_CAUSES:
            raise ValueError(f"unknown loss cause {cause!r}")
        record = self.get(cls, origin, seq, path_id)
        if record is None or record.resolved:
            return
        record.loss_cause = cause
        record.hops = hops

    def finalize(self) -> int:
        """Mark every unresolved copy as lost; returns how many were."""
        count = 0
        for record in self._records.values():
            if not record.resolved:
                record.loss_cause = "unresolved"
                count += 1
        return count

    def records(self) -> list[PacketRecord]:
        return list(self._records.values())

    def to_frame(self) -> pd.DataFrame:
        rows = [asdict(r) for r in self._records.values()]
        frame = pd.DataFrame(rows, columns=["cls", "origin", "seq", "birth", "delivery", "loss_cause", "hops", "path_id"])
        return frame.rename(columns={"cls": "class"})[PACKET_COLUMNS]

    def csv_text(self) -> str:
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, float_format="%.6f", lineterminator="\n")
        return buffer.getvalue()

    def write(self, path: Path) -> None:
        path.write_text(self.csv_text(), encoding="utf-8")


def read_packet_csv(source) -> pd.DataFrame:
    return pd.read_csv(source)


def trace_subsequence(lines: Iterable[str], expected: Iterable[str]) -> tuple[bool, int]:
    """
    Check that `expected` (golden lines without timestamps) appears in order
    inside the trace. Returns (ok, index of the first unmatched expectation).
    """
    wanted = [parse_trace_line(e) for e in expected]
    position = 0
    for line in lines:
        if position == len(wanted):
            break
        _, node, event, fields = parse_trace_line(line)
        _, w_node, w_event, w_fields = wanted[position]
        if node == w_node and event == w_event and all(fields.get(k) == v for k, v in w_fields.items()):
            position += 1
    return position == len(wanted), position
