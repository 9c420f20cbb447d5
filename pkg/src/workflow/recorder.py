"""
Event recorder - Persist triggered events and summarize event logs

Each event becomes a P6 snapshot plus one tab-separated line in events.log:
timestamp, kind, ROI id, metric, snapshot file name. Failed writes are kept
in a bounded retry queue and replayed before the next record.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import Deque, Dict, List, Optional, Tuple, Union

from .event_engine import TriggeredEvent
from ..tools.frame_io import ColorFrame, encode_pnm
from ..utils.date_formatter import format_event_timestamp
from ..utils.regions import EventKind

logger = logging.getLogger(__name__)

EVENT_LOG_NAME = "events.log"
RETRY_QUEUE_SIZE = 1024


class RecorderError(OSError):
    """An event could not be written; it stays queued for retry."""


@dataclass(frozen=True)
class EventRecord:
    kind: EventKind
    roi_id: int
    timestamp: str
    metric: int
    snapshot: str

    def to_line(self) -> str:
        fields = (self.timestamp, self.kind.value, self.roi_id, self.metric, self.snapshot)
        return "\t".join(str(f) for f in fields) + "\n"


def snapshot_name(event: TriggeredEvent) -> str:
    return f"{event.kind.value}_{event.timestamp}.ppm"


class Recorder:
    """Single-writer event log with one snapshot per event."""

    def __init__(self, output_dir: Union[str, Path], wall_clock: bool = False):
        self.output_dir = Path(output_dir)
        self.wall_clock = wall_clock
        self.log_path = self.output_dir / EVENT_LOG_NAME
        self.pending: Deque[Tuple[TriggeredEvent, ColorFrame]] = deque(maxlen=RETRY_QUEUE_SIZE)
        self.recorded = 0

    def record(self, event: TriggeredEvent, frame: ColorFrame) -> EventRecord:
        """
        Write the snapshot, then append the log line.

        Raises:
            RecorderError: Disk write failed; the event is queued for retry
        """
        if self.pending and not self.flush_pending():
            self._enqueue(event, frame)
            raise RecorderError(
                f"Recorder backlog of {len(self.pending)} events could not be flushed"
            )
        try:
            return self._write(event, frame)
        except OSError as e:
            self._enqueue(event, frame)
            logger.error(f"❌ Failed to record {event.kind.value} at {event.timestamp}: {e}")
            raise RecorderError(f"Failed to record event at {event.timestamp}: {e}") from e

    def _enqueue(self, event: TriggeredEvent, frame: ColorFrame) -> None:
        if len(self.pending) == self.pending.maxlen:
            dropped, _ = self.pending[0]
            logger.warning(f"Retry queue full, dropping event at {dropped.timestamp}")
        self.pending.append((event, frame))

    def _write(self, event: TriggeredEvent, frame: ColorFrame) -> EventRecord:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        name = snapshot_name(event)
        (self.output_dir / name).write_bytes(encode_pnm(frame))
        record = EventRecord(
            kind=event.kind,
            roi_id=event.roi_id,
            timestamp=format_event_timestamp(event.timestamp, self.wall_clock),
            metric=event.metric,
            snapshot=name,
        )
        with open(self.log_path, "a", encoding="utf-8", newline="\n") as f:
            f.write(record.to_line())
        self.recorded += 1
        return record

    def flush_pending(self) -> bool:
        """
        Retry queued events in order.

        Returns:
            True when the queue is empty afterwards
        """
        while self.pending:
            event, frame = self.pending[0]
            try:
                self._write(event, frame)
            except OSError as e:
                logger.warning(f"Retry of queued event at {event.timestamp} failed: {e}")
                return False
            self.pending.popleft()
        return True

    def close(self) -> None:
        if not self.flush_pending():
            logger.error(f"❌ {len(self.pending)} events left unrecorded at shutdown")


@dataclass
class KindStats:
    events: int = 0
    images: int = 0


@dataclass
class EventStats:
    """Per-kind counts and per-day averages over an experiment period."""

    days: int
    kinds: Dict[EventKind, KindStats] = field(
        default_factory=lambda: {kind: KindStats() for kind in EventKind}
    )
    malformed: int = 0

    def average(self, kind: EventKind) -> Fraction:
        return Fraction(self.kinds[kind].events, self.days)

    def average_text(self, kind: EventKind) -> str:
        return format_average(self.average(kind))


def format_average(value: Fraction) -> str:
    """Render an exact ratio with two decimals, rounding half up."""
    with localcontext() as ctx:
        ctx.prec = 50
        quotient = Decimal(value.numerator) / Decimal(value.denominator)
        return str(quotient.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def parse_log_line(line: str) -> Optional[EventRecord]:
    parts = line.split("\t")
    if len(parts) != 5:
        return None
    timestamp, kind, roi_id, metric, snapshot = parts
    try:
        return EventRecord(EventKind(kind), int(roi_id), timestamp, int(metric), snapshot)
    except ValueError:
        return None


def read_records(log_path: Union[str, Path]) -> Tuple[List[EventRecord], int]:
    """
    Parse the complete lines of an event log.

    A trailing line without a newline is still being written and is ignored.

    Returns:
        Parsed records and the number of malformed lines
    """
    text = Path(log_path).read_text(encoding="utf-8")
    lines = text.split("\n")[:-1]
    records: List[EventRecord] = []
    malformed = 0
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = parse_log_line(line)
        if record is None:
            malformed += 1
            logger.warning(f"Skipping malformed line {number} in {log_path}")
            continue
        records.append(record)
    return records, malformed


def summarize(log_path: Union[str, Path], days: int) -> EventStats:
    """
    Count events and snapshots per kind.

    Raises:
        ValueError: days is not positive
        FileNotFoundError: Log does not exist
    """
    if days <= 0:
        raise ValueError(f"Experiment days must be positive, got {days}")
    records, malformed = read_records(log_path)
    stats = EventStats(days=days, malformed=malformed)
    for record in records:
        entry = stats.kinds[record.kind]
        entry.events += 1
        if record.snapshot:
            entry.images += 1
    return stats


_TABLE_LABELS = {
    EventKind.WATCH_DOG: "watch dog",
    EventKind.DANGER_NOTICE: "danger notice",
    EventKind.PHOTO_LINK: "photo link",
}


def render_table(stats: EventStats) -> str:
    """Event record table: days, then count, images and average per kind."""
    rows: List[Tuple[str, str]] = [("Experiment days", str(stats.days))]
    for kind, label in _TABLE_LABELS.items():
        entry = stats.kinds[kind]
        rows.append((f"Number of {label} event", str(entry.events)))
        rows.append((f"Number of images in {label} event", str(entry.images)))
        rows.append((f"Average {label} event", stats.average_text(kind)))
    width = max(len(name) for name, _ in rows)
    lines = [f"{name:<{width}}  {value}" for name, value in rows]
    if stats.malformed:
        lines.append(f"({stats.malformed} malformed lines skipped)")
    return "\n".join(lines)
