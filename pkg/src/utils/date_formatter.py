"""
Timestamp formatting utilities for HomeSentinel
"""

from datetime import datetime, timezone


def now_ms() -> int:
    """Wall-clock time in milliseconds since the Unix epoch."""
    return int(datetime.now(timezone.utc).timestamp() * 1000)


def format_event_timestamp(timestamp_ms: int, wall_clock: bool = False) -> str:
    """
    Render an event timestamp for the event log.

    Args:
        timestamp_ms: Stream-relative or epoch milliseconds
        wall_clock: Whether timestamp_ms is epoch time

    Returns:
        The plain millisecond count for stream-relative time, ISO 8601 otherwise

    Examples:
        >>> format_event_timestamp(12340)
        '12340'
        >>> format_event_timestamp(0, wall_clock=True)
        '1970-01-01T00:00:00.000+00:00'
    """
    if not wall_clock:
        return str(timestamp_ms)
    moment = datetime.fromtimestamp(timestamp_ms / 1000, tz=timezone.utc)
    return moment.isoformat(timespec="milliseconds")
