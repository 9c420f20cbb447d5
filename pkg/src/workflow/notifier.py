"""
Notifier - Voice alerts for danger-notice events and social messages for photo-link events

Commands are created on the pipeline thread under per-kind suppression
windows keyed on event timestamps, then delivered by a background worker
from a bounded queue so a slow webhook never stalls frame processing.
"""

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Deque, Dict, List, Optional, Protocol, Union

from .event_engine import TriggeredEvent
from ..utils.config_loader import NotificationPolicy, NotificationSettings
from ..utils.regions import EventKind

logger = logging.getLogger(__name__)

NOTIFY_LOG_NAME = "notify.log"


class Transport(Protocol):
    def send(self, message: str, image: bytes, event_ts: int) -> Dict[str, Any]: ...


class VoiceSink(Protocol):
    def emit(self, event_ts: int) -> Dict[str, Any]: ...


class AlertKind(str, Enum):
    VOICE_ALERT = "VoiceAlert"
    SOCIAL_MESSAGE = "SocialMessage"


class DeliveryStatus(str, Enum):
    DELIVERED = "delivered"
    FAILED = "failed"
    DEADLINE_MISSED = "deadline_missed"


_ALERT_FOR_EVENT = {
    EventKind.DANGER_NOTICE: AlertKind.VOICE_ALERT,
    EventKind.PHOTO_LINK: AlertKind.SOCIAL_MESSAGE,
}


@dataclass(frozen=True)
class AlertCommand:
    kind: AlertKind
    event: TriggeredEvent
    message: Optional[str] = None
    snapshot: Optional[Path] = None
    enqueued_at: float = 0.0


@dataclass(frozen=True)
class DeliveryResult:
    command: AlertCommand
    status: DeliveryStatus
    attempts: int
    error: Optional[str] = None

    @property
    def delivered(self) -> bool:
        return self.status is DeliveryStatus.DELIVERED

    def to_line(self) -> str:
        return (
            f"{self.command.event.timestamp}\t{self.command.kind.value}\t"
            f"{self.status.value}\t{self.attempts}\n"
        )


def deliver_social(
    command: AlertCommand,
    transport: Transport,
    policy: NotificationPolicy,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
) -> DeliveryResult:
    """
    Send a social message, retrying with backoff within the delivery deadline.

    Never raises; transport failures become a failed result.
    """
    if command.kind is not AlertKind.SOCIAL_MESSAGE:
        raise ValueError(f"deliver_social needs a SocialMessage command, got {command.kind.value}")

    try:
        image = command.snapshot.read_bytes() if command.snapshot is not None else b""
    except OSError as e:
        logger.error(f"❌ Cannot read snapshot {command.snapshot}: {e}")
        return DeliveryResult(command, DeliveryStatus.FAILED, 0, str(e))

    deadline = command.enqueued_at + policy.deadline_s
    attempts = 0
    error: Optional[str] = None
    for attempt in range(policy.max_retries + 1):
        if clock() > deadline:
            return DeliveryResult(command, DeliveryStatus.DEADLINE_MISSED, attempts, error)
        attempts += 1
        try:
            result = transport.send(command.message or "", image, command.event.timestamp)
        except Exception as e:
            result = {"success": False, "error": str(e)}
        if result.get("success"):
            return DeliveryResult(command, DeliveryStatus.DELIVERED, attempts)
        error = result.get("error", "unknown error")
        logger.warning(f"Delivery attempt {attempts} failed: {error}")

        if attempt < policy.max_retries:
            delay = policy.backoff_for(attempt)
            if clock() + delay > deadline:
                return DeliveryResult(command, DeliveryStatus.DEADLINE_MISSED, attempts, error)
            sleep(delay)

    logger.error(f"❌ Social message for event at {command.event.timestamp} failed")
    return DeliveryResult(command, DeliveryStatus.FAILED, attempts, error)


def emit_voice(command: AlertCommand, sink: VoiceSink) -> DeliveryResult:
    """Invoke the alert sink exactly once; failures are reported, not raised."""
    if command.kind is not AlertKind.VOICE_ALERT:
        raise ValueError(f"emit_voice needs a VoiceAlert command, got {command.kind.value}")
    try:
        result = sink.emit(command.event.timestamp)
    except Exception as e:
        logger.error(f"Voice sink raised: {e}")
        result = {"success": False, "error": str(e)}
    if result.get("success"):
        return DeliveryResult(command, DeliveryStatus.DELIVERED, 1)
    return DeliveryResult(command, DeliveryStatus.FAILED, 1, result.get("error"))


class Notifier:
    """Suppression, bounded queue and background delivery of alert commands."""

    def __init__(
        self,
        settings: Optional[NotificationSettings] = None,
        transport: Optional[Transport] = None,
        voice_sink: Optional[VoiceSink] = None,
        log_dir: Union[str, Path, None] = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.settings = settings or NotificationSettings()
        self.policy = self.settings.policy
        self.transport = transport
        self.voice_sink = voice_sink
        self.log_path = Path(log_dir) / NOTIFY_LOG_NAME if log_dir is not None else None
        self.clock = clock
        self.sleep = sleep

        self._queue: Deque[AlertCommand] = deque()
        self._cond = threading.Condition()
        self._busy = False
        self._stopping = False
        self._worker: Optional[threading.Thread] = None
        self._last_command: Dict[AlertKind, int] = {}
        self.dropped = 0
        self.results: List[DeliveryResult] = []

    def create_command(
        self, event: TriggeredEvent, snapshot: Optional[Path] = None
    ) -> Optional[AlertCommand]:
        """
        Turn an event into a command unless it is record-only or suppressed.

        Returns:
            The command, or None for watch-dog events and suppressed events
        """
        kind = _ALERT_FOR_EVENT.get(event.kind)
        if kind is None:
            return None

        window_ms = (
            self.policy.social_window_s
            if kind is AlertKind.SOCIAL_MESSAGE
            else self.policy.voice_window_s
        ) * 1000
        last = self._last_command.get(kind)
        if last is not None and event.timestamp - last < window_ms:
            logger.debug(f"Suppressed {kind.value} for event at {event.timestamp} ms")
            return None
        self._last_command[kind] = event.timestamp

        message = self.settings.message if kind is AlertKind.SOCIAL_MESSAGE else None
        return AlertCommand(kind, event, message, snapshot, enqueued_at=self.clock())

    def enqueue(
        self, event: TriggeredEvent, snapshot: Optional[Path] = None
    ) -> Optional[AlertCommand]:
        """Create a command and queue it for delivery; drops the oldest on overflow."""
        command = self.create_command(event, snapshot)
        if command is None:
            return None
        with self._cond:
            if len(self._queue) >= self.policy.queue_size:
                dropped = self._queue.popleft()
                self.dropped += 1
                logger.warning(
                    f"Notification queue full, dropped {dropped.kind.value} "
                    f"for event at {dropped.event.timestamp} ({self.dropped} dropped so far)"
                )
            self._queue.append(command)
            self._cond.notify()
        return command

    def pending(self) -> int:
        with self._cond:
            return len(self._queue)

    def deliver(self, command: AlertCommand) -> DeliveryResult:
        if command.kind is AlertKind.SOCIAL_MESSAGE:
            if self.transport is None:
                result = DeliveryResult(
                    command, DeliveryStatus.FAILED, 0, "no webhook transport configured"
                )
            else:
                result = deliver_social(
                    command, self.transport, self.policy, clock=self.clock, sleep=self.sleep
                )
        elif self.voice_sink is None:
            result = DeliveryResult(command, DeliveryStatus.FAILED, 0, "no voice sink configured")
        else:
            result = emit_voice(command, self.voice_sink)
        self._log_result(result)
        return result

    def _log_result(self, result: DeliveryResult) -> None:
        with self._cond:
            self.results.append(result)
        logger.info(
            f"📬 {result.command.kind.value} for event at {result.command.event.timestamp}: "
            f"{result.status.value} after {result.attempts} attempt(s)"
        )
        if self.log_path is None:
            return
        try:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, "a", encoding="utf-8", newline="\n") as f:
                f.write(result.to_line())
        except OSError as e:
            logger.error(f"Cannot write {self.log_path}: {e}")

    def deliver_pending(self) -> List[DeliveryResult]:
        """Deliver everything queued on the calling thread."""
        delivered = []
        while True:
            with self._cond:
                if not self._queue:
                    return delivered
                command = self._queue.popleft()
            delivered.append(self.deliver(command))

    def start(self) -> None:
        if self._worker is not None:
            return
        self._stopping = False
        self._worker = threading.Thread(target=self._run, name="notifier", daemon=True)
        self._worker.start()

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._queue and not self._stopping:
                    self._cond.wait()
                if not self._queue and self._stopping:
                    return
                command = self._queue.popleft()
                self._busy = True
            try:
                self.deliver(command)
            except Exception as e:
                logger.error(f"Unexpected delivery failure: {e}", exc_info=True)
            finally:
                with self._cond:
                    self._busy = False
                    self._cond.notify_all()

    def drain(self, timeout: Optional[float] = None) -> bool:
        """
        Wait until the queue is empty and no delivery is running.

        Returns:
            True if drained before the timeout
        """
        if self._worker is None:
            self.deliver_pending()
            return True
        with self._cond:
            return self._cond.wait_for(lambda: not self._queue and not self._busy, timeout)

    def close(self, timeout: Optional[float] = None) -> None:
        """Deliver what is queued, then stop the worker."""
        drained = self.drain(timeout)
        if not drained:
            logger.warning(f"Notifier closed with {self.pending()} undelivered command(s)")
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
        if self._worker is not None:
            self._worker.join(timeout)
            self._worker = None
