"""
Monitor pipeline - Frame source to events, records and notifications

Reads every frame from the configured source, lets the event engine
calibrate and detect, records each event and hands recorded danger-notice
and photo-link events to the notifier.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .event_engine import EventEngine, TriggeredEvent
from .notifier import Notifier
from .recorder import Recorder, RecorderError
from ..tools.frame_io import FrameSource
from ..tools.voice_alert_tool import CommandVoiceSink
from ..tools.webhook_tool import WebhookTransport
from ..utils.config_loader import SentinelConfig
from ..utils.date_formatter import now_ms
from ..utils.regions import EventKind

logger = logging.getLogger(__name__)

NOTIFIER_DRAIN_TIMEOUT_S = 30.0


@dataclass
class RunSummary:
    frames: int = 0
    events: List[TriggeredEvent] = field(default_factory=list)
    record_failures: int = 0
    calibrated: bool = False

    def counts(self) -> Dict[EventKind, int]:
        totals = {kind: 0 for kind in EventKind}
        for event in self.events:
            totals[event.kind] += 1
        return totals

    def render(self) -> str:
        return "\n".join(f"{kind.value}: {count}" for kind, count in self.counts().items())


def build_notifier(config: SentinelConfig, output_dir: Path) -> Notifier:
    settings = config.notification
    transport = (
        WebhookTransport(settings.webhook_url, timeout_s=settings.timeout_s)
        if settings.webhook_url
        else None
    )
    voice_sink = CommandVoiceSink(settings.voice_command) if settings.voice_command else None
    return Notifier(settings, transport=transport, voice_sink=voice_sink, log_dir=output_dir)


def run_monitor(
    config: SentinelConfig,
    wall_clock: bool = False,
    notifier: Optional[Notifier] = None,
    source: Optional[FrameSource] = None,
) -> RunSummary:
    """
    Process the whole source.

    Args:
        config: Validated monitor configuration
        wall_clock: Offset timestamps by the current time and log ISO timestamps
        notifier: Notifier to use instead of one built from the config
        source: Frame source to use instead of the configured one

    Raises:
        FrameReadError: A frame could not be read
        FrameDimensionError: Frames do not match the configured resolution
    """
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if source is None:
        source = FrameSource(
            config.source.path,
            period_ms=config.source.period_ms,
            start_ms=now_ms() if wall_clock else 0,
        )

    engine = EventEngine(
        config.rois,
        config.source.width,
        config.source.height,
        background=config.background,
        shape=config.shape,
        settings=config.engine,
    )
    recorder = Recorder(output_dir, wall_clock=wall_clock)
    if notifier is None:
        notifier = build_notifier(config, output_dir)
    notifier.start()

    summary = RunSummary()
    logger.info(f"🚀 Monitoring {config.source.path}")
    try:
        for color, gray in source:
            summary.frames += 1
            for event in engine.process(gray, color):
                summary.events.append(event)
                try:
                    record = recorder.record(event, color)
                except RecorderError as e:
                    summary.record_failures += 1
                    logger.error(f"Event not recorded, notification skipped: {e}")
                    continue
                notifier.enqueue(event, output_dir / record.snapshot)
    finally:
        summary.calibrated = not engine.calibrating
        engine.close()
        recorder.close()
        notifier.close(NOTIFIER_DRAIN_TIMEOUT_S)

    logger.info(f"✅ Processed {summary.frames} frames, {len(summary.events)} events")
    return summary
