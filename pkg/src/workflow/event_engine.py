"""
Event engine - Calibrate ROI thresholds and turn frames into triggered events

Watch-dog and danger-notice ROIs fire when the foreground area exceeds the
threshold learned during calibration; the photo-link ROI fires when a
rectangle that has not been seen recently appears. Every kind has its own
refractory period.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..detectors.background_model import BackgroundModel, ForegroundMask, foreground_area
from ..detectors.shape_detector import Quadrilateral, detect_rectangles
from ..tools.frame_io import ColorFrame, FrameDimensionError, GrayFrame
from ..utils.config_loader import (
    BackgroundParams,
    CalibrationMode,
    EngineSettings,
    ShapeParams,
    validate_roi_layout,
)
from ..utils.memory_manager import KnownRectSet
from ..utils.regions import EventKind, RoiRegion

logger = logging.getLogger(__name__)

TEN_FRAMES = 10
ONE_MINUTE_MS = 60_000
THRESHOLD_FLOOR_FRACTION = 0.005


@dataclass(frozen=True)
class TriggeredEvent:
    kind: EventKind
    roi_id: int
    timestamp: int
    metric: int
    rectangles: Tuple[Quadrilateral, ...] = ()
    threshold: Optional[float] = None


@dataclass
class CalibrationState:
    mode: CalibrationMode
    samples: Dict[int, List[int]] = field(default_factory=dict)
    frames: int = 0
    first_timestamp: Optional[int] = None
    complete: bool = False


@dataclass(frozen=True)
class CalibrationProgress:
    frames: int
    complete: bool
    consumed: bool = True


def calibration_threshold(samples: Sequence[int], roi_area: int) -> float:
    """max(floor, mean + 3 * population std) with floor = 0.005 * ROI area."""
    floor = THRESHOLD_FLOOR_FRACTION * roi_area
    if not samples:
        return floor
    values = np.asarray(samples, dtype=np.float64)
    return max(floor, float(values.mean() + 3.0 * values.std()))


def novelty_filter(
    detected: Sequence[Quadrilateral], known: KnownRectSet, now: int
) -> List[Quadrilateral]:
    """
    Keep detections whose bounding box matches no rectangle known before this frame.

    Every detection refreshes or joins the known set; expired entries are
    dropped first.
    """
    known.prune(now)
    fresh = known.observe_frame([quad.bbox for quad in detected], now)
    return [quad for quad, new in zip(detected, fresh) if new]


class EventEngine:
    """Sequential per-frame state machine: calibration, then detection."""

    def __init__(
        self,
        rois: Sequence[RoiRegion],
        width: int,
        height: int,
        background: Optional[BackgroundParams] = None,
        shape: Optional[ShapeParams] = None,
        settings: Optional[EngineSettings] = None,
    ):
        """
        Configure the engine.

        Raises:
            ConfigurationError: Invalid ROI layout or frame dimensions
        """
        validate_roi_layout(list(rois), width, height)
        self.rois = list(rois)
        self.width = width
        self.height = height
        self.shape = shape or ShapeParams()
        self.settings = settings or EngineSettings()
        self.model = BackgroundModel(width, height, background)

        self.calibration = CalibrationState(
            mode=self.settings.calibration_mode,
            samples={roi.id: [] for roi in self.rois if roi.kind.is_motion},
        )
        self.thresholds: Dict[int, float] = {}
        self.known = KnownRectSet(self.settings.novelty_expiry_ms, self.settings.novelty_iou)
        self._last_emitted: Dict[EventKind, int] = {}
        self.last_mask: Optional[ForegroundMask] = None

        self._trace_file: Optional[IO[str]] = None
        self._trace: Optional[Any] = None
        if self.settings.trace_csv is not None:
            Path(self.settings.trace_csv).parent.mkdir(parents=True, exist_ok=True)
            self._trace_file = open(self.settings.trace_csv, "w", newline="", encoding="utf-8")
            self._trace = csv.writer(self._trace_file, lineterminator="\n")
            self._trace.writerow(["frame_ts", "roi_id", "metric", "threshold"])

        logger.info(
            f"🎯 Engine configured: {len(self.rois)} ROIs, {width}x{height}, "
            f"calibration {self.calibration.mode.value}"
        )

    @property
    def calibrating(self) -> bool:
        return not self.calibration.complete

    def process(self, gray: GrayFrame, color: ColorFrame) -> List[TriggeredEvent]:
        """Route a frame to calibration or detection."""
        if self.calibrating:
            progress = self.calibrate_step(gray)
            if progress.complete and not progress.consumed:
                return self.step(gray, color)
            return []
        return self.step(gray, color)

    def calibrate_step(self, gray: GrayFrame) -> CalibrationProgress:
        """
        Sample motion ROI foreground areas for the calibration window.

        In OneMinute mode the first frame at or past the window end finishes
        calibration without being consumed.
        """
        state = self.calibration
        if state.complete:
            return CalibrationProgress(state.frames, True, consumed=False)

        if state.mode is CalibrationMode.ONE_MINUTE:
            if state.first_timestamp is None:
                state.first_timestamp = gray.timestamp
            elif gray.timestamp - state.first_timestamp >= ONE_MINUTE_MS:
                self._finish_calibration()
                return CalibrationProgress(state.frames, True, consumed=False)

        self._check_dimensions(gray)
        mask = self.model.apply(gray)
        self.last_mask = mask
        for roi in self.rois:
            if roi.kind.is_motion:
                state.samples[roi.id].append(foreground_area(mask, roi))
        state.frames += 1

        if state.mode is CalibrationMode.TEN_FRAMES and state.frames >= TEN_FRAMES:
            self._finish_calibration()
        return CalibrationProgress(state.frames, state.complete)

    def _finish_calibration(self) -> None:
        state = self.calibration
        for roi in self.rois:
            if roi.kind.is_motion:
                self.thresholds[roi.id] = calibration_threshold(state.samples[roi.id], roi.area)
        state.complete = True
        summary = ", ".join(f"ROI {rid}: {t:.1f}" for rid, t in self.thresholds.items())
        logger.info(
            f"✅ Calibration complete after {state.frames} frames ({summary or 'no motion ROIs'})"
        )

    def finish_calibration(self) -> None:
        """Close the calibration window early, e.g. when the source ends."""
        if not self.calibration.complete:
            self._finish_calibration()

    def set_threshold(self, roi_id: int, threshold: float) -> None:
        if roi_id not in self.thresholds:
            raise KeyError(f"No motion threshold for ROI {roi_id}")
        self.thresholds[roi_id] = threshold

    def _check_dimensions(self, gray: GrayFrame) -> None:
        if gray.width != self.width or gray.height != self.height:
            raise FrameDimensionError(
                f"Frame is {gray.width}x{gray.height}, engine expects {self.width}x{self.height}"
            )

    def _refractory_clear(self, kind: EventKind, now: int) -> bool:
        last = self._last_emitted.get(kind)
        return last is None or now - last >= self.settings.refractory_ms

    def step(self, gray: GrayFrame, color: ColorFrame) -> List[TriggeredEvent]:
        """
        Advance the background model one frame and emit triggered events.

        Raises:
            FrameDimensionError: Frame size differs from the configured size
        """
        if self.calibrating:
            raise RuntimeError("step() called before calibration completed")
        self._check_dimensions(gray)
        if color.width != self.width or color.height != self.height:
            raise FrameDimensionError("Color frame does not match the gray frame size")

        now = gray.timestamp
        mask = self.model.apply(gray)
        self.last_mask = mask
        events: List[TriggeredEvent] = []

        for roi in self.rois:
            if roi.kind.is_motion:
                metric = foreground_area(mask, roi)
                threshold = self.thresholds[roi.id]
                if self._trace is not None:
                    self._trace.writerow([now, roi.id, metric, f"{threshold:.3f}"])
                if metric > threshold and self._refractory_clear(roi.kind, now):
                    events.append(
                        TriggeredEvent(roi.kind, roi.id, now, metric, threshold=threshold)
                    )
            elif self._refractory_clear(roi.kind, now):
                fresh = novelty_filter(detect_rectangles(gray, roi, self.shape), self.known, now)
                if fresh:
                    events.append(TriggeredEvent(roi.kind, roi.id, now, len(fresh), tuple(fresh)))

        for event in events:
            self._last_emitted[event.kind] = event.timestamp
            logger.debug(f"Event {event.kind.value} ROI {event.roi_id} at {now} ms: {event.metric}")
        return events

    def close(self) -> None:
        if self._trace_file is not None:
            self._trace_file.close()
            self._trace_file = None
            self._trace = None

    def __enter__(self) -> "EventEngine":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def configure(
    rois: Sequence[RoiRegion],
    width: int,
    height: int,
    background: Optional[BackgroundParams] = None,
    shape: Optional[ShapeParams] = None,
    settings: Optional[EngineSettings] = None,
) -> EventEngine:
    return EventEngine(rois, width, height, background, shape, settings)
