"""
simulator.py - Render synthetic frame sequences from scenario scripts

A scenario script declares the frame size, frame count and a list of actors
(moving blobs, pasted rectangles, falling bars). Rendering is deterministic:
the same script always produces the same pixels. expected() derives the
events and posture labels the monitor should produce from actor geometry
and the engine's trigger rules, so rendered scenarios double as golden tests.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Any, Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .detectors.background_model import ForegroundMask
from .detectors.fall_classifier import PatternLabel
from .tools.frame_io import ColorFrame, GrayFrame, to_color, write_frame_file
from .utils.config_loader import CalibrationMode, SentinelConfig, config_loader
from .utils.memory_manager import KnownRectSet
from .utils.regions import EventKind, RoiRegion
from .workflow.event_engine import (
    ONE_MINUTE_MS,
    TEN_FRAMES,
    TriggeredEvent,
    calibration_threshold,
)

logger = logging.getLogger(__name__)

EVENT_SLACK_FRAMES = 2
FALL_ANGLE_DEG = 45.0
EXPECTED_FILE = "expected.tsv"

Box = Tuple[int, int, int, int]


class ScenarioError(ValueError):
    """The scenario script is invalid or outside what expected() models."""


class _Actor(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    intensity: int = Field(ge=0, le=255)


class Waypoint(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frame: int = Field(ge=0)
    x: int
    y: int


class MovingBlob(_Actor):
    """Filled w x h box whose top-left corner follows the waypoints."""

    type: Literal["MovingBlob"] = "MovingBlob"
    size: Tuple[int, int]
    waypoints: List[Waypoint] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_path(self) -> "MovingBlob":
        if min(self.size) < 1:
            raise ValueError(f"blob {self.name} needs a positive size")
        frames = [point.frame for point in self.waypoints]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"blob {self.name} waypoint frames must increase")
        return self

    @property
    def first_frame(self) -> int:
        return self.waypoints[0].frame

    @property
    def last_frame(self) -> int:
        return self.waypoints[-1].frame

    def position(self, frame: int) -> Optional[Tuple[int, int]]:
        """Top-left corner at frame, rounded half up; None when not on screen."""
        if frame < self.first_frame or frame > self.last_frame:
            return None
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if a.frame <= frame <= b.frame:
                span = b.frame - a.frame
                step = frame - a.frame
                return (
                    _round_ratio(a.x * span + (b.x - a.x) * step, span),
                    _round_ratio(a.y * span + (b.y - a.y) * step, span),
                )
        return self.waypoints[-1].x, self.waypoints[-1].y

    def box(self, frame: int) -> Optional[Box]:
        origin = self.position(frame)
        if origin is None:
            return None
        return origin[0], origin[1], self.size[0], self.size[1]


class PastedRect(_Actor):
    """A photo on the wall, optionally rotated about its center."""

    type: Literal["PastedRect"] = "PastedRect"
    rect: Tuple[int, int, int, int]
    angle: float = 0.0
    appear: int = Field(default=0, ge=0)
    remove: Optional[int] = None

    @model_validator(mode="after")
    def _check_span(self) -> "PastedRect":
        if min(self.rect[2:]) < 1:
            raise ValueError(f"rect {self.name} needs a positive size")
        if self.remove is not None and self.remove <= self.appear:
            raise ValueError(f"rect {self.name} is removed before it appears")
        return self

    def visible(self, frame: int) -> bool:
        return self.appear <= frame and (self.remove is None or frame < self.remove)

    def corners(self) -> np.ndarray:
        x, y, w, h = self.rect
        center = (x + (w - 1) / 2.0, y + (h - 1) / 2.0)
        return _rotated_box(center, w / 2.0, h / 2.0, self.angle)

    def bbox(self) -> Box:
        return _pixel_bbox(self.corners())


class FallActor(_Actor):
    """
    A bar standing on its lower end at position, rotating from vertical to
    horizontal between frames start and end.
    """

    type: Literal["FallActor"] = "FallActor"
    bar: Tuple[int, int]
    position: Tuple[int, int]
    start: int = Field(ge=0)
    end: int

    @model_validator(mode="after")
    def _check_span(self) -> "FallActor":
        if min(self.bar) < 1:
            raise ValueError(f"fall actor {self.name} needs a positive bar size")
        if self.end <= self.start:
            raise ValueError(f"fall actor {self.name} must end after it starts")
        return self

    def angle(self, frame: int) -> float:
        """Rotation from vertical in degrees."""
        if frame <= self.start:
            return 0.0
        if frame >= self.end:
            return 90.0
        return 90.0 * (frame - self.start) / (self.end - self.start)

    def label(self, frame: int) -> PatternLabel:
        return PatternLabel.FALL if self.angle(frame) > FALL_ANGLE_DEG else PatternLabel.STAND

    def corners(self, frame: int) -> np.ndarray:
        theta = math.radians(self.angle(frame))
        along = np.array([math.sin(theta), -math.cos(theta)])
        across = np.array([math.cos(theta), math.sin(theta)])
        pivot = np.array(self.position, dtype=np.float64)
        half = self.bar[0] / 2.0
        length = self.bar[1]
        return np.array(
            [
                pivot - half * across,
                pivot + half * across,
                pivot + half * across + length * along,
                pivot - half * across + length * along,
            ]
        )


Actor = Annotated[Union[MovingBlob, PastedRect, FallActor], Field(discriminator="type")]


class ScenarioScript(BaseModel):
    model_config = ConfigDict(extra="forbid")

    width: int = Field(ge=1)
    height: int = Field(ge=1)
    frames: int = Field(ge=0)
    period_ms: int = Field(default=100, ge=1)
    background: int = Field(default=128, ge=0, le=255)
    jitter: int = Field(default=0, ge=0, le=255)
    seed: int = 0
    actors: List[Actor] = Field(default_factory=list)


@dataclass(frozen=True)
class ExpectedEvent:
    kind: EventKind
    roi_id: int
    frame: int

    def window(self, slack: int = EVENT_SLACK_FRAMES) -> Tuple[int, int]:
        return self.frame - slack, self.frame + slack


@dataclass(frozen=True)
class ExpectedLabel:
    frame: int
    actor: str
    label: PatternLabel


@dataclass
class ExpectedOutcome:
    events: List[ExpectedEvent] = field(default_factory=list)
    labels: List[ExpectedLabel] = field(default_factory=list)

    def to_tsv(self) -> str:
        lines = ["record\tframe\tvalue\tsubject"]
        lines += [f"event\t{e.frame}\t{e.kind.value}\t{e.roi_id}" for e in self.events]
        lines += [f"label\t{lab.frame}\t{lab.label.value}\t{lab.actor}" for lab in self.labels]
        return "\n".join(lines) + "\n"


def _round_ratio(numerator: int, denominator: int) -> int:
    """numerator / denominator rounded half up, in exact integer arithmetic."""
    return (2 * numerator + denominator) // (2 * denominator)


def _rotated_box(
    center: Tuple[float, float], half_w: float, half_h: float, angle: float
) -> np.ndarray:
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    offsets = np.array([[-half_w, -half_h], [half_w, -half_h], [half_w, half_h], [-half_w, half_h]])
    rotation = np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    return offsets @ rotation.T + np.asarray(center)


def _pixel_bbox(corners: np.ndarray) -> Box:
    x0 = int(math.ceil(corners[:, 0].min()))
    y0 = int(math.ceil(corners[:, 1].min()))
    x1 = int(math.floor(corners[:, 0].max()))
    y1 = int(math.floor(corners[:, 1].max()))
    return x0, y0, x1 - x0 + 1, y1 - y0 + 1


def polygon_mask(width: int, height: int, corners: np.ndarray) -> np.ndarray:
    """
    Scanline fill of a polygon given in pixel-center coordinates (x, y).

    Rows are sampled at their centers with half-open edge spans, so adjacent
    polygons never share a row; columns between each crossing pair are
    filled inclusively.
    """
    mask = np.zeros((height, width), dtype=bool)
    points = np.asarray(corners, dtype=np.float64)
    count = len(points)
    top = max(int(math.ceil(points[:, 1].min())), 0)
    bottom = min(int(math.ceil(points[:, 1].max())) - 1, height - 1)

    for row in range(top, bottom + 1):
        crossings = []
        for i in range(count):
            x0, y0 = points[i]
            x1, y1 = points[(i + 1) % count]
            if y0 <= row < y1 or y1 <= row < y0:
                crossings.append(x0 + (row - y0) * (x1 - x0) / (y1 - y0))
        crossings.sort()
        for left, right in zip(crossings[::2], crossings[1::2]):
            c0 = max(int(math.ceil(left)), 0)
            c1 = min(int(math.floor(right)), width - 1)
            if c0 <= c1:
                mask[row, c0 : c1 + 1] = True
    return mask


def _box_mask(width: int, height: int, box: Box) -> np.ndarray:
    x, y, w, h = box
    mask = np.zeros((height, width), dtype=bool)
    mask[max(y, 0) : max(y + h, 0), max(x, 0) : max(x + w, 0)] = True
    return mask


def actor_mask(actor: Any, frame: int, width: int, height: int) -> Optional[np.ndarray]:
    """Pixels covered by an actor at frame, or None when it is not on screen."""
    if isinstance(actor, MovingBlob):
        box = actor.box(frame)
        return None if box is None else _box_mask(width, height, box)
    if isinstance(actor, PastedRect):
        if not actor.visible(frame):
            return None
        if actor.angle == 0.0:
            return _box_mask(width, height, actor.rect)
        return polygon_mask(width, height, actor.corners())
    if isinstance(actor, FallActor):
        return polygon_mask(width, height, actor.corners(frame))
    raise TypeError(f"Unknown actor type {type(actor).__name__}")


def _actor_extent(actor: Any, frame: int) -> Optional[Tuple[float, float, float, float]]:
    """(min x, min y, max x, max y) in pixel-edge coordinates."""
    if isinstance(actor, MovingBlob):
        box = actor.box(frame)
        if box is None:
            return None
        x, y, w, h = box
        return x - 0.5, y - 0.5, x + w - 0.5, y + h - 0.5
    corners = actor.corners() if isinstance(actor, PastedRect) else actor.corners(frame)
    return corners[:, 0].min(), corners[:, 1].min(), corners[:, 0].max(), corners[:, 1].max()


def _actor_frames(actor: Any, frames: int) -> range:
    if isinstance(actor, MovingBlob):
        return range(actor.first_frame, min(actor.last_frame, frames - 1) + 1)
    if isinstance(actor, PastedRect):
        end = frames if actor.remove is None else min(actor.remove, frames)
        return range(actor.appear, end)
    return range(frames)


def validate_script(script: ScenarioScript) -> None:
    """
    Check frame spans and frame bounds for every actor.

    Raises:
        ScenarioError: Naming the first offending actor
    """
    if script.frames < 1:
        raise ScenarioError("Scenario has no frames")

    names = [actor.name for actor in script.actors]
    for name in names:
        if names.count(name) > 1:
            raise ScenarioError(f"Actor name {name!r} is used more than once")

    eps = 1e-9
    for actor in script.actors:
        if isinstance(actor, MovingBlob):
            last = actor.last_frame
        elif isinstance(actor, PastedRect):
            last = actor.appear if actor.remove is None else actor.remove - 1
        else:
            last = actor.end
        if last >= script.frames:
            raise ScenarioError(
                f"Actor {actor.name!r} is scheduled at frame {last}, "
                f"but the scenario has {script.frames} frames"
            )

        for frame in _actor_frames(actor, script.frames):
            extent = _actor_extent(actor, frame)
            if extent is None:
                continue
            x0, y0, x1, y1 = extent
            if (
                x0 < -0.5 - eps
                or y0 < -0.5 - eps
                or x1 > script.width - 0.5 + eps
                or y1 > script.height - 0.5 + eps
            ):
                raise ScenarioError(
                    f"Actor {actor.name!r} leaves the {script.width}x{script.height} frame "
                    f"at frame {frame}"
                )


def parse_script(data: Dict[str, Any]) -> ScenarioScript:
    """
    Validate a raw scenario mapping.

    Raises:
        ScenarioError: Schema violation or actor out of bounds
    """
    try:
        script = ScenarioScript.model_validate(data)
    except ValidationError as e:
        raise ScenarioError(f"Invalid scenario: {e}") from e
    validate_script(script)
    return script


def load_script(path: Union[str, Path]) -> ScenarioScript:
    data = config_loader.load_yaml(Path(path), use_cache=False)
    return parse_script(data)


def iter_frames(script: ScenarioScript) -> Iterator[ColorFrame]:
    """
    Rasterize the scenario frame by frame.

    Actors are painted in list order over a uniform background; optional
    jitter is drawn from a generator seeded with the script seed.
    """
    validate_script(script)
    rng = np.random.default_rng(script.seed)
    for index in range(script.frames):
        canvas = np.full((script.height, script.width), script.background, dtype=np.int16)
        for actor in script.actors:
            mask = actor_mask(actor, index, script.width, script.height)
            if mask is not None:
                canvas[mask] = actor.intensity
        if script.jitter:
            canvas += rng.integers(
                -script.jitter, script.jitter + 1, size=canvas.shape, dtype=np.int16
            )
        pixels = np.clip(canvas, 0, 255).astype(np.uint8)
        yield to_color(GrayFrame(pixels, index * script.period_ms))


def render(script: ScenarioScript) -> List[ColorFrame]:
    return list(iter_frames(script))


def render_silhouettes(
    script: ScenarioScript, actors: Optional[Sequence[str]] = None
) -> List[ForegroundMask]:
    """
    Ground-truth foreground masks, one per frame.

    Args:
        script: Scenario to render
        actors: Names of actors to include. Defaults to the fall actors
    """
    validate_script(script)
    if actors is None:
        chosen = [a for a in script.actors if isinstance(a, FallActor)]
    else:
        known = {a.name for a in script.actors}
        missing = [name for name in actors if name not in known]
        if missing:
            raise ScenarioError(f"Unknown actors: {', '.join(missing)}")
        chosen = [a for a in script.actors if a.name in actors]

    masks = []
    for index in range(script.frames):
        bits = np.zeros((script.height, script.width), dtype=bool)
        for actor in chosen:
            mask = actor_mask(actor, index, script.width, script.height)
            if mask is not None:
                bits |= mask
        masks.append(ForegroundMask(bits, index * script.period_ms))
    return masks


def calibration_frames(config: SentinelConfig) -> int:
    """Frames consumed by calibration for a stream starting at timestamp 0."""
    if config.engine.calibration_mode is CalibrationMode.TEN_FRAMES:
        return TEN_FRAMES
    return -(-ONE_MINUTE_MS // config.source.period_ms)


def _overlap(mask: np.ndarray, roi: RoiRegion) -> int:
    return int(np.count_nonzero(mask[roi.slices()]))


def _check_modelled(script: ScenarioScript, config: SentinelConfig, calibration: int) -> None:
    for actor in script.actors:
        for frame in _actor_frames(actor, script.frames):
            mask = actor_mask(actor, frame, script.width, script.height)
            if mask is None:
                continue
            for roi in config.rois:
                area = _overlap(mask, roi)
                if not area:
                    continue
                if roi.kind.is_motion and not isinstance(actor, MovingBlob):
                    raise ScenarioError(
                        f"Actor {actor.name!r} is static inside motion ROI {roi.id}"
                    )
                if roi.kind.is_motion and frame < calibration:
                    raise ScenarioError(
                        f"Actor {actor.name!r} moves through ROI {roi.id} during calibration"
                    )
                if roi.kind is EventKind.PHOTO_LINK and not isinstance(actor, PastedRect):
                    raise ScenarioError(
                        f"Actor {actor.name!r} enters photo-link ROI {roi.id}"
                    )
                if roi.kind is EventKind.PHOTO_LINK and area != int(np.count_nonzero(mask)):
                    raise ScenarioError(
                        f"Actor {actor.name!r} is only partly inside photo-link ROI {roi.id}"
                    )


def expected(script: ScenarioScript, config: SentinelConfig) -> ExpectedOutcome:
    """
    Events and posture labels the monitor should produce for a scenario.

    Motion ROIs calibrate on a static scene, so their threshold is the
    floor; the metric is the number of ROI pixels covered by moving blobs.
    Photo-link detections are the pasted rectangles inside the ROI, passed
    through a fresh novelty memory. Refractory windows apply per kind.

    Raises:
        ScenarioError: Script and config disagree on frame size, or an actor
            does something the oracle does not model
    """
    validate_script(script)
    if (script.width, script.height) != (config.source.width, config.source.height):
        raise ScenarioError(
            f"Scenario is {script.width}x{script.height}, config expects "
            f"{config.source.width}x{config.source.height}"
        )
    calibration = calibration_frames(config)
    _check_modelled(script, config, calibration)

    settings = config.engine
    known = KnownRectSet(settings.novelty_expiry_ms, settings.novelty_iou)
    thresholds = {
        roi.id: calibration_threshold([], roi.area) for roi in config.rois if roi.kind.is_motion
    }
    last_emitted: Dict[EventKind, int] = {}
    outcome = ExpectedOutcome()

    def refractory_clear(kind: EventKind, now: int) -> bool:
        last = last_emitted.get(kind)
        return last is None or now - last >= settings.refractory_ms

    for frame in range(calibration, script.frames):
        now = frame * script.period_ms
        blobs = np.zeros((script.height, script.width), dtype=bool)
        for actor in script.actors:
            if isinstance(actor, MovingBlob):
                mask = actor_mask(actor, frame, script.width, script.height)
                if mask is not None:
                    blobs |= mask

        fired: List[ExpectedEvent] = []
        for roi in config.rois:
            if roi.kind.is_motion:
                if _overlap(blobs, roi) > thresholds[roi.id] and refractory_clear(roi.kind, now):
                    fired.append(ExpectedEvent(roi.kind, roi.id, frame))
            elif refractory_clear(roi.kind, now):
                boxes = [
                    actor.bbox()
                    for actor in script.actors
                    if isinstance(actor, PastedRect) and actor.visible(frame)
                    and _overlap(actor_mask(actor, frame, script.width, script.height), roi)
                ]
                known.prune(now)
                if any(known.observe_frame(boxes, now)):
                    fired.append(ExpectedEvent(roi.kind, roi.id, frame))

        for event in fired:
            last_emitted[event.kind] = now
        outcome.events.extend(fired)

    for actor in script.actors:
        if isinstance(actor, FallActor):
            outcome.labels.extend(
                ExpectedLabel(frame, actor.name, actor.label(frame))
                for frame in range(script.frames)
            )
    return outcome


def match_events(
    actual: Sequence[TriggeredEvent],
    outcome: ExpectedOutcome,
    period_ms: int,
    slack: int = EVENT_SLACK_FRAMES,
) -> Tuple[List[ExpectedEvent], List[TriggeredEvent]]:
    """
    Pair actual events with expected ones by kind, ROI and frame window.

    Returns:
        (expected events with no match, actual events with no match)
    """
    unmatched = list(actual)
    missing = []
    for want in outcome.events:
        low, high = want.window(slack)
        hit = next(
            (
                event
                for event in unmatched
                if event.kind is want.kind
                and event.roi_id == want.roi_id
                and low <= event.timestamp // period_ms <= high
            ),
            None,
        )
        if hit is None:
            missing.append(want)
        else:
            unmatched.remove(hit)
    return missing, unmatched


def write_frames(script: ScenarioScript, out_dir: Union[str, Path]) -> List[Path]:
    """Write numbered P6 files that a directory FrameSource reads back in order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        write_frame_file(frame, out_dir / f"{index:05d}.ppm")
        for index, frame in enumerate(iter_frames(script))
    ]
    logger.info(f"🎬 Rendered {len(paths)} frames to {out_dir}")
    return paths


def write_scenario(
    script: ScenarioScript, config: SentinelConfig, out_dir: Union[str, Path]
) -> ExpectedOutcome:
    """Render frames and the expected.tsv oracle into out_dir."""
    outcome = expected(script, config)
    write_frames(script, out_dir)
    (Path(out_dir) / EXPECTED_FILE).write_text(outcome.to_tsv(), encoding="utf-8")
    logger.info(
        f"📝 Expected {len(outcome.events)} events and {len(outcome.labels)} posture labels"
    )
    return outcome
