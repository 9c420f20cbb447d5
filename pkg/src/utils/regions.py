"""
Region definitions shared by the detectors and the event engine

An ROI is a rectangle in frame coordinates tagged with the event kind it
scopes. Rectangles use inclusive pixel bounds: a rect (x, y, w, h) covers
columns x .. x + w - 1 and rows y .. y + h - 1.
"""

from enum import Enum
from typing import Tuple

from pydantic import BaseModel, ConfigDict, field_validator

MIN_ROI_SIDE = 8


class EventKind(str, Enum):
    """The three event kinds a monitor can emit."""

    WATCH_DOG = "WatchDog"
    DANGER_NOTICE = "DangerNotice"
    PHOTO_LINK = "PhotoLink"

    @property
    def is_motion(self) -> bool:
        """Watch-dog and danger-notice share the motion detection path."""
        return self is not EventKind.PHOTO_LINK


class RegionError(ValueError):
    """Raised when a region falls outside the image it is applied to."""


class RoiRegion(BaseModel):
    """A user-selected detection area for one event kind."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int
    kind: EventKind
    rect: Tuple[int, int, int, int]

    @field_validator("rect")
    @classmethod
    def _check_rect(cls, rect: Tuple[int, int, int, int]) -> Tuple[int, int, int, int]:
        x, y, w, h = rect
        if x < 0 or y < 0:
            raise ValueError(f"ROI origin must be non-negative, got ({x}, {y})")
        if w < 1 or h < 1:
            raise ValueError(f"ROI must not be empty, got {w}x{h}")
        return rect

    @property
    def x(self) -> int:
        return self.rect[0]

    @property
    def y(self) -> int:
        return self.rect[1]

    @property
    def width(self) -> int:
        return self.rect[2]

    @property
    def height(self) -> int:
        return self.rect[3]

    @property
    def area(self) -> int:
        return self.width * self.height

    def fits(self, width: int, height: int) -> bool:
        """Check the rectangle lies entirely inside a width x height frame."""
        return self.x + self.width <= width and self.y + self.height <= height

    def require_within(self, width: int, height: int) -> None:
        if not self.fits(width, height):
            raise RegionError(
                f"ROI {self.id} ({self.kind.value}) rect {self.rect} exceeds "
                f"{width}x{height} image"
            )

    def slices(self) -> Tuple[slice, slice]:
        """Row and column slices selecting the ROI from a (height, width) array."""
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)


def box_iou(a: Tuple[int, int, int, int], b: Tuple[int, int, int, int]) -> float:
    """
    Intersection over union of two inclusive-bound boxes (x, y, w, h).

    Returns:
        IoU in [0, 1]; 0.0 when both boxes are empty
    """
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    inter = max(ix, 0) * max(iy, 0)
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union
