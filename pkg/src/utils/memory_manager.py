"""
Rectangle memory for the photo-link novelty filter

Keeps every rectangle that has already been notified, with the time it was
last seen, so a photo left on the wall is reported only once.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .regions import box_iou

logger = logging.getLogger(__name__)

Box = Tuple[int, int, int, int]


@dataclass
class KnownRect:
    box: Box
    first_seen: int
    last_seen: int


class KnownRectSet:
    """Previously notified rectangles, pruned when unseen for expiry_ms."""

    def __init__(self, expiry_ms: int = 600_000, iou_threshold: float = 0.5):
        """
        Initialize the rectangle memory.

        Args:
            expiry_ms: Milliseconds a rectangle may go unseen before it is forgotten
            iou_threshold: Bounding-box IoU at or above which two rectangles are the same
        """
        self.expiry_ms = expiry_ms
        self.iou_threshold = iou_threshold
        self._entries: List[KnownRect] = []

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> Sequence[KnownRect]:
        return tuple(self._entries)

    def find(self, box: Box) -> Optional[KnownRect]:
        """Return the known rectangle matching box, if any."""
        best: Optional[KnownRect] = None
        best_iou = 0.0
        for entry in self._entries:
            iou = box_iou(entry.box, box)
            if iou >= self.iou_threshold and iou > best_iou:
                best, best_iou = entry, iou
        return best

    def observe(self, box: Box, now: int) -> bool:
        """
        Record a sighting of box at time now.

        Returns:
            True if the rectangle was not known before
        """
        entry = self.find(box)
        if entry is not None:
            entry.last_seen = now
            entry.box = box
            return False
        self._entries.append(KnownRect(box=box, first_seen=now, last_seen=now))
        return True

    def observe_frame(self, boxes: Sequence[Box], now: int) -> List[bool]:
        """
        Record all rectangles seen in one frame.

        Each box is judged against the set as it was before the frame, so two
        overlapping detections in the same frame are both new.

        Returns:
            One flag per box, True if it matched no previously known rectangle
        """
        fresh = [self.find(box) is None for box in boxes]
        for box in boxes:
            self.observe(box, now)
        return fresh

    def prune(self, now: int) -> int:
        """
        Forget rectangles unseen for longer than the expiry.

        Returns:
            Number of entries removed
        """
        kept = [e for e in self._entries if now - e.last_seen <= self.expiry_ms]
        removed = len(self._entries) - len(kept)
        if removed:
            logger.debug(f"Forgot {removed} expired rectangle(s)")
        self._entries = kept
        return removed

